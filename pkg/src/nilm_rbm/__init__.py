"""Multi-label RBM toolkit for non-intrusive load monitoring."""

from nilm_rbm.rbm import MfResult, RbmParameters, TrainConfig

__all__ = ["MfResult", "RbmParameters", "TrainConfig"]
__version__ = "0.1.0"
