import numpy as np
import pytest

from nilm_rbm.rbm import RbmParameters


def random_params(rng, n_visible=3, n_hidden=2, n_labels=2, scale=1.0):
    return RbmParameters(
        W=rng.normal(0, scale, (n_hidden, n_visible)),
        U=rng.normal(0, scale, (n_hidden, n_labels)),
        a=rng.normal(0, scale, n_visible),
        b=rng.normal(0, scale, n_hidden),
        c=rng.normal(0, scale, n_labels),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
