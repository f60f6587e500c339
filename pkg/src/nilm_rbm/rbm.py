"""Multi-label classification RBM.

Energy over visible ``x`` (real, in [0, 1]), binary labels ``y`` and binary
hiddens ``h``::

    E(y, x, h) = -h.W.x - a.x - b.h - c.y - h.U.y

``W`` is ``(n_hidden, n_visible)`` and ``U`` is ``(n_hidden, n_labels)``.
All conditionals accept a single vector or a batch (rows are samples).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from nilm_rbm.numerics import Rng, bernoulli_sample, make_rng, sigmoid, softmax

MAX_ENUM_UNITS = 20
MF_TOL = 1e-6
MF_MAX_ITER = 100
INIT_SCALE = 0.01
FORMAT_VERSION = 1

# rng streams derived from TrainConfig.seed
_INIT_STREAM = 0
_TRAIN_STREAM = 1


class InferenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class RbmParameters:
    W: np.ndarray
    U: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        for name in ("W", "U", "a", "b", "c"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n_hidden, n_visible = self.W.shape
        if self.U.ndim != 2 or self.U.shape[0] != n_hidden:
            raise ValueError(f"U has shape {self.U.shape}, expected ({n_hidden}, n_labels)")
        if self.a.shape != (n_visible,):
            raise ValueError(f"a has shape {self.a.shape}, expected ({n_visible},)")
        if self.b.shape != (n_hidden,):
            raise ValueError(f"b has shape {self.b.shape}, expected ({n_hidden},)")
        if self.c.shape != (self.U.shape[1],):
            raise ValueError(f"c has shape {self.c.shape}, expected ({self.U.shape[1]},)")
        for name in ("W", "U", "a", "b", "c"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite entries in {name}")

    @property
    def n_visible(self) -> int:
        return self.W.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[0]

    @property
    def n_labels(self) -> int:
        return self.U.shape[1]

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int, n_labels: int) -> "RbmParameters":
        return cls(
            W=np.zeros((n_hidden, n_visible)),
            U=np.zeros((n_hidden, n_labels)),
            a=np.zeros(n_visible),
            b=np.zeros(n_hidden),
            c=np.zeros(n_labels),
        )

    def blocks(self) -> dict:
        return {"W": self.W, "U": self.U, "a": self.a, "b": self.b, "c": self.c}

    def equals(self, other: "RbmParameters") -> bool:
        """Bitwise equality of every block."""
        return all(
            x.shape == y.shape and x.tobytes() == y.tobytes()
            for x, y in zip(self.blocks().values(), other.blocks().values())
        )


@dataclass(frozen=True)
class TrainConfig:
    n_hidden: int = 128
    learning_rate: float = 0.001
    cd_steps: int = 2
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    threshold: float = 0.5

    def __post_init__(self):
        if self.n_hidden < 1:
            raise ValueError("n_hidden must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.cd_steps < 1:
            raise ValueError("cd_steps must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")


@dataclass
class MfResult:
    """Mean-field marginals. Fields are per-row arrays when inference was batched."""

    mu: np.ndarray
    tau: np.ndarray
    iterations: int | np.ndarray
    residual: float | np.ndarray
    converged: bool | np.ndarray


def _width(arr: np.ndarray, n: int, name: str) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim not in (1, 2) or arr.shape[-1] != n:
        raise ValueError(f"dimension mismatch: {name} has shape {arr.shape}, expected last axis {n}")
    return arr


def init_params(n_visible: int, n_hidden: int, n_labels: int, seed: int) -> RbmParameters:
    """Weights i.i.d. uniform in [-0.01, 0.01], biases zero."""
    if min(n_visible, n_hidden, n_labels) < 1:
        raise ValueError("all layer sizes must be >= 1")
    rng = make_rng(seed, _INIT_STREAM)
    W = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_hidden, n_visible))
    U = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_hidden, n_labels))
    return RbmParameters(W=W, U=U, a=np.zeros(n_visible), b=np.zeros(n_hidden), c=np.zeros(n_labels))


def energy(p: RbmParameters, x, y, h) -> float | np.ndarray:
    x = _width(x, p.n_visible, "x")
    y = _width(y, p.n_labels, "y")
    h = _width(h, p.n_hidden, "h")
    return (
        -np.sum((h @ p.W) * x, axis=-1)
        - x @ p.a
        - h @ p.b
        - y @ p.c
        - np.sum((h @ p.U) * y, axis=-1)
    )


def p_h_given_xy(p: RbmParameters, x, y) -> np.ndarray:
    x = _width(x, p.n_visible, "x")
    y = _width(y, p.n_labels, "y")
    return sigmoid(p.b + y @ p.U.T + x @ p.W.T)


def p_x_given_h(p: RbmParameters, h) -> np.ndarray:
    h = _width(h, p.n_hidden, "h")
    return sigmoid(p.a + h @ p.W)


def p_y_given_h_softmax(p: RbmParameters, h) -> np.ndarray:
    """Single-label head: softmax over label scores. Not used in training."""
    h = _width(h, p.n_hidden, "h")
    return softmax(p.c + h @ p.U)


def p_y_given_h_multilabel(p: RbmParameters, h) -> np.ndarray:
    h = _width(h, p.n_hidden, "h")
    return sigmoid(p.c + h @ p.U)


def _check_batch(p: RbmParameters, x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.atleast_2d(_width(x, p.n_visible, "x"))
    y = np.atleast_2d(_width(y, p.n_labels, "y"))
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"dimension mismatch: {x.shape[0]} inputs vs {y.shape[0]} label rows")
    return x, y


def _cd_step(W, U, a, b, c, x, y, cd_steps, lr, rng):
    """In-place CD-k on raw arrays; shared by cd_k_update and train."""
    n = x.shape[0]
    h0 = sigmoid(b + y @ U.T + x @ W.T)
    hk = h0
    for _ in range(cd_steps):
        h_sample = bernoulli_sample(hk, rng)
        x_neg = sigmoid(a + h_sample @ W)
        y_neg = bernoulli_sample(sigmoid(c + h_sample @ U), rng)
        hk = sigmoid(b + y_neg @ U.T + x_neg @ W.T)
    eta = lr / n
    W += eta * (h0.T @ x - hk.T @ x_neg)
    U += eta * (h0.T @ y - hk.T @ y_neg)
    a += eta * np.sum(x - x_neg, axis=0)
    b += eta * np.sum(h0 - hk, axis=0)
    c += eta * np.sum(y - y_neg, axis=0)


def cd_k_update(p: RbmParameters, x, y, cfg: TrainConfig, rng: Rng) -> RbmParameters:
    """One CD-k step on a minibatch, returning new parameters.

    Positive phase clamps (x, y). Each of the k Gibbs steps samples h, takes
    the visible reconstruction as its sigmoid mean (not binarized), samples
    the labels from their independent sigmoids, and recomputes p(h | x, y).
    Gradients are averaged over the batch.
    """
    x, y = _check_batch(p, x, y)
    blocks = {k: v.copy() for k, v in p.blocks().items()}
    _cd_step(**blocks, x=x, y=y, cd_steps=cfg.cd_steps, lr=cfg.learning_rate, rng=rng)
    return RbmParameters(**blocks)


def reconstruction_error(p: RbmParameters, x, y) -> float:
    """Mean squared difference between ``x`` and ``p_x_given_h(p_h_given_xy(x, y))``."""
    x, y = _check_batch(p, x, y)
    x_rec = p_x_given_h(p, p_h_given_xy(p, x, y))
    return float(np.mean((x - x_rec) ** 2))


def train(
    x,
    y,
    cfg: TrainConfig,
    params: Optional[RbmParameters] = None,
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> tuple[RbmParameters, list[float]]:
    """Run ``cfg.epochs`` epochs of shuffled minibatch CD-k.

    Returns the trained parameters and the reconstruction error on the
    training set after each epoch.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if params is None:
        params = init_params(x.shape[1], cfg.n_hidden, y.shape[1], cfg.seed)
    x, y = _check_batch(params, x, y)
    rng = make_rng(cfg.seed, _TRAIN_STREAM)
    blocks = {k: v.copy() for k, v in params.blocks().items()}
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(x.shape[0])
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _cd_step(**blocks, x=x[idx], y=y[idx], cd_steps=cfg.cd_steps,
                     lr=cfg.learning_rate, rng=rng)
        params = RbmParameters(**blocks)
        err = reconstruction_error(params, x, y)
        history.append(err)
        if on_epoch is not None:
            on_epoch(epoch, err)
    return params, history


def mean_field_infer(p: RbmParameters, x, tol: float = MF_TOL, max_iter: int = MF_MAX_ITER) -> MfResult:
    """Fixed-point iteration for q(y, h) given x.

    Starts from mu = 0.5, tau = sigmoid(b + W x), then alternates the mu and
    tau sweeps until the largest change in a sweep is <= ``tol``. A 2-D ``x``
    runs every row independently; a row stops updating once it converges, so
    batched and single-row calls agree.
    """
    if not tol > 0:
        raise ValueError("tol must be > 0")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    x = _width(x, p.n_visible, "x")
    single = x.ndim == 1
    x = np.atleast_2d(x)
    n = x.shape[0]
    drive = p.b + x @ p.W.T
    tau = sigmoid(drive)
    mu = np.full((n, p.n_labels), 0.5)
    iterations = np.zeros(n, dtype=np.int64)
    residual = np.full(n, np.inf)
    active = np.ones(n, dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        rows = np.flatnonzero(active)
        t = tau[rows]
        new_mu = sigmoid(p.c + t @ p.U)
        new_tau = sigmoid(drive[rows] + new_mu @ p.U.T)
        if not (np.all(np.isfinite(new_mu)) and np.all(np.isfinite(new_tau))):
            raise InferenceError("divergent inference")
        change = np.maximum(
            np.max(np.abs(new_mu - mu[rows]), axis=1, initial=0.0),
            np.max(np.abs(new_tau - t), axis=1, initial=0.0),
        )
        mu[rows] = new_mu
        tau[rows] = new_tau
        iterations[rows] += 1
        residual[rows] = change
        active[rows[change <= tol]] = False
    converged = residual <= tol
    if single:
        return MfResult(mu[0], tau[0], int(iterations[0]), float(residual[0]), bool(converged[0]))
    return MfResult(mu, tau, iterations, residual, converged)


def predict_from_marginals(mu, threshold: float) -> np.ndarray:
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return (np.asarray(mu) >= threshold).astype(np.int64)


def predict_labels(p: RbmParameters, x, threshold: float = 0.5, tol: float = MF_TOL,
                   max_iter: int = MF_MAX_ITER) -> np.ndarray:
    """Label ``l`` is ON iff its mean-field marginal is >= threshold (ties go ON)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return predict_from_marginals(mean_field_infer(p, x, tol, max_iter).mu, threshold)


# ---------------------------------------------------------------------------
# exact enumeration (binary x), used as an oracle on tiny models


@dataclass
class JointTable:
    """All binary (x, y, h) configurations with their exact probabilities."""

    x: np.ndarray
    y: np.ndarray
    h: np.ndarray
    energy: np.ndarray
    log_z: float
    prob: np.ndarray

    def _rows(self, **fixed) -> np.ndarray:
        mask = np.ones(len(self.prob), dtype=bool)
        for name, value in fixed.items():
            mask &= np.all(getattr(self, name) == np.asarray(value, dtype=np.float64), axis=1)
        return mask

    def expect(self, fn: Callable[["JointTable"], np.ndarray], **given) -> np.ndarray:
        """E[fn(table) | given], computed by summing matching rows."""
        mask = self._rows(**given)
        w = self.prob[mask]
        vals = fn(self)[mask]
        return np.tensordot(w, vals, axes=(0, 0)) / w.sum()

    def log_marginal(self, x, y) -> float:
        """log p(x, y) = log sum_h exp(-E) - log Z."""
        mask = self._rows(x=x, y=y)
        neg = -self.energy[mask]
        m = neg.max()
        return float(m + np.log(np.exp(neg - m).sum()) - self.log_z)


def exact_joint_distribution(p: RbmParameters) -> JointTable:
    nv, nl, nh = p.n_visible, p.n_labels, p.n_hidden
    units = nv + nl + nh
    if units > MAX_ENUM_UNITS:
        raise ValueError(f"enumeration too large: {units} units > {MAX_ENUM_UNITS}")
    bits = np.array(list(itertools.product((0.0, 1.0), repeat=units)))
    x, y, h = bits[:, :nv], bits[:, nv:nv + nl], bits[:, nv + nl:]
    e = energy(p, x, y, h)
    neg = -e
    m = neg.max()
    log_z = float(m + np.log(np.exp(neg - m).sum()))
    prob = np.exp(neg - log_z)
    return JointTable(x=x, y=y, h=h, energy=e, log_z=log_z, prob=prob)


def _outer(left: str, right: str):
    return lambda t: getattr(t, left)[:, :, None] * getattr(t, right)[:, None, :]


def exact_loglik_gradient(p: RbmParameters, x, y) -> dict:
    """d log p(x, y) / d theta as clamped minus model expectations, by enumeration.

    Returns a dict keyed like :meth:`RbmParameters.blocks`.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.all(np.isin(x, (0.0, 1.0))) and np.all(np.isin(y, (0.0, 1.0)))):
        raise ValueError("exact gradient requires binary x and y")
    table = exact_joint_distribution(p)
    h_data = table.expect(lambda t: t.h, x=x, y=y)
    return {
        "W": np.outer(h_data, x) - table.expect(_outer("h", "x")),
        "U": np.outer(h_data, y) - table.expect(_outer("h", "y")),
        "a": x - table.expect(lambda t: t.x),
        "b": h_data - table.expect(lambda t: t.h),
        "c": y - table.expect(lambda t: t.y),
    }


# ---------------------------------------------------------------------------
# persistence


@dataclass
class ModelFile:
    params: RbmParameters
    appliances: list[str] = field(default_factory=list)
    scaler_min: float = 0.0
    scaler_max: float = 1.0
    threshold: float = 0.5


def _fmt(values: np.ndarray) -> str:
    return " ".join(repr(float(v)) for v in values)


def save_model(path, model: ModelFile) -> None:
    """Write the versioned text model format.

    Header lines are ``key value``; then each block is introduced by its
    name and shape and written one matrix row per line. Floats use ``repr``
    so a load gives back bit-identical doubles.
    """
    p = model.params
    if model.appliances and len(model.appliances) != p.n_labels:
        raise ValueError("one appliance name per label is required")
    lines = [
        "nilm-rbm-model",
        f"format_version {FORMAT_VERSION}",
        f"n_visible {p.n_visible}",
        f"n_hidden {p.n_hidden}",
        f"n_labels {p.n_labels}",
        f"appliances {json.dumps(list(model.appliances))}",
        f"scaler_min {model.scaler_min!r}",
        f"scaler_max {model.scaler_max!r}",
        f"threshold {model.threshold!r}",
    ]
    for name, block in p.blocks().items():
        rows = np.atleast_2d(block)
        lines.append(f"{name} {' '.join(str(s) for s in block.shape)}")
        lines.extend(_fmt(r) for r in rows)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> ModelFile:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "nilm-rbm-model":
        raise ValueError(f"{path}: not a nilm-rbm model file")
    header = {}
    i = 1
    while i < len(lines) and lines[i].split(" ", 1)[0] not in ("W", "U", "a", "b", "c"):
        key, _, value = lines[i].partition(" ")
        header[key] = value
        i += 1
    version = int(header.get("format_version", -1))
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version {version}")
    blocks = {}
    while i < len(lines):
        name, *shape = lines[i].split()
        shape = tuple(int(s) for s in shape)
        n_rows = shape[0] if len(shape) == 2 else 1
        rows = [[float(v) for v in lines[i + 1 + r].split()] for r in range(n_rows)]
        blocks[name] = np.array(rows, dtype=np.float64).reshape(shape)
        i += 1 + n_rows
    params = RbmParameters(**blocks)
    for key, actual in (("n_visible", params.n_visible), ("n_hidden", params.n_hidden),
                        ("n_labels", params.n_labels)):
        if int(header[key]) != actual:
            raise ValueError(f"{path}: header {key}={header[key]} disagrees with data ({actual})")
    return ModelFile(
        params=params,
        appliances=json.loads(header.get("appliances", "[]")),
        scaler_min=float(header["scaler_min"]),
        scaler_max=float(header["scaler_max"]),
        threshold=float(header.get("threshold", 0.5)),
    )

