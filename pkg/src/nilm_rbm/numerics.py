"""Dense float64 helpers and seeded sampling shared by the rest of the package.

Vectors and matrices are plain ``numpy.ndarray`` objects (float64). The random
generator is numpy's PCG64 bit generator wrapped in ``numpy.random.Generator``;
PCG64 output for a given seed is specified by numpy and is identical across
platforms.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

Rng = np.random.Generator


def make_rng(seed: int, stream: int = 0) -> Rng:
    """PCG64 generator for ``(seed, stream)``; distinct streams are independent."""
    seq = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(stream,))
    return np.random.Generator(np.random.PCG64(seq))


def sigmoid(z):
    """Logistic function, elementwise; saturates to 0/1 without overflow."""
    return expit(np.asarray(z, dtype=np.float64))


def softmax(z):
    """Softmax along the last axis with max-subtraction."""
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0 or z.shape[-1] == 0:
        raise ValueError("empty input")
    shifted = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def bernoulli_sample(p, rng: Rng):
    """Draw 0/1 entries with ``P(1) = p``. Consumes one uniform per entry."""
    p = np.asarray(p, dtype=np.float64)
    if not np.all((p >= 0.0) & (p <= 1.0)):
        raise ValueError("invalid probability: entries must lie in [0, 1]")
    u = rng.random(p.shape)
    return (u < p).astype(np.float64)


def matvec(m, v):
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {m.shape} vs vector {v.shape}")
    return m @ v


def affine(m, v, bias):
    out = matvec(m, v)
    bias = np.asarray(bias, dtype=np.float64)
    if bias.shape != out.shape:
        raise ValueError(f"dimension mismatch: product {out.shape} vs bias {bias.shape}")
    return out + bias
