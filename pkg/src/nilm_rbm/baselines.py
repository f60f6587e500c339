"""Combinatorial-optimization (CO) disaggregation by exhaustive search."""

from __future__ import annotations

import numpy as np

MAX_CO_DEVICES = 25


def aggregate(states, powers) -> float:
    """Total power drawn by the devices that are ON."""
    s = np.asarray(states, dtype=np.float64)
    p = np.asarray(powers, dtype=np.float64)
    if s.shape != p.shape:
        raise ValueError(f"length mismatch: states {s.shape} vs powers {p.shape}")
    return float(s @ p)


_CHUNK_BITS = 16


def _subset_table(powers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Subset sums and ON counts for every code of ``len(powers)`` bits.

    Code bit ``n-1-i`` is device ``i``, so increasing codes are the state
    vectors in lexicographic order.
    """
    n = len(powers)
    codes = np.arange(2 ** n, dtype=np.int64)
    sums = np.zeros(2 ** n)
    counts = np.zeros(2 ** n, dtype=np.int64)
    for i, p in enumerate(powers):
        bit = (codes >> (n - 1 - i)) & 1
        sums += bit * p
        counts += bit
    return sums, counts


class _Solver:
    """Exhaustive CO over all 2^N states for one set of device powers.

    States are enumerated as (high bits, low bits) so memory stays at
    2^16 entries; every state is still scored.
    """

    def __init__(self, powers):
        p = np.asarray(powers, dtype=np.float64)
        if p.ndim != 1 or len(p) == 0:
            raise ValueError("powers must be a non-empty vector")
        if len(p) > MAX_CO_DEVICES:
            raise ValueError(f"instance too large for exhaustive CO ({len(p)} > {MAX_CO_DEVICES})")
        if not np.all(p > 0):
            raise ValueError("powers must be > 0")
        self.n = len(p)
        self.low_bits = min(self.n, _CHUNK_BITS)
        self.hi_sums, self.hi_counts = _subset_table(p[: self.n - self.low_bits])
        self.lo_sums, self.lo_counts = _subset_table(p[self.n - self.low_bits:])

    def solve(self, p_agg: float) -> np.ndarray:
        best = None  # (residual, on_count, code)
        for hi in range(len(self.hi_sums)):
            res = np.abs(p_agg - (self.hi_sums[hi] + self.lo_sums))
            m = res.min()
            if best is not None and m > best[0]:
                continue
            cand = np.flatnonzero(res == m)
            counts = self.hi_counts[hi] + self.lo_counts[cand]
            # cand is ascending, so argmin picks the smallest code among fewest ON
            k = int(np.argmin(counts))
            key = (float(m), int(counts[k]), (hi << self.low_bits) | int(cand[k]))
            if best is None or key < best:
                best = key
        code = best[2]
        return np.array([(code >> (self.n - 1 - i)) & 1 for i in range(self.n)], dtype=np.int64)


def co_disaggregate(p_agg: float, powers) -> np.ndarray:
    """argmin_s |p_agg - s.powers| over all 2^N state vectors.

    Ties go to the vector with fewest devices ON, then to the
    lexicographically smallest vector.
    """
    return _Solver(powers).solve(p_agg)


def co_predict_series(windows, powers) -> np.ndarray:
    """Apply CO to the mean power of each window; returns (n_windows, N) states."""
    powers = np.asarray(powers, dtype=np.float64)
    windows = list(windows) if not isinstance(windows, np.ndarray) else windows
    if len(windows) == 0:
        return np.zeros((0, len(powers)), dtype=np.int64)
    solver = _Solver(powers)
    return np.array([solver.solve(float(np.mean(w))) for w in windows])
