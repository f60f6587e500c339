"""Power-series ingestion, window labelling and normalization, splits, and a
synthetic household generator.

CSV layout (UTF-8, comma separated, header required)::

    timestamp,aggregate_w[,dev_<name>_w ...]

``timestamp`` is integer unix seconds, strictly increasing with a constant
step. Profiles are a CSV with header
``name,avg_on_power_w,on_threshold_w,p_on_off,p_off_on,noise_sd_w``.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from nilm_rbm.numerics import make_rng

AGGREGATE_COLUMN = "aggregate_w"
_DEV_COLUMN = re.compile(r"^dev_(.+)_w$")
PROFILE_FIELDS = ("name", "avg_on_power_w", "on_threshold_w", "p_on_off", "p_off_on", "noise_sd_w")


class CsvFormatError(ValueError):
    pass


def device_column(name: str) -> str:
    return f"dev_{name}_w"


@dataclass(frozen=True)
class PowerSeries:
    timestamps: np.ndarray
    watts: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        w = np.asarray(self.watts, dtype=np.float64)
        if ts.shape != w.shape or ts.ndim != 1:
            raise ValueError(f"timestamps {ts.shape} and watts {w.shape} must be equal-length vectors")
        if len(ts) > 1:
            steps = np.diff(ts)
            if np.any(steps <= 0):
                raise ValueError("timestamps must be strictly increasing")
            if np.any(steps != steps[0]):
                raise ValueError("timestamps must have a uniform step")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("watts must be finite and >= 0")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "watts", w)

    def __len__(self) -> int:
        return len(self.watts)

    @property
    def step(self) -> int:
        return int(self.timestamps[1] - self.timestamps[0]) if len(self) > 1 else 1


@dataclass(frozen=True)
class ApplianceProfile:
    name: str
    avg_on_power: float
    on_threshold: float = 10.0
    p_on_to_off: float = 0.0
    p_off_to_on: float = 0.0
    noise_sd: float = 0.0

    def __post_init__(self):
        if not self.avg_on_power > 0:
            raise ValueError(f"{self.name}: avg_on_power must be > 0")
        if self.on_threshold < 0:
            raise ValueError(f"{self.name}: on_threshold must be >= 0")
        for attr in ("p_on_to_off", "p_off_to_on"):
            if not 0.0 <= getattr(self, attr) <= 1.0:
                raise ValueError(f"{self.name}: {attr} is an invalid probability")
        if self.noise_sd < 0:
            raise ValueError(f"{self.name}: noise_sd must be >= 0")


@dataclass(frozen=True)
class Scaler:
    min_watts: float
    max_watts: float

    def __post_init__(self):
        if not self.max_watts > self.min_watts:
            raise ValueError("constant signal: max_watts must exceed min_watts")

    @classmethod
    def fit(cls, windows) -> "Scaler":
        w = np.asarray(windows, dtype=np.float64)
        if w.size == 0:
            raise ValueError("cannot fit a scaler on no data")
        lo, hi = float(w.min()), float(w.max())
        if hi == lo:
            raise ValueError("constant signal")
        return cls(lo, hi)

    def transform(self, windows, clamp: bool = True) -> np.ndarray:
        x = (np.asarray(windows, dtype=np.float64) - self.min_watts) / (self.max_watts - self.min_watts)
        return np.clip(x, 0.0, 1.0) if clamp else x

    def inverse(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * (self.max_watts - self.min_watts) + self.min_watts


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: np.ndarray
    window_start: int


@dataclass
class LabeledDataset:
    """Aligned windows of raw aggregate watts, labels and appliance energy.

    ``x`` needs a scaler; the pipeline fits one on the training split and
    attaches it with :meth:`with_scaler`.
    """

    windows: np.ndarray
    y: np.ndarray
    window_start: np.ndarray
    profiles: list[ApplianceProfile]
    scaler: Optional[Scaler] = None
    appliance_mean_w: Optional[np.ndarray] = None
    sample_period: int = 1

    def __post_init__(self):
        self.windows = np.atleast_2d(np.asarray(self.windows, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.int64).reshape(len(self.windows), len(self.profiles))
        self.window_start = np.asarray(self.window_start, dtype=np.int64)
        if len(self.window_start) != len(self.windows):
            raise ValueError("one window_start per window is required")
        if self.y.shape[1] != len(self.profiles):
            raise ValueError(f"{self.y.shape[1]} label columns for {len(self.profiles)} profiles")
        if not np.all(np.isin(self.y, (0, 1))):
            raise ValueError("labels must be binary")

    def __len__(self) -> int:
        return len(self.windows)

    def __getitem__(self, i: int) -> Sample:
        return Sample(self.x[i], self.y[i], int(self.window_start[i]))

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.profiles]

    @property
    def window(self) -> int:
        return self.windows.shape[1]

    @property
    def window_hours(self) -> float:
        return self.window * self.sample_period / 3600.0

    @property
    def x(self) -> np.ndarray:
        if self.scaler is None:
            raise ValueError("dataset has no scaler; fit one on the training split first")
        return self.scaler.transform(self.windows)

    def with_scaler(self, scaler: Scaler) -> "LabeledDataset":
        return replace(self, scaler=scaler)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(
            self,
            windows=self.windows[idx],
            y=self.y[idx],
            window_start=self.window_start[idx],
            appliance_mean_w=None if self.appliance_mean_w is None else self.appliance_mean_w[idx],
        )

    def true_energy(self) -> np.ndarray:
        """Per-window appliance energy (Wh); falls back to label x average power."""
        if self.appliance_mean_w is not None:
            return self.appliance_mean_w * self.window_hours
        powers = np.array([p.avg_on_power for p in self.profiles])
        return self.y * powers * self.window_hours


# ---------------------------------------------------------------------------
# CSV


def load_csv(path) -> dict[str, PowerSeries]:
    """Read a household CSV into one series per power column.

    Raises :class:`CsvFormatError` naming the file line for any schema or
    value problem.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file (header required)") from None
        if len(header) < 2 or header[0] != "timestamp" or header[1] != AGGREGATE_COLUMN:
            raise CsvFormatError(
                f"{path}:1: header must start with 'timestamp,{AGGREGATE_COLUMN}', got {','.join(header)}")
        for name in header[2:]:
            if not _DEV_COLUMN.match(name):
                raise CsvFormatError(f"{path}:1: unexpected column {name!r} (want dev_<name>_w)")
        if len(set(header)) != len(header):
            raise CsvFormatError(f"{path}:1: duplicate column names")
        ts: list[int] = []
        cols: list[list[float]] = [[] for _ in header[1:]]
        step = None
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                t = int(row[0])
            except ValueError:
                raise CsvFormatError(f"{path}:{line}: non-integer timestamp {row[0]!r}") from None
            if ts:
                if t <= ts[-1]:
                    raise CsvFormatError(f"{path}:{line}: timestamp {t} is not after {ts[-1]}")
                if step is None:
                    step = t - ts[-1]
                elif t - ts[-1] != step:
                    raise CsvFormatError(f"{path}:{line}: step {t - ts[-1]} breaks uniform step {step}")
            ts.append(t)
            for j, cell in enumerate(row[1:]):
                try:
                    v = float(cell)
                except ValueError:
                    raise CsvFormatError(f"{path}:{line}: non-numeric value {cell!r} in {header[j + 1]}") from None
                if not math.isfinite(v) or v < 0:
                    raise CsvFormatError(f"{path}:{line}: {header[j + 1]} must be finite and >= 0, got {cell}")
                cols[j].append(v)
    return {name: PowerSeries(np.array(ts, dtype=np.int64), np.array(c)) for name, c in zip(header[1:], cols)}


def write_csv(path, series: dict[str, PowerSeries]) -> None:
    """Inverse of :func:`load_csv`; floats are written with ``repr`` (exact round-trip)."""
    if AGGREGATE_COLUMN not in series:
        raise ValueError(f"series must include {AGGREGATE_COLUMN!r}")
    names = [AGGREGATE_COLUMN] + [n for n in series if n != AGGREGATE_COLUMN]
    ts = series[AGGREGATE_COLUMN].timestamps
    for n in names:
        if not np.array_equal(series[n].timestamps, ts):
            raise ValueError(f"column {n} is not aligned with {AGGREGATE_COLUMN}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["timestamp"] + names)
        columns = [series[n].watts.tolist() for n in names]
        for i, t in enumerate(ts.tolist()):
            writer.writerow([t] + [repr(c[i]) for c in columns])


def load_profiles(path) -> list[ApplianceProfile]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(PROFILE_FIELDS) - set(reader.fieldnames or [])
        if missing:
            raise CsvFormatError(f"{path}:1: missing profile fields {sorted(missing)}")
        profiles = []
        for row in reader:
            try:
                profiles.append(ApplianceProfile(
                    name=row["name"],
                    avg_on_power=float(row["avg_on_power_w"]),
                    on_threshold=float(row["on_threshold_w"]),
                    p_on_to_off=float(row["p_on_off"]),
                    p_off_to_on=float(row["p_off_on"]),
                    noise_sd=float(row["noise_sd_w"]),
                ))
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{reader.line_num}: {exc}") from None
    if not profiles:
        raise CsvFormatError(f"{path}: no appliance profiles")
    return profiles


def write_profiles(path, profiles: Sequence[ApplianceProfile]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PROFILE_FIELDS)
        for p in profiles:
            writer.writerow([p.name, repr(p.avg_on_power), repr(p.on_threshold),
                             repr(p.p_on_to_off), repr(p.p_off_to_on), repr(p.noise_sd)])


# ---------------------------------------------------------------------------
# windows and labels


def window_aggregate(series: PowerSeries, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping windows; a trailing partial window is dropped.

    Returns ``(window_starts, windows)`` with windows shaped (n, window).
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    n = len(series) // window
    if n == 0:
        raise ValueError(f"series of length {len(series)} is shorter than one window ({window})")
    windows = series.watts[: n * window].reshape(n, window)
    return series.timestamps[: n * window: window].copy(), windows


def derive_labels(appliance: PowerSeries, profile: ApplianceProfile, window: int,
                  on_fraction: float = 0.5) -> np.ndarray:
    """ON (1) for each window where at least ``on_fraction`` of readings exceed
    the profile's ON threshold. Trailing partial windows are dropped."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if not 0.0 < on_fraction <= 1.0:
        raise ValueError("on_fraction must lie in (0, 1]")
    _, windows = window_aggregate(appliance, window)
    frac = np.mean(windows > profile.on_threshold, axis=1)
    return (frac >= on_fraction).astype(np.int64)


def normalize(windows, scaler: Optional[Scaler] = None) -> tuple[np.ndarray, Scaler]:
    """Min-max scale to [0, 1] (clamped). Fits the scaler when none is given."""
    if scaler is None:
        scaler = Scaler.fit(windows)
    return scaler.transform(windows), scaler


def build_dataset(series: dict[str, PowerSeries], profiles: Sequence[ApplianceProfile], window: int,
                  on_fraction: float = 0.5) -> LabeledDataset:
    """Window a loaded household and label it from its ``dev_<name>_w`` columns."""
    agg = series[AGGREGATE_COLUMN]
    starts, windows = window_aggregate(agg, window)
    labels, means = [], []
    for p in profiles:
        col = device_column(p.name)
        if col not in series:
            raise ValueError(f"no column {col!r} for appliance {p.name!r}")
        labels.append(derive_labels(series[col], p, window, on_fraction))
        means.append(window_aggregate(series[col], window)[1].mean(axis=1))
    return LabeledDataset(
        windows=windows,
        y=np.stack(labels, axis=1),
        window_start=starts,
        profiles=list(profiles),
        appliance_mean_w=np.stack(means, axis=1),
        sample_period=agg.step,
    )


def split_sizes(n: int, ratios: Sequence[float] = (0.5, 0.3, 0.2)) -> tuple[int, int, int]:
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be three positive numbers summing to 1")
    if n < 3:
        raise ValueError(f"need at least 3 samples to split, got {n}")
    # tiny epsilon so e.g. 0.3 * 10 does not floor to 2
    n_train = int(math.floor(ratios[0] * n + 1e-9))
    n_test = int(math.floor(ratios[1] * n + 1e-9))
    return n_train, n_test, n - n_train - n_test


def split(ds: LabeledDataset, ratios: Sequence[float] = (0.5, 0.3, 0.2), seed: int = 0
          ) -> tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    """Seeded shuffle then contiguous cut into (train, test, validation)."""
    n_train, n_test, _ = split_sizes(len(ds), ratios)
    order = make_rng(seed, 2).permutation(len(ds))
    return (
        ds.subset(order[:n_train]),
        ds.subset(order[n_train:n_train + n_test]),
        ds.subset(order[n_train + n_test:]),
    )


# ---------------------------------------------------------------------------
# synthetic households


@dataclass
class Household:
    aggregate: PowerSeries
    appliances: dict[str, PowerSeries]
    states: np.ndarray
    dataset: LabeledDataset = field(repr=False)

    def series(self) -> dict[str, PowerSeries]:
        """All columns keyed as in the CSV schema."""
        out = {AGGREGATE_COLUMN: self.aggregate}
        out.update({device_column(n): s for n, s in self.appliances.items()})
        return out


def _markov_states(n: int, p_on_off: float, p_off_on: float, rng) -> np.ndarray:
    """Two-state chain started from its stationary law (OFF if both rates are 0).

    Sojourn lengths are drawn as geometric variables, which is exact for a
    per-step switching probability.
    """
    total = p_on_off + p_off_on
    state = bool(rng.random() < (p_off_on / total if total > 0 else 0.0))
    out = np.zeros(n, dtype=np.int8)
    t = 0
    while t < n:
        p_leave = p_on_off if state else p_off_on
        run = n - t if p_leave == 0 else int(rng.geometric(p_leave))
        out[t:t + run] = state
        t += run
        state = not state
    return out


def synthesize(profiles: Sequence[ApplianceProfile], duration_s: int, sample_hz: float = 1.0,
               noise_sd: float = 0.0, seed: int = 0, window: int = 60, start: int = 0,
               on_fraction: float = 0.5) -> Household:
    """Simulate an additive household: aggregate = sum of ON device draws + noise.

    Each device follows its own two-state Markov chain, stepping once per
    sample. ON devices draw ``avg_on_power + N(0, noise_sd)`` (clamped at 0);
    the aggregate adds ``N(0, noise_sd)`` and is clamped at 0.
    """
    if not profiles:
        raise ValueError("at least one appliance profile is required")
    period = 1.0 / sample_hz
    if period < 1 or abs(period - round(period)) > 1e-9:
        raise ValueError("sample_hz must be 1/k for an integer k >= 1 (timestamps are whole seconds)")
    period = int(round(period))
    n = int(duration_s) // period
    if n < window:
        raise ValueError(f"duration {duration_s}s gives {n} samples, fewer than one window ({window})")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    rng = make_rng(seed, 3)
    ts = start + period * np.arange(n, dtype=np.int64)
    states = np.zeros((n, len(profiles)), dtype=np.int8)
    appliances = {}
    total = np.zeros(n)
    for i, p in enumerate(profiles):
        s = _markov_states(n, p.p_on_to_off, p.p_off_to_on, rng)
        draw = s * p.avg_on_power
        if p.noise_sd > 0:
            draw = np.where(s == 1, np.maximum(draw + rng.normal(0.0, p.noise_sd, n), 0.0), 0.0)
        states[:, i] = s
        appliances[p.name] = PowerSeries(ts, draw)
        total = total + draw
    if noise_sd > 0:
        total = np.maximum(total + rng.normal(0.0, noise_sd, n), 0.0)
    aggregate = PowerSeries(ts, total)
    series = {AGGREGATE_COLUMN: aggregate}
    series.update({device_column(name): s for name, s in appliances.items()})
    dataset = build_dataset(series, profiles, window, on_fraction)
    return Household(aggregate=aggregate, appliances=appliances, states=states, dataset=dataset)
