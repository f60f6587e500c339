"""Multi-label F1 scores and appliance energy errors."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


def f1(counts: ConfusionCounts) -> float:
    """2TP / (2TP + FN + FP); 0 when nothing was predicted or present."""
    denom = 2 * counts.tp + counts.fn + counts.fp
    return 0.0 if denom == 0 else 2 * counts.tp / denom


def _binary_pair(preds, truths) -> tuple[np.ndarray, np.ndarray]:
    preds = np.atleast_2d(np.asarray(preds))
    truths = np.atleast_2d(np.asarray(truths))
    if preds.shape != truths.shape:
        raise ValueError(f"shape mismatch: predictions {preds.shape} vs truths {truths.shape}")
    for name, arr in (("predictions", preds), ("truths", truths)):
        if not np.all(np.isin(arr, (0, 1))):
            raise ValueError(f"{name} must be binary")
    return preds.astype(bool), truths.astype(bool)


def confusion_per_class(preds, truths) -> list[ConfusionCounts]:
    """Counts per label column; rows are samples."""
    p, t = _binary_pair(preds, truths)
    return [
        ConfusionCounts(
            tp=int(np.sum(p[:, l] & t[:, l])),
            fp=int(np.sum(p[:, l] & ~t[:, l])),
            fn=int(np.sum(~p[:, l] & t[:, l])),
            tn=int(np.sum(~p[:, l] & ~t[:, l])),
        )
        for l in range(p.shape[1])
    ]


def per_class_f1(preds, truths) -> np.ndarray:
    return np.array([f1(c) for c in confusion_per_class(preds, truths)])


def macro_f1(preds, truths) -> float:
    """Unweighted mean of per-class F1; classes with no support count as 0."""
    return float(np.mean(per_class_f1(preds, truths)))


def micro_f1(preds, truths) -> float:
    """F1 of the confusion counts pooled over every class."""
    total = ConfusionCounts()
    for c in confusion_per_class(preds, truths):
        total = total + c
    return f1(total)


def estimate_energy(states, avg_power: float, window_hours: float) -> np.ndarray:
    """Energy per window (Wh) of a device assumed to draw ``avg_power`` while ON."""
    if not avg_power > 0:
        raise ValueError("avg_power must be > 0")
    return np.asarray(states, dtype=np.float64) * avg_power * window_hours


def _series_pair(true_power, est_power) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(true_power, dtype=np.float64)
    e = np.asarray(est_power, dtype=np.float64)
    if t.shape != e.shape:
        raise ValueError(f"length mismatch: true {t.shape} vs estimate {e.shape}")
    return t, e


def nee(true_power, est_power) -> float:
    """Normalized energy error: sum_t |P_t - P^_t| / sum_t P_t."""
    t, e = _series_pair(true_power, est_power)
    denom = t.sum()
    if denom <= 0:
        raise ValueError("undefined NEE (zero denominator)")
    return float(np.abs(t - e).sum() / denom)


def total_energy_error(true_power, est_power) -> float:
    """|sum estimate - sum true| / sum true: error on total energy only."""
    t, e = _series_pair(true_power, est_power)
    denom = t.sum()
    if denom <= 0:
        raise ValueError("undefined total energy error (zero denominator)")
    return float(abs(e.sum() - denom) / denom)


@dataclass
class EvalReport:
    method: str
    appliances: list[str]
    per_class_f1: np.ndarray
    macro_f1: float
    micro_f1: float
    per_appliance_nee: np.ndarray
    per_appliance_total_energy_error: np.ndarray
    extra: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [
            {
                "method": self.method,
                "class": name,
                "f1": float(self.per_class_f1[i]),
                "nee": float(self.per_appliance_nee[i]),
                "total_energy_error": float(self.per_appliance_total_energy_error[i]),
            }
            for i, name in enumerate(self.appliances)
        ]

    def key_values(self) -> dict:
        out = {f"{self.method}.macro_f1": self.macro_f1, f"{self.method}.micro_f1": self.micro_f1}
        for row in self.rows():
            for key in ("f1", "nee", "total_energy_error"):
                out[f"{self.method}.{row['class']}.{key}"] = row[key]
        for key, value in self.extra.items():
            out[f"{self.method}.{key}"] = value
        return out


def evaluate(method: str, appliances: Sequence[str], preds, truths, true_energy,
             avg_powers: Sequence[float], window_hours: float) -> EvalReport:
    """Score predicted label windows against truths and true per-window energy.

    ``true_energy`` has one column per appliance (Wh per window). Appliances
    whose true energy sums to zero get NaN energy errors.
    """
    preds = np.atleast_2d(np.asarray(preds))
    true_energy = np.atleast_2d(np.asarray(true_energy, dtype=np.float64))
    nees, tees = [], []
    for l, power in enumerate(avg_powers):
        est = estimate_energy(preds[:, l], power, window_hours)
        if true_energy[:, l].sum() > 0:
            nees.append(nee(true_energy[:, l], est))
            tees.append(total_energy_error(true_energy[:, l], est))
        else:
            nees.append(float("nan"))
            tees.append(float("nan"))
    return EvalReport(
        method=method,
        appliances=list(appliances),
        per_class_f1=per_class_f1(preds, truths),
        macro_f1=macro_f1(preds, truths),
        micro_f1=micro_f1(preds, truths),
        per_appliance_nee=np.array(nees),
        per_appliance_total_energy_error=np.array(tees),
    )


CSV_FIELDS = ("method", "class", "f1", "nee", "total_energy_error")


def write_report(reports: Sequence[EvalReport], csv_path, text_path) -> None:
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        for report in reports:
            for row in report.rows():
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    lines = []
    for report in reports:
        lines.extend(f"{k} = {v!r}" for k, v in report.key_values().items())
    Path(text_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
