"""``nilm-rbm`` command line: synth, train, eval, predict, baseline.

Settings resolve as: built-in defaults < ``--config`` JSON file <
``NILM_SEED`` (seed only) < explicit flags. Every command writes the
resolved settings to ``<out>/<command>_config.json``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from nilm_rbm import baselines, data, metrics, rbm

log = logging.getLogger("nilm_rbm")

SWEEP_HIDDEN = (32, 64, 128, 256)


@dataclass
class RunConfig:
    data: Optional[str] = None
    profiles: Optional[str] = None
    model: Optional[str] = None
    out: str = "out"
    window: int = 60
    hidden: int = 128
    lr: float = 0.001
    cd_k: int = 2
    epochs: int = 100
    batch: int = 32
    seed: int = 0
    threshold: float = 0.5
    on_fraction: float = 0.5
    mf_tol: float = rbm.MF_TOL
    mf_max_iter: int = rbm.MF_MAX_ITER
    sweep: bool = False
    baseline: bool = False
    duration: int = 3600
    sample_hz: float = 1.0
    noise_sd: float = 0.0
    start: int = 0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")

    def train_config(self, hidden: Optional[int] = None) -> rbm.TrainConfig:
        return rbm.TrainConfig(
            n_hidden=self.hidden if hidden is None else hidden,
            learning_rate=self.lr,
            cd_steps=self.cd_k,
            epochs=self.epochs,
            batch_size=self.batch,
            seed=self.seed,
            threshold=self.threshold,
        )

    def require(self, *names: str) -> None:
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ValueError(f"--{name} is required for this command")
            if not Path(value).exists():
                raise ValueError(f"{name} path does not exist: {value}")


_FLAGS = {
    "data": str, "profiles": str, "model": str, "out": str,
    "window": int, "hidden": int, "lr": float, "cd_k": int, "epochs": int, "batch": int,
    "seed": int, "threshold": float, "on_fraction": float,
    "duration": int, "sample_hz": float, "noise_sd": float,
}


def resolve_config(args: argparse.Namespace, environ=os.environ) -> RunConfig:
    values: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            loaded = json.load(fh)
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(loaded) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    if environ.get("NILM_SEED"):
        values["seed"] = int(environ["NILM_SEED"])
    for name in _FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    for name in ("sweep", "baseline"):
        if getattr(args, name, False):
            values[name] = True
    return RunConfig(**values)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValueError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ValueError(f"output directory {out} is not writable")
    return out


def _echo_config(out: Path, command: str, cfg: RunConfig) -> None:
    text = json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True)
    (out / f"{command}_config.json").write_text(text + "\n", encoding="utf-8")


def _load_dataset(cfg: RunConfig) -> data.LabeledDataset:
    cfg.require("data", "profiles")
    series = data.load_csv(cfg.data)
    profiles = data.load_profiles(cfg.profiles)
    return data.build_dataset(series, profiles, cfg.window, cfg.on_fraction)


def prepare_splits(cfg: RunConfig):
    """Load, split 50:30:20 with ``cfg.seed`` and fit the scaler on train."""
    ds = _load_dataset(cfg)
    train, test, val = data.split(ds, seed=cfg.seed)
    scaler = data.Scaler.fit(train.windows)
    return train.with_scaler(scaler), test.with_scaler(scaler), val.with_scaler(scaler)


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(cfg: RunConfig) -> int:
    cfg.require("profiles")
    out = _out_dir(cfg)
    profiles = data.load_profiles(cfg.profiles)
    hh = data.synthesize(profiles, cfg.duration, cfg.sample_hz, cfg.noise_sd, cfg.seed,
                         window=cfg.window, start=cfg.start, on_fraction=cfg.on_fraction)
    data.write_csv(out / "aggregate.csv", hh.series())
    for i, p in enumerate(profiles):
        s = hh.appliances[p.name]
        _write_rows(out / f"appliance_{p.name}.csv", ("timestamp", "watts", "state"),
                    ((int(t), repr(float(w)), int(st))
                     for t, w, st in zip(s.timestamps, s.watts, hh.states[:, i])))
    ds = hh.dataset
    _write_rows(out / "labels.csv", ["window_start"] + ds.names,
                ([int(t)] + [int(v) for v in row] for t, row in zip(ds.window_start, ds.y)))
    data.write_profiles(out / "profiles.csv", profiles)
    _echo_config(out, "synth", cfg)
    on_counts = ", ".join(f"{n}={int(c)}" for n, c in zip(ds.names, ds.y.sum(axis=0)))
    print(f"samples={len(hh.aggregate)} windows={len(ds)} appliances={len(profiles)} on_windows: {on_counts}")
    return 0


def _fit(cfg: RunConfig, train: data.LabeledDataset, hidden: int, log_rows: list):
    def on_epoch(epoch: int, err: float) -> None:
        log_rows.append((hidden, epoch + 1, repr(err)))
        log.info("hidden=%d epoch=%d reconstruction_error=%.6g", hidden, epoch + 1, err)

    params, _ = rbm.train(train.x, train.y, cfg.train_config(hidden), on_epoch=on_epoch)
    return params


def cmd_train(cfg: RunConfig) -> int:
    train, test, val = prepare_splits(cfg)
    out = _out_dir(cfg)
    log_rows: list = []
    if cfg.sweep:
        sweep_rows = []
        best = None
        for hidden in SWEEP_HIDDEN:
            params = _fit(cfg, train, hidden, log_rows)
            pred = rbm.predict_labels(params, val.x, cfg.threshold, cfg.mf_tol, cfg.mf_max_iter)
            score = metrics.macro_f1(pred, val.y)
            sweep_rows.append((hidden, repr(score)))
            if best is None or score > best[0]:
                best = (score, hidden, params)
        _write_rows(out / "sweep.csv", ("hidden", "validation_macro_f1"), sweep_rows)
        _, cfg.hidden, params = best
    else:
        params = _fit(cfg, train, cfg.hidden, log_rows)
    _write_rows(out / "train_log.csv", ("hidden", "epoch", "reconstruction_error"), log_rows)
    model = rbm.ModelFile(params=params, appliances=train.names, scaler_min=train.scaler.min_watts,
                          scaler_max=train.scaler.max_watts, threshold=cfg.threshold)
    rbm.save_model(out / "model.txt", model)
    _echo_config(out, "train", cfg)
    print(f"trained hidden={cfg.hidden} on {len(train)} windows (validation {len(val)}, test {len(test)})")
    return 0


def _load_model_for(cfg: RunConfig, names: Sequence[str]) -> rbm.ModelFile:
    cfg.require("model")
    model = rbm.load_model(cfg.model)
    if model.params.n_labels != len(names):
        raise ValueError(f"model has {model.params.n_labels} labels but data has {len(names)} appliances")
    if model.appliances and list(model.appliances) != list(names):
        raise ValueError(f"model appliances {model.appliances} differ from data appliances {list(names)}")
    if model.params.n_visible != cfg.window:
        raise ValueError(f"model expects window {model.params.n_visible}, config window is {cfg.window}")
    return model


def cmd_eval(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    model = _load_model_for(cfg, ds.names)
    _, test, _ = data.split(ds, seed=cfg.seed)
    test = test.with_scaler(data.Scaler(model.scaler_min, model.scaler_max))
    powers = [p.avg_on_power for p in test.profiles]
    pred = rbm.predict_labels(model.params, test.x, cfg.threshold, cfg.mf_tol, cfg.mf_max_iter)
    reports = [metrics.evaluate("ml-rbm", test.names, pred, test.y, test.true_energy(),
                                powers, test.window_hours)]
    if cfg.baseline:
        co = baselines.co_predict_series(test.windows, powers)
        reports.append(metrics.evaluate("co", test.names, co, test.y, test.true_energy(),
                                        powers, test.window_hours))
    out = _out_dir(cfg)
    metrics.write_report(reports, out / "report.csv", out / "report.txt")
    _echo_config(out, "eval", cfg)
    for r in reports:
        print(f"{r.method}: macro_f1={r.macro_f1:.4f} micro_f1={r.micro_f1:.4f} on {len(test)} test windows")
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    cfg.require("data")
    agg = data.load_csv(cfg.data)[data.AGGREGATE_COLUMN]
    starts, windows = data.window_aggregate(agg, cfg.window)
    cfg.require("model")
    model = rbm.load_model(cfg.model)
    if model.params.n_visible != cfg.window:
        raise ValueError(f"model expects window {model.params.n_visible}, config window is {cfg.window}")
    names = model.appliances or [f"label{i}" for i in range(model.params.n_labels)]
    x = data.Scaler(model.scaler_min, model.scaler_max).transform(windows)
    mf = rbm.mean_field_infer(model.params, x, cfg.mf_tol, cfg.mf_max_iter)
    states = rbm.predict_from_marginals(mf.mu, cfg.threshold)
    out = _out_dir(cfg)
    header = ["window_start"] + [f"mu_{n}" for n in names] + [f"state_{n}" for n in names]
    _write_rows(out / "predictions.csv", header,
                ([int(t)] + [repr(float(m)) for m in mu] + [int(s) for s in st]
                 for t, mu, st in zip(starts, mf.mu, states)))
    _echo_config(out, "predict", cfg)
    print(f"predicted {len(starts)} windows")
    return 0


def cmd_baseline(cfg: RunConfig) -> int:
    cfg.require("data", "profiles")
    agg = data.load_csv(cfg.data)[data.AGGREGATE_COLUMN]
    profiles = data.load_profiles(cfg.profiles)
    starts, windows = data.window_aggregate(agg, cfg.window)
    states = baselines.co_predict_series(windows, [p.avg_on_power for p in profiles])
    out = _out_dir(cfg)
    _write_rows(out / "baseline_predictions.csv",
                ["window_start"] + [f"state_{p.name}" for p in profiles],
                ([int(t)] + [int(s) for s in row] for t, row in zip(starts, states)))
    _echo_config(out, "baseline", cfg)
    print(f"CO baseline over {len(starts)} windows")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "baseline": cmd_baseline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nilm-rbm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file of settings")
        for flag, typ in _FLAGS.items():
            p.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, default=None)
        p.add_argument("--sweep", action="store_true",
                       help="train: pick hidden size from 32/64/128/256 on the validation split")
        p.add_argument("--baseline", action="store_true", help="eval: also score the CO baseline")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (ValueError, OSError, rbm.InferenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
