"""Synthesize a household, train the RBM, and score it next to the CO baseline.

Everything goes through the ``nilm-rbm`` command line, so the output folder
holds the same files a user would get by hand:

    python scripts/synthetic_end_to_end.py --out runs/demo --epochs 200
"""

import argparse
import sys
from pathlib import Path

from nilm_rbm import cli, data

DEFAULT_DEVICES = [("lamp", 100.0), ("fridge", 250.0), ("washer", 600.0), ("kettle", 1500.0)]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/synthetic")
    ap.add_argument("--hours", type=float, default=50.0)
    ap.add_argument("--switch-prob", type=float, default=1 / 3600,
                    help="per-second ON->OFF and OFF->ON probability")
    ap.add_argument("--noise-sd", type=float, default=0.0)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    profiles = out / "profiles_in.csv"
    data.write_profiles(profiles, [data.ApplianceProfile(n, w, 10.0, args.switch_prob, args.switch_prob)
                                   for n, w in DEFAULT_DEVICES])
    common = ["--seed", str(args.seed), "--out", str(out)]
    steps = [
        ["synth", "--profiles", str(profiles), "--duration", str(int(args.hours * 3600)),
         "--noise-sd", str(args.noise_sd)],
        ["train", "--data", str(out / "aggregate.csv"), "--profiles", str(out / "profiles.csv"),
         "--epochs", str(args.epochs), "--batch", str(args.batch)],
        ["eval", "--data", str(out / "aggregate.csv"), "--profiles", str(out / "profiles.csv"),
         "--model", str(out / "model.txt"), "--baseline"],
    ]
    for step in steps:
        code = cli.main([*step, *common])
        if code:
            return code
    print((out / "report.txt").read_text(), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
