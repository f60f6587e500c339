"""Best macro F1 reachable when each window is read as V Bernoulli draws.

A Bernoulli-visible RBM treats a normalized window as V independent binary
units with means equal to the scaled power level. Under that reading the
count of ON visibles is a sufficient statistic, and two aggregate levels a
few hundred watts apart overlap considerably when V is small. This script
computes, exactly, the macro F1 obtained by thresholding the posterior
marginals of an ideal Bernoulli mixture over all 2^N state combinations,
for several window lengths. Training by CD cannot be expected to beat it
on noise-free synthetic data.

    python scripts/bayes_ceiling.py --powers 100 250 600 1500 --windows 60 240 3600
"""

import argparse
import itertools

import numpy as np
from scipy.stats import binom

from nilm_rbm import metrics


def _combos(powers, duty):
    combos = np.array(list(itertools.product((0, 1), repeat=len(powers))))
    levels = combos @ powers
    means = np.clip(levels / levels.max(), 1e-9, 1 - 1e-9)
    prior = np.prod(np.where(combos == 1, duty, 1 - duty), axis=1)
    return combos, means, prior


def _f1_per_label(combos, weight, decision):
    """weight[k, s]: probability of true combo k with statistic s; decision[s, l]."""
    f1s = []
    for l in range(combos.shape[1]):
        truth = combos[:, l][:, None]
        pred = decision[:, l][None, :]
        tp = float(np.sum(weight * (truth & pred)))
        fp = float(np.sum(weight * ((1 - truth) & pred)))
        fn = float(np.sum(weight * (truth & (1 - pred))))
        f1s.append(metrics.f1(metrics.ConfusionCounts(tp=tp, fp=fp, fn=fn)))
    return np.array(f1s)


def ceiling_clean(powers, window, duty):
    """Noise-free windows scored by the posterior of a perfectly fitted Bernoulli mixture.

    A clean window at level m_k has log-likelihood V * (m_k log m_j + (1 - m_k) log(1 - m_j))
    under component j, so neighbouring levels stay close when V is small.
    """
    combos, means, prior = _combos(powers, duty)
    ll = window * (means[:, None] * np.log(means[None, :])
                   + (1 - means[:, None]) * np.log(1 - means[None, :]))
    logpost = ll + np.log(prior)[None, :]
    post = np.exp(logpost - logpost.max(axis=1, keepdims=True))
    post /= post.sum(axis=1, keepdims=True)
    decision = (post @ combos >= 0.5).astype(int)  # one decision per clean level
    return _f1_per_label(combos, np.diag(prior), decision)


def ceiling_sampled(powers, window, duty):
    """Bayes classifier when the V visibles really are Bernoulli draws at the level."""
    combos, means, prior = _combos(powers, duty)
    counts = np.arange(window + 1)
    joint = prior[:, None] * binom.pmf(counts[None, :], window, means[:, None])
    post = joint / joint.sum(axis=0, keepdims=True)
    decision = (post.T @ combos >= 0.5).astype(int)
    return _f1_per_label(combos, joint, decision)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--powers", type=float, nargs="+", default=[100, 250, 600, 1500])
    ap.add_argument("--windows", type=int, nargs="+", default=[60, 120, 240, 3600])
    ap.add_argument("--duty", type=float, nargs="+", default=[0.5],
                    help="ON probability per device (one value or one per device)")
    ap.add_argument("--sampled", action="store_true",
                    help="treat visibles as Bernoulli draws instead of clean levels")
    args = ap.parse_args()
    ceiling = ceiling_sampled if args.sampled else ceiling_clean
    powers = np.array(args.powers)
    duty = np.broadcast_to(np.array(args.duty), powers.shape)
    for v in args.windows:
        f1s = ceiling(powers, v, duty)
        print(f"window={v:5d} macro_f1={f1s.mean():.3f} per_class={np.round(f1s, 3).tolist()}")


if __name__ == "__main__":
    main()
