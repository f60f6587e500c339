import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from nilm_rbm import metrics
from nilm_rbm.metrics import ConfusionCounts

# Worked example: four devices over two hours, predictions swapped.
TRUE_LABELS = np.array([[1, 0, 0, 1], [0, 1, 1, 0]])
SWAPPED = np.array([[0, 1, 1, 0], [1, 0, 0, 1]])


def test_f1_formula():
    assert metrics.f1(ConfusionCounts(tp=2, fn=1, fp=1)) == pytest.approx(4 / 6, abs=1e-15)
    assert metrics.f1(ConfusionCounts(tp=5, tn=3)) == 1.0
    assert metrics.f1(ConfusionCounts(tn=4)) == 0.0


def test_swapped_example_f1_is_zero():
    np.testing.assert_array_equal(metrics.per_class_f1(SWAPPED, TRUE_LABELS), 0.0)
    assert metrics.macro_f1(SWAPPED, TRUE_LABELS) == 0.0
    assert metrics.micro_f1(SWAPPED, TRUE_LABELS) == 0.0


def test_swapped_example_energy_errors():
    power = 150.0
    for l in range(4):
        true = metrics.estimate_energy(TRUE_LABELS[:, l], power, 1.0)
        est = metrics.estimate_energy(SWAPPED[:, l], power, 1.0)
        # hand evaluation: sum |P - P^| = P + P, sum P = P
        assert metrics.nee(true, est) == 2.0
        assert metrics.total_energy_error(true, est) == 0.0


def test_macro_micro_examples():
    truth = np.array([[1, 1], [0, 0], [1, 1], [0, 0]])
    assert metrics.macro_f1(truth, truth) == 1.0
    assert metrics.micro_f1(truth, truth) == 1.0
    pred = truth.copy()
    pred[:, 1] = 1 - truth[:, 1]
    assert metrics.macro_f1(pred, truth) == 0.5


def test_micro_matches_pooled_counts(rng):
    for _ in range(20):
        truth = rng.integers(0, 2, (30, 4))
        pred = rng.integers(0, 2, (30, 4))
        tp = int(np.sum((pred == 1) & (truth == 1)))
        fp = int(np.sum((pred == 1) & (truth == 0)))
        fn = int(np.sum((pred == 0) & (truth == 1)))
        assert metrics.micro_f1(pred, truth) == 2 * tp / (2 * tp + fp + fn)


def test_zero_support_class_scores_zero():
    truth = np.array([[1, 0], [1, 0]])
    assert metrics.macro_f1(truth, truth) == 0.5


def test_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        metrics.macro_f1(np.zeros((2, 3)), np.zeros((2, 2)))
    with pytest.raises(ValueError, match="binary"):
        metrics.macro_f1(np.full((2, 2), 2), np.zeros((2, 2)))


def test_confusion_counts_sum_to_windows(rng):
    truth = rng.integers(0, 2, (17, 3))
    pred = rng.integers(0, 2, (17, 3))
    for c in metrics.confusion_per_class(pred, truth):
        assert c.tp + c.fp + c.fn + c.tn == 17


def test_estimate_energy(rng):
    np.testing.assert_array_equal(metrics.estimate_energy([0, 0, 0], 100.0, 1.0), 0.0)
    assert metrics.estimate_energy([1, 1, 0, 1], 100.0, 1.0).sum() == 300.0
    states = rng.integers(0, 2, 50)
    loop = [s * 42.5 * (1 / 60) for s in states]
    np.testing.assert_allclose(metrics.estimate_energy(states, 42.5, 1 / 60), loop, atol=1e-15)
    with pytest.raises(ValueError):
        metrics.estimate_energy([1], 0.0, 1.0)


def test_nee_and_total_error_cases(rng):
    t = rng.random(20) + 0.1
    assert metrics.nee(t, t) == 0.0
    assert metrics.total_energy_error(t, 2 * t) == pytest.approx(1.0, abs=1e-15)
    e = rng.random(20)
    assert metrics.total_energy_error(t, e) == pytest.approx(abs(sum(e) - sum(t)) / sum(t), abs=1e-12)
    with pytest.raises(ValueError, match="zero denominator"):
        metrics.nee(np.zeros(3), np.ones(3))
    with pytest.raises(ValueError, match="zero denominator"):
        metrics.total_energy_error(np.zeros(3), np.ones(3))
    with pytest.raises(ValueError, match="length mismatch"):
        metrics.nee(np.ones(3), np.ones(4))


positive = arrays(np.float64, 12, elements=st.floats(0.01, 1e4))


@given(positive, positive, st.floats(1e-3, 1e3))
def test_nee_scale_invariant_and_bounds_total_error(t, e, alpha):
    n = metrics.nee(t, e)
    assert metrics.nee(alpha * t, alpha * e) == pytest.approx(n, rel=1e-9)
    assert metrics.total_energy_error(t, e) <= n * (1 + 1e-12)


@given(arrays(np.int64, (10, 3), elements=st.integers(0, 1)),
       arrays(np.int64, (10, 3), elements=st.integers(0, 1)))
def test_f1_bounds(pred, truth):
    for score in (metrics.macro_f1(pred, truth), metrics.micro_f1(pred, truth)):
        assert 0.0 <= score <= 1.0
    if metrics.macro_f1(pred, truth) == 1.0:
        assert np.array_equal(pred, truth)


def test_report_files(tmp_path):
    truth = np.array([[1, 0], [0, 1], [1, 1]])
    energy = truth * np.array([100.0, 200.0])
    rep = metrics.evaluate("ml-rbm", ["fridge", "tv"], truth, truth, energy, [100.0, 200.0], 1.0)
    metrics.write_report([rep], tmp_path / "r.csv", tmp_path / "r.txt")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "method,class,f1,nee,total_energy_error"
    assert lines[1:] == ["ml-rbm,fridge,1.0,0.0,0.0", "ml-rbm,tv,1.0,0.0,0.0"]
    text = (tmp_path / "r.txt").read_text()
    assert "ml-rbm.macro_f1 = 1.0" in text
