import numpy as np
import pytest

from chainsentry.metrics import (confident_time, consistency_fractions, evaluate,
                                 f1_consistency, f1_early, timeline_metrics,
                                 write_eval_csv, write_survival_csv)


def test_perfect_predictor_all_ones():
    p = np.array([[0.9, 0.9, 0.9], [0.1, 0.2, 0.1]])
    y = np.array([1, 0])
    scores = timeline_metrics(p, y)
    for arr in (scores.accuracy, scores.precision, scores.recall, scores.f1):
        assert np.allclose(arr, 1.0)


def test_all_negative_predictor_conventions():
    p = np.full((4, 3), 0.1)
    y = np.array([1, 0, 0, 0])
    scores = timeline_metrics(p, y)
    assert np.allclose(scores.recall, 0.0)
    assert np.allclose(scores.precision, 0.0)  # defined as 0, not NaN
    assert np.allclose(scores.f1, 0.0)
    assert np.allclose(scores.accuracy, 0.75)


def test_threshold_half_counts_positive():
    p = np.array([[0.5, 0.49]])
    y = np.array([1])
    scores = timeline_metrics(p, y)
    assert scores.recall[0] == 1.0 and scores.recall[1] == 0.0


def test_matches_naive_confusion_recompute(rng):
    p = rng.uniform(size=(40, 6))
    y = rng.integers(0, 2, size=40)
    scores = timeline_metrics(p, y)
    for t in range(6):
        pred = (p[:, t] >= 0.5).astype(int)
        tp = sum(1 for i in range(40) if pred[i] == 1 and y[i] == 1)
        fp = sum(1 for i in range(40) if pred[i] == 1 and y[i] == 0)
        fn = sum(1 for i in range(40) if pred[i] == 0 and y[i] == 1)
        tn = sum(1 for i in range(40) if pred[i] == 0 and y[i] == 0)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        assert scores.accuracy[t] == pytest.approx((tp + tn) / 40)
        assert scores.precision[t] == pytest.approx(prec)
        assert scores.recall[t] == pytest.approx(rec)
        assert scores.f1[t] == pytest.approx(f1)


def test_f1_early_constant_reduces_to_value():
    assert f1_early(np.full(24, 0.7)) == pytest.approx(0.7, abs=1e-12)


def test_f1_early_upweights_early_steps():
    seq = np.zeros(24)
    seq[0] = 1.0
    assert f1_early(seq) > seq.mean()
    # Hand evaluation of the weighted sum.
    inv = 1.0 / np.sqrt(np.arange(1, 25))
    assert f1_early(seq) == pytest.approx(inv[0] / inv.sum(), abs=1e-15)


def test_f1_consistency_constant_consistent_reduces_to_value():
    p = np.tile(np.array([0.9, 0.9, 0.9, 0.9]), (5, 1))
    f1_seq = np.full(4, 0.6)
    assert f1_consistency(f1_seq, p) == pytest.approx(0.6, abs=1e-12)


def test_f1_consistency_last_step_flip_hurts():
    n = 6
    stable = np.tile(np.concatenate([np.full(5, 0.9), [0.9]]), (n, 1))
    flipped = np.tile(np.concatenate([np.full(5, 0.9), [0.1]]), (n, 1))
    f1_seq = np.full(6, 0.8)
    fc_stable = f1_consistency(f1_seq, stable)
    fc_flip = f1_consistency(f1_seq, flipped)
    assert fc_stable == pytest.approx(0.8, abs=1e-12)
    assert fc_flip < fc_stable
    fe = f1_early(f1_seq)
    assert fc_flip < fe


def test_consistency_fraction_values():
    p = np.array([[0.9, 0.9, 0.1], [0.9, 0.1, 0.1]])
    frac = consistency_fractions(p)
    assert np.allclose(frac, [0.5, 0.5])


def test_confident_time_cases():
    assert confident_time(np.full(10, 0.9), 1) == 1
    seq = np.concatenate([np.full(8, 0.2), np.full(16, 0.9)])
    assert confident_time(seq, 1) == 9
    wobble = np.array([0.9, 0.1, 0.9, 0.1])
    assert confident_time(wobble, 1) is None  # never stabilizes correctly
    assert confident_time(np.full(5, 0.9), 0) is None  # final call wrong


def test_evaluate_report_and_writers(tmp_path, rng):
    p = rng.uniform(size=(10, 5))
    y = rng.integers(0, 2, size=10)
    addresses = [f"a{k}" for k in range(10)]
    report = evaluate(addresses, p, y)
    assert 0.0 <= report.f1_early <= 1.0
    assert 0.0 <= report.f1_consistency <= 1.0
    assert set(report.confident_times) == set(addresses)
    payload = report.to_json()
    assert "f1_early" in payload
    write_eval_csv(tmp_path / "eval.csv", report)
    write_survival_csv(tmp_path / "surv.csv", addresses, p)
    assert (tmp_path / "eval.csv").read_text().startswith("t_index,")
    lines = (tmp_path / "surv.csv").read_text().splitlines()
    assert len(lines) == 1 + 10 * 5
