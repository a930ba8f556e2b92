import itertools
import json

import numpy as np
import pytest

from shiftcanon.canon import canonize_array
from shiftcanon.data import Dataset
from shiftcanon.errors import EmptyDataset, LengthMismatch, ShapeMismatch
from shiftcanon.evaluate import (
    EvalReport,
    class_distance_summary,
    classification_metrics,
    pairwise_distance_report,
    shift_consistency,
)
from shiftcanon.signal import circular_shift


def sign_of_first(X):
    return (X[:, 0, 0] > 0).astype(int)


class TestShiftConsistency:
    def test_constant_predictor(self):
        X = np.random.default_rng(0).normal(size=(5, 1, 64))
        rate, n = shift_consistency(lambda b: np.zeros(len(b), int), X, 300)
        assert rate == 1.0 and n == 300

    def test_two_sample_toy_enumeration(self):
        # brute force over all (t1, t2) in {1, 2}^2
        x = np.array([1.0, -1.0])
        preds = {t: int(np.roll(x, t)[0] > 0) for t in (1, 2)}
        oracle = np.mean([preds[a] == preds[b] for a, b in itertools.product((1, 2), repeat=2)])
        assert oracle == 0.5
        rate, n = shift_consistency(sign_of_first, x[None, None, :], 10)
        assert rate == 0.5 and n == 4

    def test_canonized_pipeline_is_one(self):
        X = np.random.default_rng(1).normal(size=(20, 2, 100))

        def predict(b):
            return sign_of_first(canonize_array(b, 0.3)[0])

        rate, _ = shift_consistency(predict, X, 1000, np.random.default_rng(2))
        assert rate == 1.0

    def test_relabeling_invariant(self):
        X = np.random.default_rng(3).normal(size=(10, 1, 50))
        a, _ = shift_consistency(sign_of_first, X, 400, np.random.default_rng(0))
        b, _ = shift_consistency(lambda z: 1 - sign_of_first(z), X, 400, np.random.default_rng(0))
        assert a == b

    def test_reproducible(self):
        X = np.random.default_rng(4).normal(size=(10, 1, 50))
        runs = [shift_consistency(sign_of_first, X, 200, np.random.default_rng(7))[0] for _ in range(2)]
        assert runs[0] == runs[1]

    def test_exact_small_length_matches_brute_force(self):
        X = np.random.default_rng(5).normal(size=(4, 1, 8))
        expected = np.mean([
            sign_of_first(np.roll(X[i:i + 1], a, axis=-1))[0] == sign_of_first(np.roll(X[i:i + 1], b, axis=-1))[0]
            for i in range(4) for a in range(1, 9) for b in range(1, 9)
        ])
        assert shift_consistency(sign_of_first, X, 1)[0] == expected

    def test_dataset_object(self):
        ds = Dataset(np.random.default_rng(6).normal(size=(3, 1, 40)), [0, 1, 0])
        assert 0 <= shift_consistency(sign_of_first, ds, 50)[0] <= 1

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            shift_consistency(sign_of_first, np.zeros((0, 1, 40)), 10)


class TestMetrics:
    def test_perfect(self):
        assert classification_metrics([0, 1, 2], [0, 1, 2]) == (1.0, 1.0)

    def test_binary_hand(self):
        acc, f1 = classification_metrics([0, 0, 1, 1], [0, 1, 0, 1])
        assert acc == 0.5 and f1 == 0.5

    def test_single_class(self):
        assert classification_metrics([3, 3], [3, 3]) == (1.0, 1.0)

    def test_empty_class_counts_zero(self):
        _, f1 = classification_metrics([0, 0], [0, 0], n_classes=2)
        assert f1 == 0.5

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            classification_metrics([0, 1], [0])


class TestDistances:
    def test_shift_variants_collapse(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(1, 64))
        A = np.stack([circular_shift(x, int(t)) for t in rng.integers(0, 64, 20)])
        rep = pairwise_distance_report(A, transform=lambda b: canonize_array(b, 0.0)[0])
        assert rep["max"] <= 1e-6

    def test_self_distance(self):
        x = np.random.default_rng(1).normal(size=(1, 1, 16))
        assert pairwise_distance_report(x, x)["max"] == 0.0
        assert pairwise_distance_report(x)["max"] == 0.0

    def test_half_period_cosine(self):
        L = 16
        x = np.cos(2 * np.pi * np.arange(L) / L)[None, :]
        rep = pairwise_distance_report(np.stack([x, circular_shift(x, L // 2)]))
        assert rep["mean"] == pytest.approx(2 * np.linalg.norm(x))
        assert rep["n_pairs"] == 1

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            pairwise_distance_report(np.zeros((2, 1, 4)), np.zeros((2, 1, 5)))

    def test_class_summary(self):
        X = np.array([[[0.0, 0]], [[0, 1]], [[5, 0]], [[5, 1]]])
        s = class_distance_summary(X, [0, 0, 1, 1])
        assert s["intra_mean"] == 1.0
        assert s["inter_mean"] == pytest.approx(np.mean([5, np.sqrt(26), np.sqrt(26), 5]))


def test_report_validation_and_json():
    rep = EvalReport(1.0, 0.9, 0.8, 500, {0: 3})
    assert json.loads(rep.to_json())["n_pairs"] == 500
    with pytest.raises(ValueError):
        EvalReport(1.5, 0.9, 0.8, 500)
    with pytest.raises(ValueError):
        EvalReport(1.0, 0.9, 0.8, 0)
