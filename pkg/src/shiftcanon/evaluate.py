"""
Shift consistency, classification metrics and pairwise-distance summaries.

Predictors are vectorised callables mapping an ``(N, C, L)`` batch to ``N``
integer classes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import EmptyDataset, LengthMismatch, ShapeMismatch

EXACT_ENUMERATION_MAX_LENGTH = 32


def _roll_each(X, shifts):
    L = X.shape[-1]
    idx = (np.arange(L)[None, :] - np.asarray(shifts)[:, None]) % L
    return np.take_along_axis(X, idx[:, None, :], axis=-1)


def _as_batch(dataset):
    X = dataset.X if hasattr(dataset, "X") else np.asarray(dataset, dtype=float)
    if X.ndim == 2:
        X = X[:, None, :]
    return X


def shift_consistency(predict: Callable, dataset, n_pairs: int = 500,
                      rng: Optional[np.random.Generator] = None, exact: Optional[bool] = None):
    """Probability that two circular shifts of one sample get the same class.

    Shifts ``t1, t2`` are integers uniform on ``1..L``.  For ``L <= 32`` (or
    ``exact=True``) every shift pair of every sample is enumerated; otherwise
    ``n_pairs`` (sample, t1, t2) triples are drawn from ``rng``.

    Returns ``(rate, pairs_evaluated)``.
    """
    X = _as_batch(dataset)
    if len(X) == 0:
        raise EmptyDataset("shift consistency needs at least one sample")
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    N, _, L = X.shape
    if exact is None:
        exact = L <= EXACT_ENUMERATION_MAX_LENGTH
    if exact:
        shifts = np.arange(1, L + 1)
        preds = np.stack([np.asarray(predict(_roll_each(X, np.full(N, t)))) for t in shifts], axis=1)
        agree = preds[:, :, None] == preds[:, None, :]
        return float(agree.mean()), int(agree.size)
    rng = np.random.default_rng(0) if rng is None else rng
    samples = rng.integers(0, N, size=n_pairs)
    t1 = rng.integers(1, L + 1, size=n_pairs)
    t2 = rng.integers(1, L + 1, size=n_pairs)
    p1 = np.asarray(predict(_roll_each(X[samples], t1)))
    p2 = np.asarray(predict(_roll_each(X[samples], t2)))
    return float(np.mean(p1 == p2)), int(n_pairs)


def classification_metrics(predictions, labels, n_classes: Optional[int] = None):
    """Accuracy and macro F1 (classes without support or predictions score 0)."""
    p = np.asarray(predictions, dtype=int)
    y = np.asarray(labels, dtype=int)
    if p.shape != y.shape:
        raise LengthMismatch(f"{p.shape} predictions vs {y.shape} labels")
    if p.size == 0:
        raise EmptyDataset("no samples")
    classes = range(n_classes) if n_classes is not None else np.union1d(p, y)
    f1s = []
    for c in classes:
        tp = np.sum((p == c) & (y == c))
        denom = np.sum(p == c) + np.sum(y == c)
        f1s.append(2 * tp / denom if denom else 0.0)
    return float(np.mean(p == y)), float(np.mean(f1s))


def per_class_counts(labels):
    values, counts = np.unique(np.asarray(labels, dtype=int), return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


def _flat(samples, transform):
    X = _as_batch(samples)
    if transform is not None:
        X = np.asarray(transform(X))
    return X.reshape(len(X), -1)


def pairwise_distance_report(a, b=None, transform: Optional[Callable] = None) -> dict:
    """Mean/min/max Euclidean distance over all pairs.

    With ``b`` the pairs are ``a x b``; without it, every unordered pair in
    ``a`` (a single sample yields one zero-distance self pair).
    """
    A = _flat(a, transform)
    if b is None:
        d = pdist(A) if len(A) > 1 else np.zeros(1)
    else:
        B = _flat(b, transform)
        if A.shape[1] != B.shape[1]:
            raise ShapeMismatch(f"sample sizes differ: {A.shape[1]} vs {B.shape[1]}")
        d = cdist(A, B).ravel()
    if d.size == 0:
        raise EmptyDataset("no pairs")
    return {"mean": float(d.mean()), "min": float(d.min()), "max": float(d.max()), "n_pairs": int(d.size)}


def class_distance_summary(X, y, transform: Optional[Callable] = None) -> dict:
    """Mean intra-class and inter-class pairwise distances."""
    y = np.asarray(y, dtype=int)
    F = _flat(X, transform)
    intra, inter = [], []
    classes = np.unique(y)
    for i, c in enumerate(classes):
        Fc = F[y == c]
        if len(Fc) > 1:
            intra.append(pdist(Fc))
        for c2 in classes[i + 1:]:
            inter.append(cdist(Fc, F[y == c2]).ravel())
    intra = np.concatenate(intra) if intra else np.zeros(0)
    inter = np.concatenate(inter) if inter else np.zeros(0)
    return {
        "intra_mean": float(intra.mean()) if intra.size else float("nan"),
        "inter_mean": float(inter.mean()) if inter.size else float("nan"),
        "intra_pairs": int(intra.size),
        "inter_pairs": int(inter.size),
    }


@dataclass
class EvalReport:
    shift_consistency: float
    accuracy: float
    macro_f1: float
    n_pairs: int
    per_class_counts: dict = field(default_factory=dict)
    distances: Optional[dict] = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("shift_consistency", "accuracy", "macro_f1"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.n_pairs <= 0:
            raise ValueError("n_pairs must be > 0")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def csv_row(self) -> dict:
        return {"shift_consistency": self.shift_consistency, "accuracy": self.accuracy,
                "macro_f1": self.macro_f1, "n_pairs": self.n_pairs}


def evaluate(predict: Callable, dataset, n_pairs: int = 500, seed: int = 0,
             distances: Optional[dict] = None, extra: Optional[dict] = None) -> EvalReport:
    preds = np.asarray(predict(dataset.X))
    acc, f1 = classification_metrics(preds, dataset.y, dataset.n_classes)
    rate, pairs = shift_consistency(predict, dataset, n_pairs, np.random.default_rng(seed))
    return EvalReport(rate, acc, f1, pairs, per_class_counts(dataset.y), distances, extra or {})
