"""
Synthetic two-tone classification task, dataset files, and splits.

Dataset file format (one JSON object per line)::

    {"id": "s000000", "label": 0, "sample_rate": 300.0, "channels": [[0.93, 1.21, ...]]}
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .canon import REF_BIN
from .errors import InsufficientSamples, IoFailure, MalformedRecord
from .signal import EPS_MAG_REL, TimeSeries

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SampleRecord:
    id: str
    label: int
    series: TimeSeries


@dataclass
class Dataset:
    """Equal-shape samples stacked as ``X`` with shape ``(N, C, L)``."""

    X: np.ndarray
    y: np.ndarray
    ids: list = field(default_factory=list)
    sample_rate: float = 1.0

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=int)
        if self.X.ndim != 3:
            if self.X.size == 0:
                self.X = self.X.reshape(0, 1, 0)
            else:
                raise ValueError(f"X must be (N, C, L), got {self.X.shape}")
        if len(self.y) != len(self.X):
            raise ValueError("X and y lengths differ")
        if not self.ids:
            self.ids = [f"s{i:06d}" for i in range(len(self.X))]

    def __len__(self):
        return len(self.X)

    @property
    def n_classes(self) -> int:
        return int(self.y.max()) + 1 if len(self.y) else 0

    @property
    def length(self) -> int:
        return self.X.shape[-1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.y[idx], [self.ids[i] for i in idx], self.sample_rate)

    def records(self):
        for i in range(len(self)):
            yield SampleRecord(self.ids[i], int(self.y[i]), TimeSeries(self.X[i], self.sample_rate))


@dataclass(frozen=True)
class SyntheticSpec:
    fs: float = 300.0
    duration: float = 1.0
    f_shared: float = 5.0
    f_class_a: float = 24.0
    f_class_b: float = 25.0
    noise_var: float = 0.1
    phase_high: float = np.pi
    per_class: int = 1000
    seed: int = 0

    def __post_init__(self):
        for f in (self.f_shared, self.f_class_a, self.f_class_b):
            if not 0 < f < self.fs / 2:
                raise ValueError(f"frequency {f} Hz is not below Nyquist {self.fs / 2} Hz")
        if self.noise_var < 0:
            raise ValueError("noise variance must be >= 0")
        if self.per_class < 0:
            raise ValueError("per_class must be >= 0")

    @property
    def length(self) -> int:
        return int(round(self.fs * self.duration))


def _fundamental_ok(x: np.ndarray) -> bool:
    c = np.fft.rfft(x)[REF_BIN]
    return abs(c) > EPS_MAG_REL * len(x) * np.max(np.abs(x))


def generate_sinusoid_task(spec: SyntheticSpec = SyntheticSpec(), max_redraws: int = 100) -> Dataset:
    """Two classes: shared tone + (24 Hz | 25 Hz) tone, random phases, Gaussian noise.

    Class 0 carries ``f_class_a`` and class 1 ``f_class_b``; phases are uniform
    on ``[0, phase_high)``.  Each sample gets its own RNG stream derived from
    ``spec.seed``.  With noise, samples whose fundamental bin is degenerate are
    redrawn; a noiseless dataset is returned unscreened.
    """
    L = spec.length
    t = np.arange(L) / spec.fs
    n = 2 * spec.per_class
    streams = np.random.SeedSequence(spec.seed).spawn(n)
    X = np.empty((n, 1, L))
    y = np.repeat([0, 1], spec.per_class)
    for i in range(n):
        rng = np.random.default_rng(streams[i])
        f_cls = spec.f_class_a if y[i] == 0 else spec.f_class_b
        for attempt in range(max_redraws):
            ph1, ph2 = rng.uniform(0.0, spec.phase_high, size=2)
            x = np.cos(2 * np.pi * spec.f_shared * t + ph1) + np.cos(2 * np.pi * f_cls * t + ph2)
            if spec.noise_var > 0:
                x = x + rng.normal(0.0, np.sqrt(spec.noise_var), size=L)
            if spec.noise_var == 0 or _fundamental_ok(x):
                break
            log.warning("sample %d: degenerate fundamental bin, redrawing (attempt %d)", i, attempt + 1)
        else:
            raise RuntimeError(f"sample {i}: could not draw a non-degenerate sample")
        X[i, 0] = x
    if spec.noise_var == 0:
        log.warning("noiseless dataset: fundamental bin is ~0, samples cannot be canonized")
    return Dataset(X, y, [f"s{i:06d}" for i in range(n)], spec.fs)


def _atomic_write_text(path: Path, text: str):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def save_dataset(dataset: Dataset, path):
    lines = []
    for i in range(len(dataset)):
        lines.append(json.dumps({
            "id": dataset.ids[i],
            "label": int(dataset.y[i]),
            "sample_rate": float(dataset.sample_rate),
            "channels": dataset.X[i].tolist(),
        }))
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


def _parse_record(lineno, line):
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedRecord(lineno, f"invalid JSON ({e.msg})") from None
    if not isinstance(rec, dict):
        raise MalformedRecord(lineno, "record is not an object")
    for key in ("id", "label", "sample_rate", "channels"):
        if key not in rec:
            raise MalformedRecord(lineno, f"missing field {key!r}")
    label = rec["label"]
    if not isinstance(label, int) or isinstance(label, bool) or label < 0:
        raise MalformedRecord(lineno, "label must be a non-negative integer")
    try:
        ts = TimeSeries(np.asarray(rec["channels"], dtype=float), float(rec["sample_rate"]))
    except (ValueError, TypeError) as e:
        raise MalformedRecord(lineno, f"bad channels: {e}") from None
    return str(rec["id"]), label, ts


def load_dataset(path) -> Dataset:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    ids, labels, values, rate = [], [], [], None
    shape = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        rid, label, ts = _parse_record(lineno, line)
        if shape is None:
            shape, rate = ts.values.shape, ts.sample_rate
        elif ts.values.shape != shape:
            raise MalformedRecord(lineno, f"shape {ts.values.shape} differs from {shape}")
        ids.append(rid)
        labels.append(label)
        values.append(ts.values)
    if not values:
        return Dataset(np.zeros((0, 1, 0)), np.zeros(0, dtype=int), [], 1.0)
    return Dataset(np.stack(values), np.array(labels), ids, rate)


def _split_sizes(n, fractions):
    raw = np.asarray(fractions, dtype=float) * n
    sizes = np.floor(raw).astype(int)
    rest = n - sizes.sum()
    order = np.argsort(-(raw - sizes), kind="stable")
    sizes[order[:rest]] += 1
    return sizes


def split(dataset: Dataset, fractions=(0.6, 0.2, 0.2), seed: int = 0, stratified: bool = True):
    """Disjoint, exhaustive, seeded partition into ``len(fractions)`` datasets."""
    fractions = np.asarray(fractions, dtype=float)
    if np.any(fractions < 0) or not np.isclose(fractions.sum(), 1.0):
        raise ValueError("fractions must be non-negative and sum to 1")
    rng = np.random.default_rng(seed)
    parts = [[] for _ in fractions]
    if stratified:
        for c in np.unique(dataset.y):
            idx = rng.permutation(np.flatnonzero(dataset.y == c))
            bounds = np.cumsum(_split_sizes(len(idx), fractions))[:-1]
            for p, chunk in zip(parts, np.split(idx, bounds)):
                p.extend(chunk.tolist())
    else:
        idx = rng.permutation(len(dataset))
        bounds = np.cumsum(_split_sizes(len(idx), fractions))[:-1]
        for p, chunk in zip(parts, np.split(idx, bounds)):
            p.extend(chunk.tolist())
    for frac, p in zip(fractions, parts):
        if frac > 0 and not p:
            raise InsufficientSamples(f"{len(dataset)} samples cannot fill a split of fraction {frac}")
    return tuple(dataset.subset(sorted(p)) for p in parts)
