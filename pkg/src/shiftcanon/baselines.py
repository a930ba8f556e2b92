"""Comparison conditions: binomial blur pooling and random-shift augmentation."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import UnsupportedLength
from .signal import _repack, _unpack, circular_shift

SUPPORTED_LENGTHS = (1, 3, 5, 7)


@dataclass(frozen=True)
class BinomialKernel:
    taps: np.ndarray

    @property
    def length(self) -> int:
        return len(self.taps)


def binomial_kernel(length: int) -> BinomialKernel:
    """Normalised row ``length - 1`` of Pascal's triangle.

    Length 1 (the identity kernel ``[1]``) is accepted for ablations.
    """
    if length not in SUPPORTED_LENGTHS:
        raise UnsupportedLength(f"binomial kernel length must be one of {SUPPORTED_LENGTHS}")
    row = np.array([comb(length - 1, i) for i in range(length)], dtype=float)
    return BinomialKernel(row / row.sum())


def circular_blur(values: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Centred circular convolution along the last axis."""
    p = (len(taps) - 1) // 2
    out = np.zeros_like(values, dtype=float)
    for j, h in enumerate(taps):
        out += h * np.roll(values, p - j, axis=-1)
    return out


def blurpool_downsample(x, kernel: BinomialKernel, stride: int = 2):
    """Low-pass with ``kernel`` (circular boundary), then keep every ``stride``-th sample.

    Works on arrays with time on the last axis or on :class:`TimeSeries`.
    ``stride=1`` is accepted and gives the plain circular convolution.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    values, ts = _unpack(x)
    out = circular_blur(values, np.asarray(kernel.taps))[..., ::stride]
    if ts is not None and out.shape[-1] < 4:
        return out
    return _repack(out, ts)


def augment_random_shift(x, rng: np.random.Generator):
    """Circularly shift by an integer drawn uniformly from ``[0, L)``."""
    values, ts = _unpack(x)
    t = int(rng.integers(0, values.shape[-1]))
    return circular_shift(x, t)


def augment_batch(values: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent integer circular shifts for every sample of an ``(N, C, L)`` batch."""
    N, _, L = values.shape
    shifts = rng.integers(0, L, size=N)
    idx = (np.arange(L)[None, :] - shifts[:, None]) % L
    return np.take_along_axis(values, idx[:, None, :], axis=-1)
