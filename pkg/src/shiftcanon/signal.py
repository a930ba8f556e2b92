"""
Time-series container, real DFT helpers and circular shifts.

Every operation here accepts either a :class:`TimeSeries` or a plain
``numpy`` array whose last axis is time.  Arrays are handy for batches of
shape ``(n_samples, channels, length)``; the return type follows the input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConstantChannel, DegeneratePhase, InvalidTimeSeries

MIN_LENGTH = 4
# relative factor of the degenerate-phase threshold, scaled by L * max|x|
EPS_MAG_REL = 1e-12


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled, real valued, multi-channel sequence.

    Parameters
    ----------
    values : array_like
        Shape ``(channels, length)``.  A 1-D input is treated as one channel.
    sample_rate : float
        Sampling rate in Hz.  Metadata only; no operation depends on it.
    """

    values: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2:
            raise InvalidTimeSeries(f"expected (channels, length), got shape {v.shape}")
        if v.shape[0] < 1:
            raise InvalidTimeSeries("need at least one channel")
        if v.shape[1] < MIN_LENGTH:
            raise InvalidTimeSeries(f"length {v.shape[1]} < {MIN_LENGTH}")
        if not np.all(np.isfinite(v)):
            raise InvalidTimeSeries("values must be finite")
        if not (np.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise InvalidTimeSeries("sample_rate must be > 0")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]

    def replace(self, values) -> "TimeSeries":
        return TimeSeries(values, self.sample_rate)


@dataclass(frozen=True)
class Spectrum:
    """Half spectrum of a real DFT, shape ``(..., length // 2 + 1)``.

    ``bins[..., k]`` is the coefficient at ``k / length`` cycles/sample.
    """

    bins: np.ndarray
    length: int
    sample_rate: float = 1.0

    @property
    def n_bins(self) -> int:
        return self.bins.shape[-1]

    def bin_frequency(self, k) -> np.ndarray:
        return np.asarray(k) / self.length


ArrayOrSeries = Union[TimeSeries, np.ndarray]


def _unpack(x):
    if isinstance(x, TimeSeries):
        return x.values, x
    return np.asarray(x, dtype=float), None


def _repack(values, template):
    if template is None:
        return values
    return template.replace(values)


def n_bins(length: int) -> int:
    return length // 2 + 1


def wrap_angle(a):
    """Wrap angles into ``(-pi, pi]``."""
    a = np.asarray(a, dtype=float)
    out = np.pi - np.mod(np.pi - a, 2 * np.pi)
    return out if out.ndim else float(out)


def dft_real(x: ArrayOrSeries) -> Spectrum:
    """Real-input DFT along the time axis, ``bins[k] = sum_n x[n] exp(-2j pi k n / L)``."""
    values, ts = _unpack(x)
    bins = np.fft.rfft(values, axis=-1)
    # imag of DC (and of Nyquist for even L) is exactly 0 for real input
    bins[..., 0] = bins[..., 0].real
    L = values.shape[-1]
    if L % 2 == 0:
        bins[..., -1] = bins[..., -1].real
    return Spectrum(bins, L, ts.sample_rate if ts is not None else 1.0)


def idft_real(s: Spectrum, as_series: bool = True) -> ArrayOrSeries:
    """Inverse of :func:`dft_real`.

    Only the real part of the DC bin (and the Nyquist bin, for even length)
    contributes, so the result is always real.
    """
    values = np.fft.irfft(s.bins, n=s.length, axis=-1)
    if as_series and values.ndim <= 2:
        return TimeSeries(values, s.sample_rate)
    return values


def shift_multiplier(length: int, t_shift) -> np.ndarray:
    """Per-bin factors ``exp(-2j pi k t / L)`` implementing a delay of ``t`` samples.

    ``t_shift`` may be an array; the bin axis is appended last.  For even
    ``length`` the Nyquist factor is ``cos(pi t)`` so the output stays real.
    """
    t = np.asarray(t_shift, dtype=float)[..., None]
    k = np.arange(n_bins(length))
    mult = np.exp(-2j * np.pi * k * t / length)
    if length % 2 == 0:
        mult[..., -1] = np.cos(np.pi * t[..., 0])
    return mult


def circular_shift(x: ArrayOrSeries, t_shift: float) -> ArrayOrSeries:
    """Delay ``x`` circularly by ``t_shift`` samples: ``y[n] = x[(n - t) mod L]``.

    Integer shifts are exact index rotations.  Fractional shifts are the
    band-limited (trigonometric) interpolation of that rotation.
    """
    values, ts = _unpack(x)
    t = float(t_shift)
    if not np.isfinite(t):
        raise ValueError("t_shift must be finite")
    L = values.shape[-1]
    if t == np.round(t):
        out = np.roll(values, int(np.round(t)) % L, axis=-1)
    else:
        bins = np.fft.rfft(values, axis=-1) * shift_multiplier(L, t)
        out = np.fft.irfft(bins, n=L, axis=-1)
    return _repack(out, ts)


def eps_mag(values: np.ndarray) -> np.ndarray:
    """Degenerate-phase threshold ``1e-12 * L * max|x|``, one value per leading index."""
    L = values.shape[-1]
    peak = np.max(np.abs(values), axis=tuple(range(values.ndim - 2, values.ndim))) \
        if values.ndim >= 2 else np.max(np.abs(values))
    return EPS_MAG_REL * L * peak


def phase_at_bin(s: Spectrum, channel: int = 0, k: int = 1, eps: float | None = None) -> float:
    """Angle in ``(-pi, pi]`` of ``bins[channel, k]``.

    Raises
    ------
    DegeneratePhase
        If the coefficient magnitude is at or below ``eps`` (by default the
        scale aware threshold of the originating signal).
    """
    bins = np.atleast_2d(s.bins)
    c = bins[channel, k]
    if eps is None:
        eps = EPS_MAG_REL * s.length * np.max(np.abs(idft_real(s, as_series=False)))
    if abs(c) <= eps:
        raise DegeneratePhase(f"|bin {k}| = {abs(c):.3g} <= {eps:.3g} on channel {channel}")
    return wrap_angle(np.angle(c))


def magnitude_spectrum(x: ArrayOrSeries) -> np.ndarray:
    """``|bins[k]|`` for every bin; unchanged by circular shifts of ``x``."""
    values, _ = _unpack(x)
    return np.abs(np.fft.rfft(values, axis=-1))


def znormalize(x: ArrayOrSeries) -> ArrayOrSeries:
    """Zero mean, unit population std per channel."""
    values, ts = _unpack(x)
    mu = values.mean(axis=-1, keepdims=True)
    sd = values.std(axis=-1, keepdims=True)
    if np.any(sd == 0):
        raise ConstantChannel("cannot normalize a constant channel")
    return _repack((values - mu) / sd, ts)
