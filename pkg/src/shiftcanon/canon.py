"""
Phase canonicalization of circular shifts.

``canonize(x, phi)`` rotates every harmonic of ``x`` by a linear phase ramp so
that the fundamental bin (period equal to the signal length) ends up with
angle ``phi``.  All circular shifts of ``x`` therefore land on the same output,
and the map is differentiable in ``phi``.

The reference angle is read from one channel (``ref_channel``, default 0) and
the same ramp is applied to every channel, so inter-channel alignment is kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePhase, NotAShiftVariant
from .signal import (
    EPS_MAG_REL,
    TimeSeries,
    _repack,
    _unpack,
    circular_shift,
    n_bins,
    shift_multiplier,
    wrap_angle,
)

REF_BIN = 1
TWO_PI = 2 * np.pi
# |shift| below this many samples is treated as no shift; keeps re-canonization bit-exact
SNAP = 1e-9


@dataclass(frozen=True)
class CanonPlan:
    current_angle: float
    target_angle: float
    T0: float
    theta: float
    delta: float

    @property
    def omega0(self) -> float:
        return TWO_PI / self.T0


def _theta(current, target):
    theta = np.mod(np.asarray(current, float) - np.asarray(target, float), TWO_PI)
    # mod of a tiny negative difference rounds up to exactly 2 pi
    return np.where(theta >= TWO_PI, 0.0, theta)


def _delta(theta, T0):
    return np.where(theta > np.pi, theta - TWO_PI, theta) * T0 / TWO_PI


def phase_difference(current_angle: float, target_angle: float, T0: float) -> CanonPlan:
    """Wrapped angle difference and the matching sample shift.

    ``theta = (current - target) mod 2 pi`` and the shift is
    ``theta * T0 / 2pi``, taken on the lower branch once ``theta`` passes pi,
    so it always lies in ``(-T0/2, T0/2]``.
    """
    if T0 < 4:
        raise ValueError("T0 must be >= 4")
    theta = float(_theta(current_angle, target_angle))
    delta = float(_delta(theta, T0))
    return CanonPlan(float(current_angle), float(target_angle), float(T0), theta, delta)


def reference_angles(values: np.ndarray, ref_channel: int = 0) -> np.ndarray:
    """Angle of the fundamental bin on ``ref_channel`` for arrays ``(..., C, L)``.

    Raises :class:`DegeneratePhase` naming the first offending sample.
    """
    values = np.asarray(values, float)
    if values.ndim == 1:
        values = values[None, :]
    L = values.shape[-1]
    ref = values[..., ref_channel, :]
    c = np.fft.rfft(ref, axis=-1)[..., REF_BIN]
    eps = EPS_MAG_REL * L * np.max(np.abs(values), axis=(-2, -1))
    bad = np.abs(c) <= eps
    if np.any(bad):
        idx = np.argwhere(np.atleast_1d(bad))[0]
        raise DegeneratePhase(
            f"fundamental bin is (near) zero for sample {tuple(int(i) for i in idx)}"
        )
    return wrap_angle(np.angle(c))


def _spectral_shift(values, delta):
    L = values.shape[-1]
    bins = np.fft.rfft(values, axis=-1)
    # delta has the sample shape; broadcast over channels
    mult = shift_multiplier(L, delta)[..., None, :]
    return bins, mult


def canonize_array(values, phi, ref_channel: int = 0):
    """Vectorised canonization of ``(C, L)`` or ``(N, C, L)`` arrays.

    ``phi`` is a scalar or one angle per sample; any real value is accepted
    (it only enters modulo 2 pi).  Returns ``(output, delta)``.
    """
    values = np.asarray(values, float)
    squeeze = values.ndim == 1
    if squeeze:
        values = values[None, :]
    L = values.shape[-1]
    current = reference_angles(values, ref_channel)
    delta = _delta(_theta(current, phi), L)
    bins, mult = _spectral_shift(values, delta)
    out = np.fft.irfft(bins * mult, n=L, axis=-1)
    keep = np.abs(delta) <= SNAP
    if np.any(keep):
        out = np.where(np.asarray(keep)[..., None, None], values, out)
    if squeeze:
        out = out[0]
    return out, (float(delta) if np.ndim(delta) == 0 else delta)


def _multiplier_dphi(L, delta):
    # d/dphi of the shift factors, with d(delta)/d(phi) = -L / 2pi
    k = np.arange(n_bins(L))
    t = np.asarray(delta, float)[..., None]
    d = 1j * k * np.exp(-2j * np.pi * k * t / L)
    if L % 2 == 0:
        d[..., -1] = 0.5 * L * np.sin(np.pi * t[..., 0])
    return d


def canonize_grad_array(values, phi, ref_channel: int = 0):
    """Canonized output together with its derivative with respect to ``phi``.

    At the wrap point (``theta == 0``) the lower-branch slope is used.
    Returns ``(output, d_output_d_phi, delta)``.
    """
    values = np.asarray(values, float)
    squeeze = values.ndim == 1
    if squeeze:
        values = values[None, :]
    L = values.shape[-1]
    out, delta = canonize_array(values, phi, ref_channel)
    bins = np.fft.rfft(values, axis=-1)
    grad = np.fft.irfft(bins * _multiplier_dphi(L, delta)[..., None, :], n=L, axis=-1)
    if squeeze:
        out, grad = out[0], grad[0]
    return out, grad, delta


def canonize(x: TimeSeries, phi: float, ref_channel: int = 0):
    """Map ``x`` to the circular shift whose fundamental has angle ``phi``.

    Returns
    -------
    (TimeSeries, float)
        The canonized series and the applied shift in samples.
    """
    values, ts = _unpack(x)
    out, delta = canonize_array(values, float(phi), ref_channel)
    return _repack(out, ts), float(delta)


def canonize_grad_phi(x: TimeSeries, phi: float, ref_channel: int = 0):
    """Entrywise derivative of ``canonize(x, phi)`` with respect to ``phi``."""
    values, ts = _unpack(x)
    _, grad, _ = canonize_grad_array(values, float(phi), ref_channel)
    return _repack(grad, ts)


def extract_shift(x: TimeSeries, y: TimeSeries, ref_channel: int = 0,
                  tol: float | None = None) -> float:
    """Recover ``t`` in ``(-L/2, L/2]`` such that ``y == circular_shift(x, t)``.

    The shift is read off the fundamental-bin angle difference.  When ``tol``
    is given, the reconstruction residual is checked against it.
    """
    xv, _ = _unpack(x)
    yv, _ = _unpack(y)
    if xv.shape != yv.shape:
        raise NotAShiftVariant(f"shape {xv.shape} != {yv.shape}")
    L = xv.shape[-1]
    ax = reference_angles(xv, ref_channel)
    ay = reference_angles(yv, ref_channel)
    t = float(wrap_angle(ax - ay)) * L / TWO_PI
    if tol is not None:
        resid = float(np.max(np.abs(circular_shift(xv, t) - yv)))
        if resid > tol:
            raise NotAShiftVariant(f"residual {resid:.3g} exceeds {tol:.3g}")
    return t


def angle_for_shift(x: TimeSeries, t_shift: float, ref_channel: int = 0) -> float:
    """The target angle whose canonization of ``x`` equals ``circular_shift(x, t_shift)``."""
    values, _ = _unpack(x)
    L = values.shape[-1]
    return float(wrap_angle(reference_angles(values, ref_channel) - TWO_PI * t_shift / L))
