"""Shift canonicalization of time series through Fourier phase alignment."""

__version__ = "0.1.0"

from .canon import canonize, canonize_grad_phi, extract_shift, phase_difference
from .signal import (
    Spectrum,
    TimeSeries,
    circular_shift,
    dft_real,
    idft_real,
    magnitude_spectrum,
    phase_at_bin,
    znormalize,
)
