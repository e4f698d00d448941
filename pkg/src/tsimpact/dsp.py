"""Real-input DFT, FIRLS bandstop design, and zero-phase filtering.

The transform pair works on the ``1 + d//2`` non-redundant bins of a
real-valued series. The direct O(d^2) summation is the production path
(desk-scale lengths, and it doubles as the oracle for the FFT-backed fast
path). Bandstop filters are linear-phase type I, designed by least squares
against a piecewise-linear desired amplitude with one-bin transition ramps;
with uniform weighting over the whole frequency axis the normal equations
are diagonal, so the optimum is a closed-form cosine-moment integral. A DC
equality constraint keeps the mean of the signal untouched, matching the
transform conventions elsewhere in the package (bin 0 is never perturbed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    BandOutOfRange,
    DimensionMismatch,
    FilterLongerThanSeries,
    NonFiniteValue,
    OverlappingBands,
    SingularDesignSystem,
)

_IMAG_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class Spectrum:
    """Non-redundant DFT bins of a real series of length ``original_length``.

    ``bins[w] = sum_t x_t * exp(-2j*pi*w*t/d)`` for ``w`` in
    ``0..d//2``. Bin 0 (DC) is real; so is the Nyquist bin when d is even.
    Imaginary parts below a small numerical tolerance are snapped to zero,
    anything larger is rejected.
    """

    bins: np.ndarray
    original_length: int

    def __post_init__(self) -> None:
        bins = np.asarray(self.bins, dtype=complex)
        d = int(self.original_length)
        if bins.ndim != 1 or bins.shape[0] != 1 + d // 2:
            raise DimensionMismatch(
                f"{bins.shape[0]} bins for series length {d}"
            )
        if not np.all(np.isfinite(bins.view(float))):
            raise NonFiniteValue("Spectrum: non-finite bin")
        scale = max(1.0, float(np.max(np.abs(bins))))
        real_bins = [0] + ([d // 2] if d % 2 == 0 else [])
        for w in real_bins:
            if abs(bins[w].imag) > _IMAG_SNAP_TOL * scale:
                raise DimensionMismatch(
                    f"bin {w} of a real-input spectrum must be real"
                )
            bins[w] = bins[w].real
        bins = np.ascontiguousarray(bins)
        bins.flags.writeable = False
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "original_length", d)

    @property
    def n_bins(self) -> int:
        return int(self.bins.shape[0])


@dataclass(frozen=True)
class FirFilter:
    """Linear-phase type-I FIR filter (odd length, symmetric coefficients)."""

    coefficients: np.ndarray

    def __post_init__(self) -> None:
        h = np.asarray(self.coefficients, dtype=float)
        if h.ndim != 1 or h.shape[0] % 2 == 0:
            raise DimensionMismatch("filter length must be odd")
        if not np.all(np.isfinite(h)):
            raise NonFiniteValue("FirFilter: non-finite coefficient")
        if np.max(np.abs(h - h[::-1])) > 1e-10:
            raise DimensionMismatch("coefficients must be symmetric")
        h = np.ascontiguousarray(h)
        h.flags.writeable = False
        object.__setattr__(self, "coefficients", h)

    def __len__(self) -> int:
        return int(self.coefficients.shape[0])


def rdft(x, *, fast: bool = False) -> Spectrum:
    """Transform a real series into its non-redundant spectrum.

    Parameters
    ----------
    x : array-like of shape (d,)
        Real input series.
    fast : bool
        Use the FFT-backed path instead of the direct summation. Both
        agree within 1e-10 relative; the direct form is the reference.

    Returns
    -------
    Spectrum
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatch("rdft expects a 1-d series")
    d = arr.shape[0]
    if fast:
        bins = np.fft.rfft(arr)
    else:
        omega = np.arange(1 + d // 2)
        t = np.arange(d)
        # direct evaluation of the defining sum, one row per bin
        kernel = np.exp((-2j * np.pi / d) * np.outer(omega, t))
        bins = kernel @ arr
    return Spectrum(bins, d)


def irdft(s: Spectrum, *, fast: bool = False) -> np.ndarray:
    """Invert :func:`rdft`; round-trips within 1e-10 for any length.

    The reconstruction doubles every interior bin (each stands for a
    conjugate pair) and counts DC -- and Nyquist, for even lengths -- once:

    ``x_t = (1/d) * (X_0 + 2*sum_{0<w<d/2} Re(X_w e^{2j pi w t/d})
    + [d even] * X_{d/2} * (-1)^t)``
    """
    d = s.original_length
    if fast:
        return np.fft.irfft(s.bins, n=d)
    t = np.arange(d)
    x = np.full(d, s.bins[0].real)
    interior_stop = d // 2 if d % 2 == 1 else d // 2 - 1
    if interior_stop >= 1:
        omega = np.arange(1, interior_stop + 1)
        kernel = np.exp((2j * np.pi / d) * np.outer(omega, t))
        x = x + 2.0 * (s.bins[1:interior_stop + 1] @ kernel).real
    if d % 2 == 0:
        x = x + s.bins[d // 2].real * np.where(t % 2 == 0, 1.0, -1.0)
    return x / d


# ---------------------------------------------------------------------
# FIRLS bandstop design
# ---------------------------------------------------------------------

def default_filter_length(d: int) -> int:
    """Largest odd length <= max(d//2, 3), clamped to the series length."""
    L = max(d // 2, 3)
    if L % 2 == 0:
        L -= 1
    if L > d:
        L = d if d % 2 == 1 else d - 1
    return L


def _validate_bands(
    stop_bands: Sequence[Tuple[int, int]], d: int
) -> List[Tuple[int, int]]:
    half = d // 2
    bands = [(int(lo), int(hi)) for lo, hi in stop_bands]
    for lo, hi in bands:
        if lo > hi:
            raise OverlappingBands(f"band ({lo}, {hi}) has low > high")
        if lo < 1 or hi > half:
            raise BandOutOfRange(
                f"band ({lo}, {hi}) outside bins [1, {half}]"
            )
    for (_, hi_a), (lo_b, _) in zip(bands, bands[1:]):
        if lo_b <= hi_a:
            raise OverlappingBands("stop bands overlap or are unsorted")
        if lo_b == hi_a + 1:
            # contiguous bands would stack an up-ramp onto a down-ramp at
            # the shared edge; callers merge such bands before designing
            raise SingularDesignSystem(
                f"bands ending at {hi_a} and starting at {lo_b} are "
                "contiguous; merge them into one stop interval"
            )
    return bands


def _desired_segments(
    bands: Sequence[Tuple[int, int]], d: int
) -> List[Tuple[float, float, float, float]]:
    """Piecewise-linear desired amplitude as (f0, f1, g0, g1) segments.

    Frequencies are normalized so 1 is the Nyquist rate (f = 2*bin/d).
    Each stop band gets gain 0 with one-bin linear ramps on both sides;
    everything else has gain 1. Zero-width segments are dropped and ramps
    are clipped to [0, 1].
    """
    f = lambda b: 2.0 * b / d
    segs: List[Tuple[float, float, float, float]] = []
    cursor = 0.0
    for lo, hi in bands:
        ramp_lo, ramp_hi = max(f(lo - 1), 0.0), min(f(hi + 1), 1.0)
        if ramp_lo > cursor:
            segs.append((cursor, ramp_lo, 1.0, 1.0))
        if f(lo) > ramp_lo:
            segs.append((ramp_lo, f(lo), 1.0, 0.0))
        if f(hi) > f(lo):
            segs.append((f(lo), f(hi), 0.0, 0.0))
        if ramp_hi > f(hi):
            segs.append((f(hi), ramp_hi, 0.0, 1.0))
        cursor = ramp_hi
    if cursor < 1.0:
        segs.append((cursor, 1.0, 1.0, 1.0))
    return segs


def _cosine_moments(
    segs: Sequence[Tuple[float, float, float, float]], m: int
) -> np.ndarray:
    """b_k = integral of D(f)*cos(pi*k*f) df over the desired response D."""
    b = np.zeros(m + 1)
    for f0, f1, g0, g1 in segs:
        slope = (g1 - g0) / (f1 - f0)
        icept = g0 - slope * f0
        b[0] += slope * (f1**2 - f0**2) / 2.0 + icept * (f1 - f0)
        k = np.arange(1, m + 1)
        w = np.pi * k
        b[1:] += (
            (slope * f1 + icept) * np.sin(w * f1)
            - (slope * f0 + icept) * np.sin(w * f0)
        ) / w + slope * (np.cos(w * f1) - np.cos(w * f0)) / w**2
    return b


def design_firls_bandstop(
    stop_bands: Sequence[Tuple[int, int]],
    d: int,
    L: Optional[int] = None,
) -> FirFilter:
    """Design a least-squares linear-phase bandstop filter.

    Parameters
    ----------
    stop_bands : list of (low_bin, high_bin)
        Disjoint, sorted, inclusive bin ranges within [1, d//2] to
        suppress. An empty list yields an all-pass design.
    d : int
        Length of the series the filter is meant for (fixes the bin grid).
    L : int, optional
        Odd filter length, 3 <= L <= d. Defaults to
        :func:`default_filter_length`.

    Returns
    -------
    FirFilter

    Notes
    -----
    The amplitude response of a type-I filter is
    ``A(f) = c_0 + 2*sum_n c_n cos(pi n f)`` with f in [0, 1]. Minimizing
    the integrated squared error against the desired response D under
    uniform weighting makes the normal matrix diagonal (cosine
    orthogonality on [0, 1]), so ``c_k`` equals the cosine moment of D.
    A Lagrange multiplier then enforces ``A(0) = 1`` exactly, keeping the
    series mean intact regardless of the band layout.
    """
    if L is None:
        L = default_filter_length(d)
    L = int(L)
    if L % 2 == 0 or L < 3:
        raise DimensionMismatch(f"filter length must be odd and >= 3, got {L}")
    if L > d:
        raise FilterLongerThanSeries(f"filter length {L} > series length {d}")
    bands = _validate_bands(stop_bands, d)
    m = (L - 1) // 2
    segs = _desired_segments(bands, d)
    c = _cosine_moments(segs, m)
    # A(0) = g.c with g = [1, 2, 2, ...]; inv-Hessian direction is uniform
    g = np.full(m + 1, 2.0)
    g[0] = 1.0
    step = np.full(m + 1, 0.5)
    lam = (g @ c - 1.0) / (g @ step)
    c = c - lam * step
    h = np.concatenate([c[:0:-1], c])
    return FirFilter(h)


def amplitude_response(f: FirFilter, at_bins: Sequence[float], d: int) -> np.ndarray:
    """Real amplitude response A at the given (fractional) bin positions."""
    h = f.coefficients
    m = (len(h) - 1) // 2
    c0 = h[m]
    cn = h[m + 1:]
    freqs = 2.0 * np.asarray(at_bins, dtype=float) / d
    n = np.arange(1, m + 1)
    return c0 + 2.0 * np.cos(np.pi * np.outer(freqs, n)) @ cn


def apply_zero_phase(f: FirFilter, x) -> np.ndarray:
    """Filter forward then backward (zero phase, squared magnitude).

    The input is reflect-padded with L-1 samples on each side (mirroring
    about the half-sample position past each edge, so edge values are
    repeated), both passes are applied in one convolution with the
    autocorrelation of the impulse response, and the pad is trimmed.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DimensionMismatch("apply_zero_phase expects a 1-d series")
    L = len(f)
    d = arr.shape[0]
    if L > d:
        raise FilterLongerThanSeries(f"filter length {L} > series length {d}")
    if L == 1:
        return arr * float(f.coefficients[0]) ** 2
    pad = L - 1
    xp = np.pad(arr, pad, mode="symmetric")
    both_passes = np.convolve(f.coefficients, f.coefficients)
    y = np.convolve(xp, both_passes, mode="full")[(L - 1):(L - 1) + xp.shape[0]]
    return y[pad:pad + d]
