"""Mapping functions h_x from simplified inputs to perturbed series.

A mapping function pins a specimen x and a fragmentation of it (time
slices, frequency bands, or its two summary statistics) and turns a binary
fragment selection z' into a concrete series: active fragments keep the
specimen's content, disabled fragments are overwritten from a replacement
source. Construction materializes everything random (noise draws, sampled
replacement series) exactly once, so a mapping function is deterministic
and safe to evaluate concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import dsp
from .core import LabeledDataset, SimplifiedInput, TimeSeries
from .errors import (
    DimensionMismatch,
    EmptyReference,
    FragmentCountOutOfRange,
    VarianceUndefined,
    ZeroVariance,
)

MAPPING_KINDS = ("time_slice", "freq_filter", "freq_patch", "statistics")
REPLACEMENT_KINDS = (
    "zero",
    "local_mean",
    "global_mean",
    "local_noise",
    "global_noise",
    "sample",
)


@dataclass(frozen=True)
class SliceAssignment:
    """Maps each time index to one of d' contiguous, near-equal slices."""

    kappa: np.ndarray

    def __post_init__(self) -> None:
        kappa = np.asarray(self.kappa, dtype=int)
        if kappa.ndim != 1 or kappa.shape[0] < 1:
            raise DimensionMismatch("kappa must be a 1-d index table")
        if np.any(np.diff(kappa) < 0) or np.any(np.diff(kappa) > 1):
            raise DimensionMismatch(
                "slices must be contiguous and numbered in time order"
            )
        if kappa[0] != 0:
            raise DimensionMismatch("slice numbering must start at 0")
        lengths = np.bincount(kappa)
        if lengths.max() - lengths.min() > 1:
            raise DimensionMismatch("slice lengths may differ by at most 1")
        kappa = np.ascontiguousarray(kappa)
        kappa.flags.writeable = False
        object.__setattr__(self, "kappa", kappa)

    @property
    def fragment_count(self) -> int:
        return int(self.kappa[-1]) + 1

    def slice_bounds(self) -> List[Tuple[int, int]]:
        """Half-open (start, stop) index range of each slice."""
        edges = np.flatnonzero(np.diff(self.kappa)) + 1
        starts = np.concatenate([[0], edges])
        stops = np.concatenate([edges, [self.kappa.shape[0]]])
        return list(zip(starts.tolist(), stops.tolist()))


@dataclass(frozen=True)
class BandAssignment:
    """Partition of the non-DC bins 1..d//2 into d' frequency bands.

    ``band_edges`` holds d'+1 strictly increasing bin indices starting at
    1 and ending at d//2 + 1; band k covers bins
    [band_edges[k], band_edges[k+1]). Bin 0 (DC) belongs to no band and is
    always preserved.
    """

    band_edges: Tuple[int, ...]
    original_length: int

    def __post_init__(self) -> None:
        edges = tuple(int(e) for e in self.band_edges)
        d = int(self.original_length)
        if len(edges) < 2:
            raise FragmentCountOutOfRange("need at least one band")
        if edges[0] != 1 or edges[-1] != d // 2 + 1:
            raise DimensionMismatch(
                f"band edges must run from 1 to {d // 2 + 1}, got "
                f"{edges[0]}..{edges[-1]}"
            )
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise DimensionMismatch("band edges must strictly increase")
        object.__setattr__(self, "band_edges", edges)
        object.__setattr__(self, "original_length", d)

    @property
    def fragment_count(self) -> int:
        return len(self.band_edges) - 1

    def band_bins(self, k: int) -> Tuple[int, int]:
        """Inclusive (low, high) bin range of band k."""
        return self.band_edges[k], self.band_edges[k + 1] - 1

    def bin_to_band(self) -> np.ndarray:
        """Band index per bin 0..d//2; DC gets -1 (no band)."""
        table = np.full(self.original_length // 2 + 1, -1, dtype=int)
        for k in range(self.fragment_count):
            lo, hi = self.band_bins(k)
            table[lo:hi + 1] = k
        return table


def make_slice_assignment(d: int, d_prime: int) -> SliceAssignment:
    """Partition {0..d-1} into d' contiguous slices, remainder first.

    The first ``d mod d'`` slices get length ``ceil(d/d')``, the rest
    ``floor(d/d')``.
    """
    if not 1 <= d_prime <= d:
        raise FragmentCountOutOfRange(
            f"d'={d_prime} outside [1, {d}] for slice assignment"
        )
    base, rem = divmod(d, d_prime)
    lengths = [base + 1] * rem + [base] * (d_prime - rem)
    return SliceAssignment(np.repeat(np.arange(d_prime), lengths))


def make_band_assignment(d: int, d_prime: int) -> BandAssignment:
    """Split bins 1..d//2 into d' bands with quadratically growing widths.

    Interior edges follow ``e_k = 1 + round((d//2 - 1) * (k/d')^2)``
    (banker's rounding); the outer edges are pinned to 1 and d//2 + 1,
    and any non-increasing edge is bumped up by one, propagating right.
    Consecutive widths may shrink by at most 1 (rounding slack); the
    quadratic trend guarantees no more.
    """
    half = d // 2
    if not 1 <= d_prime <= half:
        raise FragmentCountOutOfRange(
            f"d'={d_prime} outside [1, {half}] for band assignment"
        )
    edges = [1]
    for k in range(1, d_prime):
        e = 1 + round((half - 1) * (k / d_prime) ** 2)
        edges.append(max(e, edges[-1] + 1))
    edges.append(half + 1)
    return BandAssignment(tuple(edges), d)


@dataclass(frozen=True)
class ReplacementStrategy:
    """How disabled content is filled in: one of the six replacement kinds.

    ``reference`` is the set the replacement is computed from (unused for
    ``zero``); ``rng_seed`` feeds the noise/sample kinds.
    """

    kind: str
    reference: Optional[LabeledDataset] = None
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in REPLACEMENT_KINDS:
            raise DimensionMismatch(
                f"unknown replacement kind {self.kind!r}; "
                f"expected one of {REPLACEMENT_KINDS}"
            )


def build_replacement(
    strategy: ReplacementStrategy,
    d: int,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Materialize the replacement series r for a series length d.

    zero: the zero series. local_mean: per-index mean over the reference.
    global_mean: the grand mean everywhere. local_noise: Gaussian around
    the per-index mean with per-index sample variance (divisor |S|-1).
    global_noise: Gaussian around the grand mean with pooled variance
    (divisor d|S|-1). sample: one reference series drawn uniformly.
    """
    if strategy.kind == "zero":
        return np.zeros(d)
    ref = strategy.reference
    if ref is None:
        raise EmptyReference(
            f"replacement kind {strategy.kind!r} needs a reference set"
        )
    S = ref.series
    if strategy.kind in ("local_mean", "local_noise", "sample") and ref.d != d:
        raise DimensionMismatch(
            f"reference length {ref.d} != specimen length {d}"
        )
    if rng is None:
        rng = np.random.default_rng(strategy.rng_seed)
    if strategy.kind == "local_mean":
        return S.mean(axis=0)
    if strategy.kind == "global_mean":
        return np.full(d, S.mean())
    if strategy.kind == "local_noise":
        if S.shape[0] < 2:
            raise VarianceUndefined(
                "local_noise needs at least 2 reference series"
            )
        return rng.normal(S.mean(axis=0), S.std(axis=0, ddof=1))
    if strategy.kind == "global_noise":
        if S.size < 2:
            raise VarianceUndefined(
                "global_noise needs at least 2 reference values"
            )
        pooled_std = np.sqrt(np.sum((S - S.mean()) ** 2) / (S.size - 1))
        return rng.normal(S.mean(), pooled_std, size=d)
    # sample
    return S[rng.integers(S.shape[0])].copy()


@dataclass(frozen=True)
class MappingFunction:
    """A concrete h_x: fragment selections to perturbed series.

    ``replacement`` holds the materialized replacement/patch series for
    the time_slice and freq_patch kinds, the (mean, std) replacement
    statistics for the statistics kind, and None for freq_filter (which
    removes content by filtering instead of substitution). The invariant
    h_x(1) = x holds exactly for time_slice/statistics/freq_filter and
    within transform round-trip error (1e-10) for freq_patch.
    """

    kind: str
    specimen: TimeSeries
    fragment_count: int
    assignment: Union[SliceAssignment, BandAssignment, None]
    replacement: Union[np.ndarray, Tuple[float, float], None]
    _design_cache: Dict[Tuple, dsp.FirFilter] = field(
        default_factory=dict, repr=False, compare=False
    )

    def __post_init__(self) -> None:
        if self.kind not in MAPPING_KINDS:
            raise DimensionMismatch(f"unknown mapping kind {self.kind!r}")
        d = len(self.specimen)
        if isinstance(self.assignment, SliceAssignment):
            if self.assignment.kappa.shape[0] != d:
                raise DimensionMismatch("slice table length != series length")
            if self.assignment.fragment_count != self.fragment_count:
                raise DimensionMismatch("fragment_count != slice count")
        if isinstance(self.assignment, BandAssignment):
            if self.assignment.original_length != d:
                raise DimensionMismatch("band grid length != series length")
            if self.assignment.fragment_count != self.fragment_count:
                raise DimensionMismatch("fragment_count != band count")
        if isinstance(self.replacement, np.ndarray):
            arr = np.ascontiguousarray(np.asarray(self.replacement, float))
            if arr.shape != (d,):
                raise DimensionMismatch(
                    f"replacement length {arr.shape} != specimen length {d}"
                )
            arr.flags.writeable = False
            object.__setattr__(self, "replacement", arr)

    def __call__(self, z_prime: SimplifiedInput) -> np.ndarray:
        return apply_mapping(self, z_prime)


def _check_z(h: MappingFunction, z_prime: SimplifiedInput) -> None:
    if len(z_prime) != h.fragment_count:
        raise DimensionMismatch(
            f"|z'| = {len(z_prime)} but mapping has d' = {h.fragment_count}"
        )


def time_slice_map(h: MappingFunction, z_prime: SimplifiedInput) -> np.ndarray:
    """Keep active slices from the specimen, take the rest from r."""
    _check_z(h, z_prime)
    x = h.specimen.values
    if all(z_prime.bits):
        return x.copy()
    active = np.asarray(z_prime.bits, dtype=bool)[h.assignment.kappa]
    return np.where(active, x, h.replacement)


def freq_patch_map(h: MappingFunction, z_prime: SimplifiedInput) -> np.ndarray:
    """Substitute the spectrum of disabled bands from the patch series.

    Bin 0 always keeps the specimen's value, so the series mean survives
    every perturbation.
    """
    _check_z(h, z_prime)
    x = h.specimen.values
    spec_x = dsp.rdft(x).bins
    spec_r = dsp.rdft(h.replacement).bins
    band_of = h.assignment.bin_to_band()
    active = np.asarray((1,) + z_prime.bits, dtype=bool)[band_of + 1]
    active[0] = True
    mixed = np.where(active, spec_x, spec_r)
    return dsp.irdft(dsp.Spectrum(mixed, len(x)))


def _disabled_stop_bands(
    assignment: BandAssignment, z_prime: SimplifiedInput
) -> Tuple[Tuple[int, int], ...]:
    """Merge disabled fragments into maximal contiguous stop intervals."""
    stops: List[Tuple[int, int]] = []
    for k, bit in enumerate(z_prime.bits):
        if bit:
            continue
        lo, hi = assignment.band_bins(k)
        if stops and stops[-1][1] + 1 == lo:
            stops[-1] = (stops[-1][0], hi)
        else:
            stops.append((lo, hi))
    return tuple(stops)


def freq_filter_map(h: MappingFunction, z_prime: SimplifiedInput) -> np.ndarray:
    """Remove disabled bands with a zero-phase FIRLS bandstop filter."""
    _check_z(h, z_prime)
    x = h.specimen.values
    if all(z_prime.bits):
        return x.copy()
    stops = _disabled_stop_bands(h.assignment, z_prime)
    design = h._design_cache.get(stops)
    if design is None:
        design = dsp.design_firls_bandstop(stops, len(x))
        h._design_cache[stops] = design
    return dsp.apply_zero_phase(design, x)


def statistics_map(h: MappingFunction, z_prime: SimplifiedInput) -> np.ndarray:
    """Replace the specimen's mean and/or standard deviation.

    Fragment 0 is the mean, fragment 1 the standard deviation; disabling
    one re-normalizes the specimen to the replacement's statistic while
    the other stays untouched.
    """
    _check_z(h, z_prime)
    x = h.specimen.values
    if all(z_prime.bits):
        return x.copy()
    mean_r, std_r = h.replacement
    mean_x = float(x.mean())
    std_x = float(x.std())  # population convention, divisor d
    target_mean = mean_x if z_prime.bits[0] else mean_r
    if z_prime.bits[1]:
        scale = 1.0
    else:
        if std_x == 0.0:
            raise ZeroVariance(
                "constant specimen has no scale to replace"
            )
        scale = std_r / std_x
    return (x - mean_x) * scale + target_mean


_DISPATCH = {
    "time_slice": time_slice_map,
    "freq_patch": freq_patch_map,
    "freq_filter": freq_filter_map,
    "statistics": statistics_map,
}


def apply_mapping(h: MappingFunction, z_prime: SimplifiedInput) -> np.ndarray:
    """Evaluate h_x(z') for any mapping kind."""
    return _DISPATCH[h.kind](h, z_prime)


def make_mapping(
    kind: str,
    specimen: TimeSeries,
    d_prime: Optional[int] = None,
    strategy: Optional[ReplacementStrategy] = None,
    *,
    assignment: Union[SliceAssignment, BandAssignment, None] = None,
    replacement_series: Optional[np.ndarray] = None,
    rng: Optional[np.random.Generator] = None,
) -> MappingFunction:
    """Construct a mapping function for a specimen.

    Randomness (noise draws, the sampled replacement series) is resolved
    here, once; pass ``replacement_series`` to pin the replacement
    explicitly (the orchestrator does this for its per-run draws).
    ``d_prime`` may be omitted when ``assignment`` is given; the
    statistics kind always has d' = 2.
    """
    d = len(specimen)
    if kind == "statistics":
        if d_prime not in (None, 2):
            raise FragmentCountOutOfRange("statistics mapping has d' = 2")
        if replacement_series is None:
            replacement_series = build_replacement(strategy, d, rng)
        r = np.asarray(replacement_series, dtype=float)
        stats = (float(r.mean()), float(r.std()))
        return MappingFunction("statistics", specimen, 2, None, stats)

    if kind == "time_slice":
        if assignment is None:
            assignment = make_slice_assignment(d, d_prime)
    elif kind in ("freq_patch", "freq_filter"):
        if assignment is None:
            assignment = make_band_assignment(d, d_prime)
    else:
        raise DimensionMismatch(f"unknown mapping kind {kind!r}")
    count = assignment.fragment_count

    if kind == "freq_filter":
        return MappingFunction("freq_filter", specimen, count, assignment, None)

    if replacement_series is None:
        replacement_series = build_replacement(strategy, d, rng)
    return MappingFunction(
        kind, specimen, count, assignment,
        np.asarray(replacement_series, dtype=float),
    )
