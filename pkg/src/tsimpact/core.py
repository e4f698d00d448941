"""Shared domain types with validated construction.

All types are immutable after construction (frozen dataclasses over
read-only numpy arrays) and safe to share across concurrent workers.
Invariant-violating data is rejected with a typed :mod:`tsimpact.errors`
exception, never silently repaired.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    AdditivityViolation,
    EmptyDataset,
    InvalidSimplifiedInput,
    LabelCountMismatch,
    NonFiniteValue,
    NonUniformLength,
    SeriesTooShort,
)

#: Tolerance for the impact-vector additivity invariant
#: |sum(phi) - (prediction - base_value)|.
ADDITIVITY_TOL = 1e-8

#: Tolerance for the intermediate-averaging invariant of ClassExplanation.
INTERMEDIATE_MEAN_TOL = 1e-12


def _frozen_float_array(values: Iterable[float], context: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{context}: non-finite value found")
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TimeSeries:
    """A fixed-length real-valued sequence; element of the input space.

    Parameters
    ----------
    values : sequence of float
        The signal samples. Length d must be at least 2 and every value
        must be finite.
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = _frozen_float_array(self.values, "TimeSeries")
        if arr.ndim != 1:
            raise SeriesTooShort("TimeSeries requires a 1-d sequence")
        if arr.shape[0] < 2:
            raise SeriesTooShort(
                f"series length {arr.shape[0]} < minimum length 2"
            )
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def __array__(self, dtype=None) -> np.ndarray:
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def d(self) -> int:
        """Series length."""
        return len(self)


@dataclass(frozen=True)
class SimplifiedInput:
    """A binary vector selecting which of d' fragments stay active."""

    bits: Tuple[int, ...]

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if len(bits) < 1:
            raise InvalidSimplifiedInput("need at least one fragment")
        if any(b not in (0, 1) for b in bits):
            raise InvalidSimplifiedInput(f"entries must be 0 or 1, got {bits}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def ones(cls, d_prime: int) -> "SimplifiedInput":
        return cls((1,) * d_prime)

    @classmethod
    def zeros(cls, d_prime: int) -> "SimplifiedInput":
        return cls((0,) * d_prime)

    def __len__(self) -> int:
        return len(self.bits)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=float)

    @property
    def size(self) -> int:
        """Number of active fragments |z'|."""
        return sum(self.bits)


@dataclass(frozen=True)
class LabeledDataset:
    """Equal-length series with optional class labels.

    ``series`` is an (n, d) read-only float array; ``labels`` is a tuple
    of opaque strings (never parsed as numbers) or ``None``. Class
    iteration order is lexicographic everywhere so runs are reproducible.
    """

    series: np.ndarray
    labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self) -> None:
        arr = _frozen_float_array(self.series, "LabeledDataset")
        if arr.ndim != 2:
            raise NonUniformLength("dataset series must form a 2-d array")
        if arr.shape[0] < 1:
            raise EmptyDataset("dataset needs at least one series")
        if arr.shape[1] < 2:
            raise SeriesTooShort(
                f"series length {arr.shape[1]} < minimum length 2"
            )
        object.__setattr__(self, "series", arr)
        if self.labels is not None:
            labels = tuple(str(label) for label in self.labels)
            if len(labels) != arr.shape[0]:
                raise LabelCountMismatch(
                    f"{len(labels)} labels for {arr.shape[0]} series"
                )
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.series.shape[0])

    @property
    def d(self) -> int:
        """Common series length."""
        return int(self.series.shape[1])

    @property
    def classes(self) -> Tuple[str, ...]:
        """Distinct labels in lexicographic order (empty if unlabeled)."""
        if self.labels is None:
            return ()
        return tuple(sorted(set(self.labels)))

    def class_members(self, label: str) -> np.ndarray:
        """Row indices of the series whose label equals ``label``."""
        if self.labels is None:
            return np.arange(len(self))
        return np.flatnonzero(np.asarray(self.labels, dtype=object) == label)

    def restricted_to(self, label: str) -> "LabeledDataset":
        """The sub-dataset of one class (labels retained)."""
        idx = self.class_members(label)
        labels = tuple(self.labels[i] for i in idx) if self.labels else None
        return LabeledDataset(self.series[idx], labels)


def validate_dataset(
    raw_series: Sequence[Sequence[float]],
    raw_labels: Optional[Sequence] = None,
) -> LabeledDataset:
    """Build a :class:`LabeledDataset` from raw Python sequences.

    Raises
    ------
    NonUniformLength
        If series lengths differ.
    NonFiniteValue
        If any value is NaN or infinite.
    LabelCountMismatch
        If ``raw_labels`` is given with the wrong length.
    """
    if len(raw_series) == 0:
        raise EmptyDataset("no series given")
    lengths = {len(s) for s in raw_series}
    if len(lengths) != 1:
        raise NonUniformLength(f"series lengths differ: {sorted(lengths)}")
    rows = []
    for i, s in enumerate(raw_series):
        row = np.asarray(list(s), dtype=float)
        if not np.all(np.isfinite(row)):
            raise NonFiniteValue(f"non-finite value in series {i}")
        rows.append(row)
    labels = None
    if raw_labels is not None:
        if len(raw_labels) != len(rows):
            raise LabelCountMismatch(
                f"{len(raw_labels)} labels for {len(rows)} series"
            )
        labels = tuple(str(label) for label in raw_labels)
    return LabeledDataset(np.stack(rows), labels)


@dataclass(frozen=True, eq=False)
class ImpactVector:
    """Per-fragment impacts phi with the regression anchors.

    Attributes
    ----------
    phi : ndarray of shape (d',)
        Impact of each fragment on the prediction.
    base_value : float
        Model output with every fragment disabled, f(h_x(0)).
    prediction : float
        Model output on the untouched specimen, f(x).
    fragment_count : int
        d', kept explicit for serialization.

    The efficiency constraint ``sum(phi) == prediction - base_value``
    (within ``ADDITIVITY_TOL``) is enforced at construction.
    """

    phi: np.ndarray
    base_value: float
    prediction: float
    fragment_count: int

    def __post_init__(self) -> None:
        phi = _frozen_float_array(self.phi, "ImpactVector")
        if phi.ndim != 1 or phi.shape[0] != self.fragment_count:
            raise InvalidSimplifiedInput(
                f"phi has shape {phi.shape}, expected ({self.fragment_count},)"
            )
        base = float(self.base_value)
        pred = float(self.prediction)
        if not (np.isfinite(base) and np.isfinite(pred)):
            raise NonFiniteValue("ImpactVector anchors must be finite")
        gap = abs(float(phi.sum()) - (pred - base))
        if gap > ADDITIVITY_TOL:
            raise AdditivityViolation(
                f"sum(phi) misses prediction - base_value by {gap:.3e}"
            )
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "base_value", base)
        object.__setattr__(self, "prediction", pred)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImpactVector):
            return NotImplemented
        return (
            self.fragment_count == other.fragment_count
            and self.base_value == other.base_value
            and self.prediction == other.prediction
            and np.array_equal(self.phi, other.phi)
        )

    __hash__ = None

    @property
    def d_prime(self) -> int:
        return self.fragment_count


@dataclass(frozen=True)
class ClassExplanation:
    """Final per-class impact vectors, optionally with intermediates.

    ``per_class`` maps class label c to the final vector; ``intermediates``
    maps (c, environment class c') to the vector computed against that
    environment. When intermediates are retained, the final vector must be
    their entrywise mean over c' (checked within ``INTERMEDIATE_MEAN_TOL``).
    ``query_count`` records the number of model evaluations spent.
    """

    per_class: Mapping[str, ImpactVector]
    intermediates: Optional[Mapping[Tuple[str, str], ImpactVector]] = None
    query_count: int = 0

    def __post_init__(self) -> None:
        per_class = dict(self.per_class)
        object.__setattr__(self, "per_class", per_class)
        if self.intermediates is not None:
            inter = dict(self.intermediates)
            object.__setattr__(self, "intermediates", inter)
            env_classes = sorted({cc[1] for cc in inter})
            for c, final in per_class.items():
                stack = np.stack([inter[(c, e)].phi for e in env_classes])
                gap = np.max(np.abs(stack.mean(axis=0) - final.phi))
                if gap > INTERMEDIATE_MEAN_TOL:
                    raise AdditivityViolation(
                        f"class {c!r}: final vector deviates from the mean "
                        f"of its intermediates by {gap:.3e}"
                    )

    @property
    def classes(self) -> Tuple[str, ...]:
        return tuple(sorted(self.per_class))
