"""Explanation similarity: Pearson over impact pairs, median aggregation.

Two explanations of the same specimen are compared fragment-by-fragment:
the d' pairs (phi_k, psi_k) form the correlation points and the Pearson
coefficient over them is the similarity. Constant vectors have no
defined correlation; they yield NaN (the undefined marker) and are
excluded from medians rather than counted as zero similarity.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .core import ImpactVector
from .errors import AllUndefined, DimensionMismatch, IncompatibleExplanations


def _as_vector(v) -> np.ndarray:
    if isinstance(v, ImpactVector):
        return v.phi
    return np.asarray(v, dtype=float)


def pearson_similarity(phi, psi) -> float:
    """Pearson correlation of two impact vectors; NaN when undefined."""
    a = _as_vector(phi)
    b = _as_vector(psi)
    if a.shape != b.shape:
        raise DimensionMismatch(
            f"impact vectors of different lengths: {a.shape} vs {b.shape}"
        )
    if a.shape[0] < 2:
        raise DimensionMismatch("need at least 2 fragments to correlate")
    da = a - a.mean()
    db = b - b.mean()
    denom = math.sqrt(float(da @ da) * float(db @ db))
    if denom == 0.0:
        return math.nan
    return float(np.clip((da @ db) / denom, -1.0, 1.0))


def median_similarity(coefficients: Sequence[float]) -> float:
    """Median of the defined (non-NaN) coefficients.

    Even counts take the midpoint of the two central values.
    """
    defined = [float(c) for c in coefficients if not math.isnan(float(c))]
    if not defined:
        raise AllUndefined("no defined coefficients to aggregate")
    return float(statistics.median(defined))


@dataclass(frozen=True)
class SimilarityMatrix:
    """Median-correlation matrix over a set of models."""

    model_ids: Tuple[str, ...]
    values: np.ndarray
    domain: str = ""

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        n = len(self.model_ids)
        if vals.shape != (n, n):
            raise DimensionMismatch("matrix shape must match the model list")
        vals = np.ascontiguousarray(vals)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(
            self, "model_ids", tuple(str(m) for m in self.model_ids)
        )

    def entry(self, a: str, b: str) -> float:
        i = self.model_ids.index(a)
        j = self.model_ids.index(b)
        return float(self.values[i, j])


def build_matrix(
    explanations: Mapping[Tuple[str, object], ImpactVector],
    domain: str = "",
) -> SimilarityMatrix:
    """Median pairwise similarity over all specimens.

    ``explanations`` maps (model id, specimen id) to the impact vector
    that model produced for that specimen. Every model must cover every
    specimen with a matching fragment count.
    """
    models = sorted({m for m, _ in explanations})
    specimens = sorted({s for _, s in explanations}, key=repr)
    if not models:
        raise IncompatibleExplanations("no explanations given")
    for s in specimens:
        d_primes = set()
        for m in models:
            if (m, s) not in explanations:
                raise IncompatibleExplanations(
                    f"model {m!r} has no explanation for specimen {s!r}"
                )
            d_primes.add(explanations[(m, s)].fragment_count)
        if len(d_primes) != 1:
            raise IncompatibleExplanations(
                f"specimen {s!r} explained with differing fragment counts "
                f"{sorted(d_primes)}"
            )
    n = len(models)
    values = np.full((n, n), math.nan)
    for i, m1 in enumerate(models):
        for j in range(i, n):
            m2 = models[j]
            coeffs = [
                pearson_similarity(
                    explanations[(m1, s)], explanations[(m2, s)]
                )
                for s in specimens
            ]
            try:
                med = median_similarity(coeffs)
            except AllUndefined:
                med = math.nan
            values[i, j] = values[j, i] = med
    return SimilarityMatrix(tuple(models), values, domain)


def matrix_to_csv(matrix: SimilarityMatrix) -> str:
    """Serialize with a header row and column of model identifiers."""
    lines = ["," + ",".join(matrix.model_ids)]
    for i, m in enumerate(matrix.model_ids):
        row = ",".join(repr(float(v)) for v in matrix.values[i])
        lines.append(f"{m},{row}")
    return "\n".join(lines) + "\n"
