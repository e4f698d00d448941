"""Kernel-style SHAP solver: coalition sampling and constrained WLS.

The local explanation model is g(z') = f0 + sum_k phi_k z'_k with the
intercept fixed at f0 = f(h_x(0)) and the hard efficiency constraint
g(1) = f(x). Proper coalitions (neither empty nor full) are weighted by
the Shapley kernel

    pi(s) = (d'-1) / (binom(d', s) * s * (d'-s)),

which makes the weighted least-squares optimum coincide with the Shapley
values of the game v(z') = f(h_x(z')). An exact enumeration oracle over
all 2^d' coalitions backs the solver in tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

from .core import ImpactVector, SimplifiedInput
from .errors import (
    DegenerateCoalition,
    DimensionMismatch,
    NonFiniteValue,
    RankDeficient,
    TooManyFragments,
)

#: Ridge added to the normal-equation diagonal; numerical guard only.
RIDGE = 1e-10

#: Attempt multiplier before coalition sampling gives up on filling the
#: budget with unique coalitions (near-exhaustion guard).
_MAX_ATTEMPT_FACTOR = 20


def shapley_kernel_weight(d_prime: int, s: int) -> float:
    """Shapley kernel weight of a coalition of size s among d' fragments.

    Symmetric in s <-> d'-s. The empty and full coalitions have infinite
    weight and are handled as hard constraints instead.
    """
    if s <= 0 or s >= d_prime:
        raise DegenerateCoalition(
            f"coalition size {s} of {d_prime} is a constraint, not a sample"
        )
    return (d_prime - 1) / (math.comb(d_prime, s) * s * (d_prime - s))


@dataclass(frozen=True)
class CoalitionSample:
    """Regression sample: coalitions, kernel weights, model outputs."""

    coalitions: Tuple[SimplifiedInput, ...]
    weights: np.ndarray
    model_outputs: np.ndarray

    def __post_init__(self) -> None:
        coalitions = tuple(self.coalitions)
        w = np.asarray(self.weights, dtype=float)
        out = np.asarray(self.model_outputs, dtype=float)
        n = len(coalitions)
        if w.shape != (n,) or out.shape != (n,):
            raise DimensionMismatch(
                "weights and outputs must match the coalition count"
            )
        if n and not (np.all(np.isfinite(w)) and np.all(w > 0)):
            raise NonFiniteValue("kernel weights must be finite and positive")
        if not np.all(np.isfinite(out)):
            raise NonFiniteValue("model outputs must be finite")
        for z in coalitions:
            if z.size in (0, len(z)):
                raise DegenerateCoalition(
                    "the all-ones/all-zeros coalitions are constraints and "
                    "may not appear in the regression sample"
                )
        w = np.ascontiguousarray(w)
        out = np.ascontiguousarray(out)
        w.flags.writeable = False
        out.flags.writeable = False
        object.__setattr__(self, "coalitions", coalitions)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "model_outputs", out)


def exact_coalition_count(d_prime: int) -> int:
    """Number of proper coalitions, 2^d' - 2."""
    return (1 << d_prime) - 2


def sample_coalitions(
    d_prime: int, budget: int, rng_seed: int = 0
) -> List[SimplifiedInput]:
    """Draw the coalition set for one explanation.

    When all 2^d' - 2 proper coalitions fit the budget, every one of them
    is returned (exact mode). Otherwise coalition sizes are drawn with
    probability proportional to binom(d', s) * pi(s) -- which reduces to
    1/(s(d'-s)) -- a uniformly random coalition of that size is emitted
    together with its complement, and exact repeats are skipped. The
    result is deterministic in ``rng_seed``.
    """
    if budget < 2:
        raise DimensionMismatch(f"coalition budget must be >= 2, got {budget}")
    if d_prime < 1:
        raise DimensionMismatch("need at least one fragment")
    if d_prime == 1:
        return []
    if exact_coalition_count(d_prime) <= budget:
        return [
            SimplifiedInput(bits)
            for bits in itertools.product((0, 1), repeat=d_prime)
            if 0 < sum(bits) < d_prime
        ]
    rng = np.random.default_rng(rng_seed)
    sizes = np.arange(1, d_prime)
    size_p = 1.0 / (sizes * (d_prime - sizes))
    size_p /= size_p.sum()
    seen: Dict[Tuple[int, ...], None] = {}
    attempts = 0
    while len(seen) < budget and attempts < _MAX_ATTEMPT_FACTOR * budget:
        attempts += 1
        s = int(rng.choice(sizes, p=size_p))
        members = rng.choice(d_prime, size=s, replace=False)
        bits = [0] * d_prime
        for k in members:
            bits[k] = 1
        z = tuple(bits)
        if z not in seen:
            seen[z] = None
        if len(seen) < budget:
            comp = tuple(1 - b for b in z)
            if comp not in seen:
                seen[comp] = None
    return [SimplifiedInput(bits) for bits in seen]


def _merge_duplicates(
    sample: CoalitionSample,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Collapse repeated coalitions, summing weights, averaging outputs."""
    index: Dict[Tuple[int, ...], int] = {}
    rows: List[Tuple[int, ...]] = []
    weights: List[float] = []
    outputs: List[float] = []
    for z, w, out in zip(
        sample.coalitions, sample.weights, sample.model_outputs
    ):
        at = index.get(z.bits)
        if at is None:
            index[z.bits] = len(rows)
            rows.append(z.bits)
            weights.append(float(w))
            outputs.append(float(out))
        else:
            total = weights[at] + float(w)
            outputs[at] = (weights[at] * outputs[at] + float(w) * out) / total
            weights[at] = total
    return (
        np.asarray(rows, dtype=float),
        np.asarray(weights),
        np.asarray(outputs),
    )


def solve_explanation(
    sample: CoalitionSample, fx: float, f0: float
) -> ImpactVector:
    """Solve the constrained weighted least squares for the impacts.

    Minimizes sum_i pi_i (f_i - f0 - sum_k phi_k z'_ik)^2 subject to
    sum_k phi_k = fx - f0. The constraint eliminates the last coefficient;
    the reduced problem is solved via normal equations with a tiny ridge.

    Raises
    ------
    RankDeficient
        If the weighted reduced design has rank below d'-1 (too few
        distinct coalitions for the fragment count).
    """
    fx = float(fx)
    f0 = float(f0)
    delta = fx - f0
    if len(sample.coalitions) == 0:
        raise RankDeficient("empty coalition sample")
    d_prime = len(sample.coalitions[0])
    if d_prime == 1:
        return ImpactVector(np.array([delta]), f0, fx, 1)
    Z, w, out = _merge_duplicates(sample)
    if Z.shape[1] != d_prime:
        raise DimensionMismatch("mixed coalition lengths in one sample")
    A = Z[:, :-1] - Z[:, -1:]
    rhs = (out - f0) - Z[:, -1] * delta
    sqrt_w = np.sqrt(w)
    if np.linalg.matrix_rank(A * sqrt_w[:, None]) < d_prime - 1:
        raise RankDeficient(
            f"{Z.shape[0]} distinct coalitions cannot identify "
            f"{d_prime} impacts"
        )
    G = (A * w[:, None]).T @ A + RIDGE * np.eye(d_prime - 1)
    b = (A * w[:, None]).T @ rhs
    head = np.linalg.solve(G, b)
    phi = np.concatenate([head, [delta - head.sum()]])
    return ImpactVector(phi, f0, fx, d_prime)


GameValues = Mapping[Union[Tuple[int, ...], SimplifiedInput], float]


def exact_shapley(values: GameValues) -> ImpactVector:
    """Shapley values by full enumeration (test oracle, d' <= 20).

    ``values`` must define the game on every z' in {0,1}^d'. The result
    satisfies efficiency by the Shapley axioms: sum(phi) = v(1) - v(0).
    """
    table: Dict[Tuple[int, ...], float] = {}
    for key, val in values.items():
        bits = key.bits if isinstance(key, SimplifiedInput) else tuple(key)
        table[tuple(int(b) for b in bits)] = float(val)
    if not table:
        raise DimensionMismatch("empty game")
    d_prime = len(next(iter(table)))
    if d_prime > 20:
        raise TooManyFragments(
            f"exact enumeration supports d' <= 20, got {d_prime}"
        )
    if len(table) != 1 << d_prime:
        raise DimensionMismatch(
            f"game must define all {1 << d_prime} coalitions, "
            f"got {len(table)}"
        )
    fact = [math.factorial(i) for i in range(d_prime + 1)]
    weight = [
        fact[s] * fact[d_prime - s - 1] / fact[d_prime]
        for s in range(d_prime)
    ]
    phi = np.zeros(d_prime)
    for bits in itertools.product((0, 1), repeat=d_prime):
        v_without = table[bits]
        s = sum(bits)
        for k in range(d_prime):
            if bits[k]:
                continue
            with_k = bits[:k] + (1,) + bits[k + 1:]
            phi[k] += weight[s] * (table[with_k] - v_without)
    ones = (1,) * d_prime
    zeros = (0,) * d_prime
    return ImpactVector(phi, table[zeros], table[ones], d_prime)
