"""End-to-end explanation orchestration.

Wires mappings and the SHAP solver together and performs the two layers
of averaging: multi-run averaging over distinct replacement draws (for
the sampled replacement strategy) and environment-class averaging for
classifiers (one explanation per class of reference series, then the
entrywise mean). Every random choice is derived from one seed through
spawned seed sequences, so identical configurations produce bit-identical
explanations; per-(run, environment) work items are independent and are
reduced in a fixed order, so enabling worker threads never changes
output bits.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.base import BaseEstimator

from .core import ClassExplanation, ImpactVector, LabeledDataset, TimeSeries
from .errors import (
    DimensionMismatch,
    EmptyClass,
    EmptyReference,
    FragmentCountOutOfRange,
    MissingLabels,
)
from .mappings import (
    MAPPING_KINDS,
    REPLACEMENT_KINDS,
    MappingFunction,
    ReplacementStrategy,
    SimplifiedInput,
    apply_mapping,
    make_mapping,
)
from .shap import CoalitionSample, sample_coalitions, shapley_kernel_weight, solve_explanation

#: Environment variable capping worker threads for model probing.
THREADS_ENV_VAR = "TSIMPACT_THREADS"

#: Upper bound of the automatic fragment-count policy.
AUTO_FRAGMENT_CAP = 30

BatchModelFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ExplainConfig:
    """Knobs of one explanation.

    ``fragments`` is either an explicit d' or ``"auto"``: one fragment per
    five samples for time slices, one per ten for frequency bands (both
    capped at 30), and always 2 for statistics. Defaults follow the
    recommended operating point: budget 1000 coalitions, 10 runs,
    environment classes on, seed 0.
    """

    mapping: str = "time_slice"
    fragments: Union[int, str] = "auto"
    replacement: str = "sample"
    runs: int = 10
    budget: int = 1000
    rng_seed: int = 0
    environment_classes: bool = True
    keep_intermediates: bool = True

    def __post_init__(self) -> None:
        if self.mapping not in MAPPING_KINDS:
            raise DimensionMismatch(f"unknown mapping kind {self.mapping!r}")
        if self.replacement not in REPLACEMENT_KINDS:
            raise DimensionMismatch(
                f"unknown replacement kind {self.replacement!r}"
            )
        if self.runs < 1:
            raise DimensionMismatch("runs must be >= 1")
        if self.budget < 2:
            raise DimensionMismatch("budget must be >= 2")
        if self.fragments != "auto":
            count = int(self.fragments)
            if count < 1:
                raise FragmentCountOutOfRange("fragments must be >= 1")
            object.__setattr__(self, "fragments", count)

    def resolve_fragments(self, d: int) -> int:
        """Concrete d' for a series of length d."""
        if self.mapping == "statistics":
            if self.fragments not in ("auto", 2):
                raise FragmentCountOutOfRange(
                    "the statistics mapping always has d' = 2"
                )
            return 2
        if self.fragments != "auto":
            return int(self.fragments)
        if self.mapping == "time_slice":
            return min(max(d // 5, 1), AUTO_FRAGMENT_CAP, d)
        return min(max(d // 10, 1), AUTO_FRAGMENT_CAP, d // 2)


@dataclass(frozen=True)
class SingleExplanation:
    """Result of explaining one scalar model output."""

    impact: ImpactVector
    per_run: Tuple[ImpactVector, ...]
    query_count: int


def _worker_count() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _mean_vector(vectors: Sequence[ImpactVector]) -> ImpactVector:
    phi = np.stack([v.phi for v in vectors]).mean(axis=0)
    base = float(np.mean([v.base_value for v in vectors]))
    pred = float(np.mean([v.prediction for v in vectors]))
    return ImpactVector(phi, base, pred, vectors[0].fragment_count)


def _effective_runs(cfg: ExplainConfig, reference_size: int) -> int:
    """Multi-run only applies to sampled replacements; cap at |S|."""
    if cfg.mapping == "freq_filter" or cfg.replacement != "sample":
        return 1
    if reference_size < cfg.runs:
        warnings.warn(
            f"only {reference_size} reference series for {cfg.runs} runs; "
            f"using {reference_size} distinct draws",
            stacklevel=3,
        )
        return reference_size
    return cfg.runs


def _plan_mappings(
    cfg: ExplainConfig,
    x: TimeSeries,
    reference: Optional[LabeledDataset],
    env_seed: np.random.SeedSequence,
) -> List[MappingFunction]:
    """Materialize one mapping function per run for one environment."""
    d_prime = cfg.resolve_fragments(len(x))
    rng = np.random.default_rng(env_seed)
    if cfg.mapping == "freq_filter":
        return [make_mapping("freq_filter", x, d_prime)]
    needs_reference = cfg.replacement != "zero"
    if needs_reference and reference is None:
        raise EmptyReference(
            f"replacement {cfg.replacement!r} needs a reference set"
        )
    if cfg.replacement == "sample":
        n_runs = _effective_runs(cfg, len(reference))
        draws = rng.choice(len(reference), size=n_runs, replace=False)
        return [
            make_mapping(
                cfg.mapping, x, d_prime,
                replacement_series=reference.series[i],
            )
            for i in draws
        ]
    strategy = ReplacementStrategy(cfg.replacement, reference)
    return [make_mapping(cfg.mapping, x, d_prime, strategy, rng=rng)]


def _coalition_set(
    cfg: ExplainConfig, d_prime: int, seed: np.random.SeedSequence
) -> Tuple[List[SimplifiedInput], np.ndarray]:
    coalitions = sample_coalitions(
        d_prime, cfg.budget, int(seed.generate_state(1)[0])
    )
    weights = np.array(
        [shapley_kernel_weight(d_prime, z.size) for z in coalitions]
    )
    return coalitions, weights


def _run_batch(
    h: MappingFunction,
    coalitions: Sequence[SimplifiedInput],
    f: BatchModelFn,
) -> Tuple[np.ndarray, int]:
    """Evaluate the model on all coalition series plus h(1) and h(0).

    Returns the output array (rows f(h(z'_1)).. f(h(1)), f(h(0))) and the
    number of model queries spent.
    """
    d_prime = h.fragment_count
    series = [apply_mapping(h, z) for z in coalitions]
    series.append(apply_mapping(h, SimplifiedInput.ones(d_prime)))
    series.append(apply_mapping(h, SimplifiedInput.zeros(d_prime)))
    batch = np.stack(series)
    outputs = np.asarray(f(batch), dtype=float)
    if outputs.shape[0] != batch.shape[0]:
        raise DimensionMismatch(
            "model returned a wrong-length batch of outputs"
        )
    return outputs, batch.shape[0]


def _solve_column(
    coalitions: Sequence[SimplifiedInput],
    weights: np.ndarray,
    outputs: np.ndarray,
) -> ImpactVector:
    fx = float(outputs[-2])
    f0 = float(outputs[-1])
    if len(coalitions) == 0:
        d_prime = 1
        return ImpactVector(np.array([fx - f0]), f0, fx, d_prime)
    sample = CoalitionSample(tuple(coalitions), weights, outputs[:-2])
    return solve_explanation(sample, fx, f0)


def explain_single(
    f: BatchModelFn,
    x: Union[TimeSeries, Sequence[float]],
    cfg: ExplainConfig,
    reference: Optional[LabeledDataset] = None,
) -> SingleExplanation:
    """Explain one scalar-output model on one specimen.

    ``f`` maps an (n, d) batch of series to n outputs. With the sampled
    replacement strategy the result is the mean over ``cfg.runs`` distinct
    reference draws; other strategies are deterministic given the seed and
    take a single run.
    """
    if not isinstance(x, TimeSeries):
        x = TimeSeries(np.asarray(x, dtype=float))
    root = np.random.SeedSequence(cfg.rng_seed)
    coalition_seed, env_seed = root.spawn(2)
    d_prime = cfg.resolve_fragments(len(x))
    coalitions, weights = _coalition_set(cfg, d_prime, coalition_seed)
    mappings_per_run = _plan_mappings(cfg, x, reference, env_seed)

    def one_run(h: MappingFunction) -> Tuple[ImpactVector, int]:
        outputs, queries = _run_batch(h, coalitions, f)
        return _solve_column(coalitions, weights, outputs), queries

    results = _map_ordered(one_run, mappings_per_run)
    per_run = tuple(vec for vec, _ in results)
    queries = sum(q for _, q in results)
    return SingleExplanation(_mean_vector(per_run), per_run, queries)


def _as_batch_classifier(
    model,
) -> Tuple[Tuple[str, ...], BatchModelFn]:
    """Accept an estimator with predict_proba/classes_ or a map c -> f."""
    if hasattr(model, "predict_proba"):
        classes = tuple(
            str(c) for c in getattr(model, "classes_", getattr(model, "classes", ()))
        )
        if not classes:
            raise MissingLabels("model exposes no class list")
        return classes, lambda batch: np.asarray(model.predict_proba(batch))
    if isinstance(model, Mapping):
        classes = tuple(sorted(str(c) for c in model))
        fns = [model[c] for c in sorted(model, key=str)]

        def stacked(batch: np.ndarray) -> np.ndarray:
            return np.column_stack([np.asarray(fn(batch)) for fn in fns])

        return classes, stacked
    raise DimensionMismatch(
        "model must expose predict_proba/classes_ or be a class->function map"
    )


def _map_ordered(fn, items):
    """Apply fn over items, optionally threaded, preserving order."""
    workers = _worker_count()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def explain_classifier(
    model,
    x: Union[TimeSeries, Sequence[float]],
    cfg: ExplainConfig,
    reference: LabeledDataset,
) -> ClassExplanation:
    """Explain every class probability of a classifier on one specimen.

    With environment classes enabled (and a labeled reference set), one
    intermediate vector is computed per (class c, environment class c')
    pair -- the environment restricts the replacement source to reference
    series of class c' -- and the final vector per class is the entrywise
    mean over environments. All class probabilities come from the same
    batch evaluations, so the model query count is independent of the
    number of classes.
    """
    if not isinstance(x, TimeSeries):
        x = TimeSeries(np.asarray(x, dtype=float))
    if reference is None:
        raise EmptyReference("classifier explanation needs a reference set")
    classes, batch_fn = _as_batch_classifier(model)

    use_env = cfg.environment_classes
    if use_env:
        if reference.labels is None:
            raise MissingLabels(
                "environment classes need a labeled reference set"
            )
        env_labels = list(reference.classes)
        environments = [
            (label, reference.restricted_to(label)) for label in env_labels
        ]
        for label, env_ref in environments:
            if len(env_ref) == 0:
                raise EmptyClass(f"class {label!r} has no reference series")
    else:
        environments = [(None, reference)]

    root = np.random.SeedSequence(cfg.rng_seed)
    children = root.spawn(1 + len(environments))
    d_prime = cfg.resolve_fragments(len(x))
    coalitions, weights = _coalition_set(cfg, d_prime, children[0])

    shared_filter = (
        make_mapping("freq_filter", x, d_prime)
        if cfg.mapping == "freq_filter" else None
    )
    plan: List[Tuple[Optional[str], MappingFunction]] = []
    for (label, env_ref), env_seed in zip(environments, children[1:]):
        if shared_filter is not None:
            plan.append((label, shared_filter))
            continue
        for h in _plan_mappings(cfg, x, env_ref, env_seed):
            plan.append((label, h))

    def one_item(item: Tuple[Optional[str], MappingFunction]):
        _, h = item
        outputs, queries = _run_batch(h, coalitions, batch_fn)
        if outputs.ndim != 2 or outputs.shape[1] != len(classes):
            raise DimensionMismatch(
                f"model returned {outputs.shape} outputs for "
                f"{len(classes)} classes"
            )
        vectors = [
            _solve_column(coalitions, weights, outputs[:, ci])
            for ci in range(len(classes))
        ]
        return vectors, queries

    results = _map_ordered(one_item, plan)
    query_count = sum(q for _, q in results)

    # group run vectors by environment, in plan order
    by_env: Dict[Optional[str], List[List[ImpactVector]]] = {}
    for (label, _), (vectors, _) in zip(plan, results):
        by_env.setdefault(label, []).append(vectors)

    intermediates: Dict[Tuple[str, str], ImpactVector] = {}
    env_means: Dict[Optional[str], List[ImpactVector]] = {}
    for label, run_vectors in by_env.items():
        per_class = [
            _mean_vector([run[ci] for run in run_vectors])
            for ci in range(len(classes))
        ]
        env_means[label] = per_class
        if label is not None:
            for ci, c in enumerate(classes):
                intermediates[(c, label)] = per_class[ci]

    env_order = [label for label, _ in environments]
    per_class_final = {
        c: _mean_vector([env_means[label][ci] for label in env_order])
        for ci, c in enumerate(classes)
    }
    return ClassExplanation(
        per_class=per_class_final,
        intermediates=intermediates if (use_env and cfg.keep_intermediates) else None,
        query_count=query_count,
    )


class ImpactExplainer(BaseEstimator):
    """Estimator-style front end: fit a reference set, then explain.

    Parameters mirror :class:`ExplainConfig`. ``fit`` stores the reference
    series (and labels, when given); ``explain`` runs the classifier
    pathway and ``explain_function`` the scalar pathway.
    """

    def __init__(
        self,
        mapping: str = "time_slice",
        fragments: Union[int, str] = "auto",
        replacement: str = "sample",
        runs: int = 10,
        budget: int = 1000,
        rng_seed: int = 0,
        environment_classes: bool = True,
    ):
        self.mapping = mapping
        self.fragments = fragments
        self.replacement = replacement
        self.runs = runs
        self.budget = budget
        self.rng_seed = rng_seed
        self.environment_classes = environment_classes

    def _config(self) -> ExplainConfig:
        return ExplainConfig(
            mapping=self.mapping,
            fragments=self.fragments,
            replacement=self.replacement,
            runs=self.runs,
            budget=self.budget,
            rng_seed=self.rng_seed,
            environment_classes=self.environment_classes,
        )

    def fit(self, X, y=None) -> "ImpactExplainer":
        X = np.asarray(X, dtype=float)
        labels = None if y is None else tuple(str(c) for c in y)
        self.reference_ = LabeledDataset(X, labels)
        return self

    def explain(self, model, x) -> ClassExplanation:
        if not hasattr(self, "reference_"):
            raise EmptyReference("call fit(...) before explain(...)")
        return explain_classifier(model, x, self._config(), self.reference_)

    def explain_function(self, f: BatchModelFn, x) -> SingleExplanation:
        if not hasattr(self, "reference_"):
            raise EmptyReference("call fit(...) before explain_function(...)")
        return explain_single(f, x, self._config(), self.reference_)
