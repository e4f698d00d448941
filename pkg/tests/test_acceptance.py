"""Acceptance gate: one test per release criterion, at stated tolerance.

Run with ``pytest tests/test_acceptance.py -v`` for one pass/fail line per
criterion. Everything here goes through public entry points only.
"""

import itertools
import time

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from tsimpact import (
    ExplainConfig,
    LabeledDataset,
    SimplifiedInput,
    TimeSeries,
    build_matrix,
    explain_classifier,
    pearson_similarity,
    read_explanation,
    write_ucr,
)
from tsimpact.cli import build_parser, main
from tsimpact.dsp import (
    amplitude_response,
    design_firls_bandstop,
    irdft,
    rdft,
)
from tsimpact.mappings import ReplacementStrategy, make_mapping
from tsimpact.models import knn_model, spectrum_centroid_model
from tsimpact.shap import (
    CoalitionSample,
    exact_shapley,
    shapley_kernel_weight,
    solve_explanation,
)

from conftest import make_two_class_dataset


def test_shapley_oracle_equivalence():
    """100 random games, d' in 2..10: solver == enumeration within 1e-6."""
    rng = np.random.default_rng(1234)
    started = time.perf_counter()
    worst = 0.0
    for i in range(100):
        d_prime = 2 + i % 9
        values = {
            bits: float(rng.normal())
            for bits in itertools.product((0, 1), repeat=d_prime)
        }
        oracle = exact_shapley(values)
        zs = tuple(
            SimplifiedInput(bits)
            for bits in itertools.product((0, 1), repeat=d_prime)
            if 0 < sum(bits) < d_prime
        )
        sample = CoalitionSample(
            zs,
            [shapley_kernel_weight(d_prime, z.size) for z in zs],
            [values[z.bits] for z in zs],
        )
        vec = solve_explanation(
            sample, values[(1,) * d_prime], values[(0,) * d_prime]
        )
        worst = max(worst, float(np.abs(vec.phi - oracle.phi).max()))
    elapsed = time.perf_counter() - started
    assert worst <= 1e-6
    assert elapsed < 10.0


def test_additivity_of_every_emitted_vector(rng):
    """|sum(phi) - (prediction - base)| <= 1e-8 on all produced vectors."""
    reference = make_two_class_dataset(rng, n_per_class=3, d=16)
    model = knn_model(reference, k=2)
    x = reference.series[0]
    vectors = []
    for kind in ("time_slice", "freq_patch", "freq_filter", "statistics"):
        for replacement in ("zero", "local_mean", "global_mean",
                            "local_noise", "global_noise", "sample"):
            cfg = ExplainConfig(
                mapping=kind,
                fragments="auto",
                replacement=replacement,
                runs=2,
                budget=64,
                rng_seed=3,
            )
            res = explain_classifier(model, x, cfg, reference)
            vectors.extend(res.per_class.values())
            vectors.extend(res.intermediates.values())
    assert len(vectors) > 100
    for vec in vectors:
        assert abs(vec.phi.sum() - (vec.prediction - vec.base_value)) <= 1e-8


def test_mapping_identity(rng):
    """h_x(1) = x for 4 kinds x 6 strategies x 50 specimens."""
    kinds = ("time_slice", "freq_patch", "freq_filter", "statistics")
    strategies = ("zero", "local_mean", "global_mean", "local_noise",
                  "global_noise", "sample")
    for kind in kinds:
        for strategy_kind in strategies:
            for case in range(50):
                d = int(rng.integers(8, 65))
                x = TimeSeries(rng.normal(size=d))
                d_prime = 2 if kind == "statistics" else 3
                if kind == "freq_filter":
                    h = make_mapping(kind, x, d_prime)
                else:
                    ref = LabeledDataset(rng.normal(size=(3, d)))
                    strategy = ReplacementStrategy(
                        strategy_kind, ref, rng_seed=case
                    )
                    h = make_mapping(kind, x, d_prime, strategy)
                out = h(SimplifiedInput.ones(d_prime))
                if kind in ("time_slice", "statistics"):
                    assert_array_equal(out, np.asarray(x))
                else:
                    assert np.abs(out - np.asarray(x)).max() <= 1e-10


def test_dft_correctness():
    """Round trip <= 1e-10 and Parseval <= 1e-8 over 200 series, d in 2..257."""
    sieve = np.ones(258, dtype=bool)
    sieve[:2] = False
    for p in range(2, 17):
        if sieve[p]:
            sieve[p * p:: p] = False
    primes = [int(v) for v in np.flatnonzero(sieve)]  # all primes <= 257
    rng = np.random.default_rng(2718)
    lengths = primes + [2, 4, 256, 257] + [
        int(v) for v in rng.integers(2, 258, size=200 - len(primes) - 4)
    ]
    assert len(lengths) == 200
    for d in lengths:
        x = rng.normal(size=d)
        s = rdft(x)
        assert np.abs(irdft(s) - x).max() <= 1e-10
        power = np.abs(s.bins) ** 2
        doubled = 2.0 * power[1:].sum() - (d % 2 == 0) * power[-1]
        assert_allclose((power[0] + doubled) / d, np.sum(x**2), rtol=1e-8)


def test_filter_quality():
    """Bandstop (40, 60) at d=256: flat pass bands, dead stop center."""
    fir = design_firls_bandstop([(40, 60)], 256)
    a10, a50, a100 = amplitude_response(fir, [10, 50, 100], 256)
    assert a10 >= 0.9
    assert abs(a50) <= 0.05
    assert a100 >= 0.9

    # a sinusoid centered in a disabled band dies through the mapping
    d = 256
    t = np.arange(d)
    x = TimeSeries(np.cos(2 * np.pi * 52 * (t + 0.5) / d))
    h = make_mapping("freq_filter", x, 4)  # band 2 covers bins 33..71
    out = h(SimplifiedInput((1, 1, 0, 1)))
    rms_ratio = np.sqrt(np.mean(out**2) / np.mean(np.asarray(x) ** 2))
    assert rms_ratio <= 0.05


def test_localization_end_to_end():
    """The discriminative slice gets the top impact in >= 95% of 50 trials."""
    started = time.perf_counter()
    wins = 0
    for trial in range(50):
        rng = np.random.default_rng(trial)
        rows = rng.normal(0.0, 0.3, size=(20, 24))
        rows[10:, 8:12] += 3.0  # class B differs only on slice 2 of 6
        train = LabeledDataset(rows, tuple("A" * 10 + "B" * 10))
        specimen = rng.normal(0.0, 0.3, size=24)
        specimen[8:12] += 3.0
        model = knn_model(train, k=1)
        cfg = ExplainConfig(fragments=6, runs=10, budget=1000, rng_seed=trial)
        res = explain_classifier(model, specimen, cfg, train)
        phi = res.per_class["B"].phi
        if int(np.argmax(np.abs(phi))) == 2:
            wins += 1
    elapsed = time.perf_counter() - started
    assert wins >= 48, f"localized {wins}/50 trials"
    assert elapsed < 120.0


def test_time_domain_impacts_of_a_shift_invariant_model(rng):
    """Probing a spectrum model in the time domain still moves probabilities."""
    d = 32
    t = np.arange(d)
    rows, labels = [], []
    for phase in np.linspace(0.0, 2.0, 4):
        rows.append(np.sin(2 * np.pi * 3 * t / d + phase))
        labels.append("low")
        rows.append(np.sin(2 * np.pi * 9 * t / d + phase))
        labels.append("high")
    train = LabeledDataset(np.stack(rows), tuple(labels))
    model = spectrum_centroid_model(train)
    cfg = ExplainConfig(fragments=4, runs=2, rng_seed=1)
    res = explain_classifier(model, rows[0], cfg, train)
    assert np.abs(res.per_class["low"].phi).sum() > 0.0


def test_parameter_fidelity():
    """Auto fragments min(d//5, 30); defaults budget 1000, runs 10."""
    cfg = ExplainConfig()
    for d in (5, 10, 23, 50, 149, 150, 151, 300, 1000):
        assert cfg.resolve_fragments(d) == min(d // 5, 30)
    for d in (2, 3, 4):
        assert cfg.resolve_fragments(d) == 1
    assert cfg.budget == 1000
    assert cfg.runs == 10
    assert cfg.environment_classes is True
    args = build_parser().parse_args(
        ["explain", "--train", "t", "--test", "t",
         "--specimen", "0", "--out", "o"]
    )
    assert args.samples == 1000
    assert args.runs == 10
    assert args.fragments == "auto"
    assert args.replacement == "sample"


def test_similarity_correctness(rng):
    """Pearson pins, symmetry, and the unit diagonal."""
    assert pearson_similarity([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0
    assert pearson_similarity([1.0, 2.0, 3.0], [-1.0, -2.0, -3.0]) == -1.0
    # hand-checked: r((1,2,3),(2,4,7)) = 33/sqrt(2*554); the neighboring
    # triple (2,4,8) is the one that lands at 0.9819
    assert pearson_similarity([1, 2, 3], [2, 4, 7]) == pytest.approx(
        0.99340, abs=1e-4
    )
    assert pearson_similarity([1, 2, 3], [2, 4, 8]) == pytest.approx(
        0.9819, abs=1e-4
    )
    from tsimpact import ImpactVector

    expl = {
        (m, s): (lambda phi: ImpactVector(
            phi, 0.0, float(phi.sum()), len(phi)
        ))(rng.normal(size=5))
        for m in ("m1", "m2", "m3")
        for s in range(6)
    }
    matrix = build_matrix(expl)
    assert_allclose(matrix.values, matrix.values.T)
    assert_allclose(np.diag(matrix.values), np.ones(3))
    assert np.all(matrix.values >= -1.0) and np.all(matrix.values <= 1.0)


def test_cli_determinism(tmp_path):
    """Two identical invocations write byte-identical artifacts."""
    rng = np.random.default_rng(55)
    write_ucr(make_two_class_dataset(rng, n_per_class=5, d=20),
              tmp_path / "train.tsv")
    write_ucr(make_two_class_dataset(rng, n_per_class=3, d=20),
              tmp_path / "test.tsv")
    argv = [
        "explain",
        "--train", str(tmp_path / "train.tsv"),
        "--test", str(tmp_path / "test.tsv"),
        "--specimen", "1",
        "--fragments", "4",
        "--runs", "3",
        "--seed", "9",
    ]
    out1, out2 = tmp_path / "one.json", tmp_path / "two.json"
    assert main(argv + ["--out", str(out1)]) == 0
    assert main(argv + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    assert (tmp_path / "one.csv").read_bytes() == (tmp_path / "two.csv").read_bytes()
    assert (tmp_path / "one.svg").read_bytes() == (tmp_path / "two.svg").read_bytes()
    doc = read_explanation(out1)
    assert doc.seed == 9
