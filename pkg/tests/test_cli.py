import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from tsimpact import (
    ExplanationDocument,
    ImpactVector,
    read_explanation,
    read_ucr,
    write_explanation,
    write_ucr,
)
from tsimpact.cli import main

from conftest import make_two_class_dataset

PEER = f"{sys.executable} {Path(__file__).with_name('mock_peer.py')}"


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    rng = np.random.default_rng(404)
    train = make_two_class_dataset(rng, n_per_class=6, d=24)
    test = make_two_class_dataset(rng, n_per_class=4, d=24)
    write_ucr(train, root / "train.tsv")
    write_ucr(test, root / "test.tsv")
    return root


def explain_args(data_dir, out, *extra):
    return [
        "explain",
        "--train", str(data_dir / "train.tsv"),
        "--test", str(data_dir / "test.tsv"),
        "--specimen", "0",
        "--out", str(out),
        *extra,
    ]


class TestExplainCommand:
    @pytest.mark.filterwarnings("ignore:only 4 reference series")
    def test_defaults_write_document_and_plots(self, data_dir, tmp_path, capsys):
        out = tmp_path / "doc.json"
        rc = main(explain_args(data_dir, out))
        assert rc == 0
        doc = read_explanation(out)
        assert doc.mapping["kind"] == "time_slice"
        assert doc.mapping["d_prime"] == 4  # auto policy: one per 5 samples
        assert doc.mapping["edges"] == [0, 6, 12, 18, 24]
        assert doc.budget == 1000
        assert doc.runs == 10
        assert set(doc.per_class) == {"A", "B"}
        assert (tmp_path / "doc.csv").exists()
        assert (tmp_path / "doc.svg").exists()
        line = capsys.readouterr().out
        assert line.startswith("wrote ")
        assert f"(queries: {doc.query_count})" in line

    def test_exact_mode_query_count(self, data_dir, tmp_path):
        out = tmp_path / "doc.json"
        rc = main(explain_args(
            data_dir, out, "--fragments", "3", "--samples", "100",
            "--runs", "3",
        ))
        assert rc == 0
        doc = read_explanation(out)
        # d'=3 has 6 proper coalitions + 2 anchors; 2 environments, 3 runs
        assert doc.query_count == 2 * 3 * (6 + 2)
        assert doc.budget == 100

    def test_byte_identical_reruns(self, data_dir, tmp_path):
        out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
        argv = ["--seed", "7", "--fragments", "4", "--runs", "3"]
        assert main(explain_args(data_dir, out1, *argv)) == 0
        assert main(explain_args(data_dir, out2, *argv)) == 0
        assert out1.read_bytes() == out2.read_bytes()
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()

    @pytest.mark.filterwarnings("ignore:only 4 reference series")
    def test_seed_changes_output(self, data_dir, tmp_path):
        out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
        assert main(explain_args(data_dir, out1, "--seed", "1")) == 0
        assert main(explain_args(data_dir, out2, "--seed", "2")) == 0
        assert out1.read_bytes() != out2.read_bytes()

    def test_spectrum_centroid_model(self, data_dir, tmp_path):
        out = tmp_path / "doc.json"
        rc = main(explain_args(
            data_dir, out, "--model", "spectrum-centroid",
            "--mapping", "freq-patch", "--runs", "2",
        ))
        assert rc == 0
        doc = read_explanation(out)
        assert doc.model == "spectrum-centroid"
        assert doc.mapping["kind"] == "freq_patch"
        assert doc.mapping["d_prime"] == 2  # auto: one band per 10 samples
        assert doc.mapping["edges"] == [1, 4, 13]

    def test_external_model(self, data_dir, tmp_path):
        out = tmp_path / "doc.json"
        rc = main(explain_args(
            data_dir, out, "--model", "external",
            "--model-cmd", f"{PEER} logistic",
            "--fragments", "3", "--runs", "2",
        ))
        assert rc == 0
        doc = read_explanation(out)
        assert set(doc.per_class) == {"A", "B"}

    def test_external_needs_exactly_one_endpoint(self, data_dir, tmp_path, capsys):
        out = tmp_path / "doc.json"
        rc = main(explain_args(data_dir, out, "--model", "external"))
        assert rc == 2
        assert "error:" in capsys.readouterr().err
        rc = main(explain_args(
            data_dir, out, "--model", "external",
            "--model-cmd", "x", "--model-addr", "y:1",
        ))
        assert rc == 2

    @pytest.mark.filterwarnings("ignore:only 4 reference series")
    def test_external_peer_death_exits_4(self, data_dir, tmp_path, capsys):
        out = tmp_path / "doc.json"
        rc = main(explain_args(
            data_dir, out, "--model", "external",
            "--model-cmd", f"{PEER} die", "--fragments", "2",
        ))
        assert rc == 4
        err = capsys.readouterr().err
        assert err.startswith("error:") and err.count("\n") == 1

    def test_specimen_out_of_range_exits_3(self, data_dir, tmp_path, capsys):
        # argparse keeps the last occurrence of a repeated flag
        rc = main(explain_args(data_dir, tmp_path / "d.json",
                               "--specimen", "9999"))
        assert rc == 3
        assert "[0, 7]" in capsys.readouterr().err

    def test_missing_file_exits_3(self, data_dir, tmp_path, capsys):
        rc = main([
            "explain", "--train", str(data_dir / "nope.tsv"),
            "--test", str(data_dir / "test.tsv"),
            "--specimen", "0", "--out", str(tmp_path / "d.json"),
        ])
        assert rc == 3
        assert "error:" in capsys.readouterr().err

    def test_unknown_choice_exits_2(self, data_dir, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(explain_args(data_dir, tmp_path / "d.json",
                              "--mapping", "wavelet"))
        assert exc.value.code == 2

    def test_bad_fragments_value_exits_2(self, data_dir, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(explain_args(data_dir, tmp_path / "d.json",
                              "--fragments", "many"))
        assert exc.value.code == 2


class TestCompareCommand:
    def _write_pair(self, tmp_path, phi_by_model, dataset="test", specimen=0):
        paths = []
        for model, phi in phi_by_model.items():
            phi = np.asarray(phi, dtype=float)
            vec = ImpactVector(phi, 0.0, float(phi.sum()), len(phi))
            doc = ExplanationDocument(
                dataset=dataset,
                specimen_index=specimen,
                model=model,
                mapping={"kind": "time_slice", "d_prime": len(phi),
                         "replacement": "zero",
                         "edges": list(range(len(phi) + 1))},
                per_class={"A": vec},
                runs=1, budget=100, seed=0, query_count=8,
            )
            p = tmp_path / f"{model}_{specimen}.json"
            write_explanation(doc, p)
            paths.append(p)
        return paths

    def test_identical_documents_give_unit_matrix(self, data_dir, tmp_path, capsys):
        doc = tmp_path / "one.json"
        assert main(explain_args(data_dir, doc, "--runs", "2")) == 0
        copy = tmp_path / "two.json"
        shutil.copy(doc, copy)
        out = tmp_path / "matrix.csv"
        rc = main(["compare", "--explanations", str(doc), str(copy),
                   "--out", str(out)])
        assert rc == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == ",knn,knn#2"
        assert lines[1] == "knn,1.0,1.0"
        assert lines[2] == "knn#2,1.0,1.0"

    def test_negated_documents(self, tmp_path):
        phi = [1.0, -2.0, 0.5]
        paths = self._write_pair(
            tmp_path, {"m1": phi, "m2": [-v for v in phi]}
        )
        out = tmp_path / "matrix.csv"
        rc = main(["compare", "--explanations", *map(str, paths),
                   "--out", str(out)])
        assert rc == 0
        rows = out.read_text().strip().split("\n")
        assert rows[1].split(",")[2] == "-1.0"

    def test_class_flag_selects_vectors(self, tmp_path):
        shared = np.array([1.0, 2.0, 3.0])
        docs = []
        for model, b_phi in (("m1", shared), ("m2", -shared)):
            doc = ExplanationDocument(
                dataset="test", specimen_index=0, model=model,
                mapping={"kind": "time_slice", "d_prime": 3,
                         "replacement": "zero", "edges": [0, 1, 2, 3]},
                per_class={
                    "A": ImpactVector(shared, 0.0, float(shared.sum()), 3),
                    "B": ImpactVector(b_phi, 0.0, float(b_phi.sum()), 3),
                },
                runs=1, budget=100, seed=0, query_count=8,
            )
            p = tmp_path / f"{model}.json"
            write_explanation(doc, p)
            docs.append(p)
        out = tmp_path / "matrix.csv"
        rc = main(["compare", "--explanations", *map(str, docs),
                   "--class", "B", "--out", str(out)])
        assert rc == 0
        assert out.read_text().strip().split("\n")[1].split(",")[2] == "-1.0"
        rc = main(["compare", "--explanations", *map(str, docs),
                   "--class", "A", "--out", str(out)])
        assert rc == 0
        assert out.read_text().strip().split("\n")[1].split(",")[2] == "1.0"

    def test_fragment_mismatch_exits_3(self, tmp_path, capsys):
        a = self._write_pair(tmp_path, {"m1": [1.0, 2.0]})
        b = self._write_pair(tmp_path, {"m2": [1.0, 2.0, 3.0]})
        out = tmp_path / "matrix.csv"
        rc = main(["compare", "--explanations", str(a[0]), str(b[0]),
                   "--out", str(out)])
        assert rc == 3
        assert "error:" in capsys.readouterr().err

    def test_single_document_exits_3(self, tmp_path, capsys):
        paths = self._write_pair(tmp_path, {"m1": [1.0, 2.0]})
        rc = main(["compare", "--explanations", str(paths[0]),
                   "--out", str(tmp_path / "m.csv")])
        assert rc == 3
        assert "at least 2" in capsys.readouterr().err

    def test_missing_class_exits_3(self, tmp_path, capsys):
        paths = self._write_pair(tmp_path, {"m1": [1.0, 2.0],
                                            "m2": [2.0, 1.0]})
        rc = main(["compare", "--explanations", *map(str, paths),
                   "--class", "Z", "--out", str(tmp_path / "m.csv")])
        assert rc == 3
        assert "'Z'" in capsys.readouterr().err


class TestPerturbCommand:
    def perturb_args(self, data_dir, out, mask, *extra):
        return [
            "perturb",
            "--test", str(data_dir / "test.tsv"),
            "--specimen", "1",
            "--mask", mask,
            "--out", str(out),
            *extra,
        ]

    @staticmethod
    def read_values(path):
        rows = Path(path).read_text().strip().split("\n")
        assert rows[0] == "t,value"
        return np.array([float(r.split(",")[1]) for r in rows[1:]])

    def test_all_ones_reproduces_the_specimen(self, data_dir, tmp_path):
        out = tmp_path / "p.csv"
        rc = main(self.perturb_args(data_dir, out, "1111"))
        assert rc == 0
        specimen = read_ucr(data_dir / "test.tsv").series[1]
        assert_array_equal(self.read_values(out), specimen)

    def test_all_zeros_with_zero_replacement(self, data_dir, tmp_path):
        out = tmp_path / "p.csv"
        rc = main(self.perturb_args(data_dir, out, "0000",
                                    "--replacement", "zero"))
        assert rc == 0
        assert_array_equal(self.read_values(out), np.zeros(24))

    def test_statistics_mean_replacement(self, data_dir, tmp_path):
        out = tmp_path / "p.csv"
        rc = main(self.perturb_args(
            data_dir, out, "01", "--mapping", "statistics",
            "--replacement", "global-mean",
        ))
        assert rc == 0
        values = self.read_values(out)
        test = read_ucr(data_dir / "test.tsv")
        specimen = test.series[1]
        # mean moved to the grand mean, spread untouched
        assert values.mean() == pytest.approx(test.series.mean(), abs=1e-10)
        assert values.std() == pytest.approx(specimen.std(), abs=1e-10)

    def test_deterministic_given_seed(self, data_dir, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(self.perturb_args(data_dir, a, "0101", "--seed", "3")) == 0
        assert main(self.perturb_args(data_dir, b, "0101", "--seed", "3")) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_wrong_mask_length_exits_2(self, data_dir, tmp_path, capsys):
        rc = main(self.perturb_args(data_dir, tmp_path / "p.csv", "111"))
        assert rc == 2
        assert "d'=4" in capsys.readouterr().err

    def test_bad_mask_charset_exits_2(self, data_dir, tmp_path, capsys):
        rc = main(self.perturb_args(data_dir, tmp_path / "p.csv", "10a1"))
        assert rc == 2


class TestEntryPoint:
    def test_module_invocation(self, data_dir, tmp_path):
        out = tmp_path / "doc.json"
        proc = subprocess.run(
            [sys.executable, "-m", "tsimpact.cli",
             *explain_args(data_dir, out, "--fragments", "2", "--runs", "2")],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert proc.stdout.startswith("wrote ")
        assert json.loads(out.read_text())["schema_version"] == "1"

    def test_help_lists_subcommands(self):
        proc = subprocess.run(
            [sys.executable, "-m", "tsimpact.cli", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        for word in ("explain", "compare", "perturb"):
            assert word in proc.stdout
