"""Command-line entry point: explain, compare, perturb.

Exit codes: 0 success, 2 flag errors, 3 data errors, 4 model/protocol
errors. All outputs are deterministic given --seed.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .core import ImpactVector, SimplifiedInput, TimeSeries
from .errors import DataError, IncompatibleExplanations, ModelError
from .explain import ExplainConfig, explain_classifier
from .io import (
    ExplanationDocument,
    emit_plot_data,
    read_explanation,
    read_ucr,
    write_explanation,
)
from .mappings import (
    ReplacementStrategy,
    apply_mapping,
    make_band_assignment,
    make_mapping,
    make_slice_assignment,
)
from .models import external_model, knn_model, spectrum_centroid_model
from .similarity import build_matrix, matrix_to_csv

_MAPPING_FLAGS = {
    "time-slice": "time_slice",
    "freq-patch": "freq_patch",
    "freq-filter": "freq_filter",
    "statistics": "statistics",
}
_REPLACEMENT_FLAGS = {
    "zero": "zero",
    "local-mean": "local_mean",
    "global-mean": "global_mean",
    "local-noise": "local_noise",
    "global-noise": "global_noise",
    "sample": "sample",
}


def _flag_error(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _fragments_arg(raw: str):
    if raw == "auto":
        return "auto"
    try:
        return int(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"--fragments must be 'auto' or an integer, got {raw!r}"
        )


def _add_mapping_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--mapping", choices=sorted(_MAPPING_FLAGS), default="time-slice",
        help="fragmentation domain",
    )
    p.add_argument(
        "--replacement", choices=sorted(_REPLACEMENT_FLAGS), default="sample",
        help="content for disabled fragments",
    )
    p.add_argument(
        "--fragments", type=_fragments_arg, default="auto", metavar="auto|N",
        help="fragment count d' (default: auto policy)",
    )
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")


def _mapping_descriptor(kind: str, d: int, d_prime: int, replacement: str) -> Dict:
    if kind == "time_slice":
        bounds = make_slice_assignment(d, d_prime).slice_bounds()
        edges = [b[0] for b in bounds] + [d]
    elif kind in ("freq_patch", "freq_filter"):
        edges = list(make_band_assignment(d, d_prime).band_edges)
    else:
        edges = None
    return {
        "kind": kind,
        "d_prime": d_prime,
        "replacement": replacement,
        "edges": edges,
    }


def cmd_explain(args: argparse.Namespace) -> int:
    if args.model == "external":
        if (args.model_cmd is None) == (args.model_addr is None):
            return _flag_error(
                "--model external needs exactly one of --model-cmd/--model-addr"
            )
    train = read_ucr(args.train)
    test = read_ucr(args.test)
    if not 0 <= args.specimen < len(test):
        raise DataError(
            f"--specimen {args.specimen} out of range [0, {len(test) - 1}]"
        )
    x = TimeSeries(test.series[args.specimen])

    env_classes = args.env_classes
    if env_classes and test.labels is None:
        warnings.warn(
            "test set is unlabeled; falling back to pooled-reference "
            "averaging without environment classes"
        )
        env_classes = False

    kind = _MAPPING_FLAGS[args.mapping]
    cfg = ExplainConfig(
        mapping=kind,
        fragments=args.fragments,
        replacement=_REPLACEMENT_FLAGS[args.replacement],
        runs=args.runs,
        budget=args.samples,
        rng_seed=args.seed,
        environment_classes=env_classes,
    )

    client = None
    try:
        if args.model == "knn":
            model = knn_model(train, k=args.knn_k)
        elif args.model == "spectrum-centroid":
            model = spectrum_centroid_model(train)
        else:
            client = external_model(
                command=args.model_cmd, address=args.model_addr
            )
            model = client
        explanation = explain_classifier(model, x, cfg, test)
    finally:
        if client is not None:
            client.close()

    d_prime = cfg.resolve_fragments(len(x))
    doc = ExplanationDocument(
        dataset=Path(args.test).stem,
        specimen_index=args.specimen,
        model=args.model,
        mapping=_mapping_descriptor(
            kind, len(x), d_prime, _REPLACEMENT_FLAGS[args.replacement]
        ),
        per_class=dict(explanation.per_class),
        runs=args.runs,
        budget=args.samples,
        seed=args.seed,
        query_count=explanation.query_count,
    )
    out = Path(args.out)
    write_explanation(doc, out)
    csv_path, svg_path = emit_plot_data(doc, x, out.with_suffix(""))
    print(f"wrote {out} {csv_path} {svg_path} (queries: {doc.query_count})")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    docs = [read_explanation(p) for p in args.explanations]
    groups: Dict[Tuple[str, int], List[ExplanationDocument]] = {}
    for doc in docs:
        groups.setdefault((doc.dataset, doc.specimen_index), []).append(doc)

    explanations: Dict[Tuple[str, Tuple[str, int]], ImpactVector] = {}
    for key, group in sorted(groups.items()):
        if len(group) < 2:
            raise IncompatibleExplanations(
                f"specimen {key} has only {len(group)} document(s); "
                "need at least 2 to compare"
            )
        common = set(group[0].per_class)
        for doc in group[1:]:
            common &= set(doc.per_class)
        if args.class_label is not None:
            if args.class_label not in common:
                raise IncompatibleExplanations(
                    f"class {args.class_label!r} missing from specimen {key}"
                )
            label = args.class_label
        elif common:
            label = sorted(common)[0]
        else:
            raise IncompatibleExplanations(
                f"documents for specimen {key} share no class"
            )
        seen: Dict[str, int] = {}
        for doc in group:
            # repeated model names (e.g. comparing a document with a copy
            # of itself) become distinct matrix rows: knn, knn#2, ...
            count = seen.get(doc.model, 0) + 1
            seen[doc.model] = count
            model_id = doc.model if count == 1 else f"{doc.model}#{count}"
            explanations[(model_id, key)] = doc.per_class[label]

    matrix = build_matrix(explanations)
    Path(args.out).write_text(matrix_to_csv(matrix))
    print(f"wrote {args.out} ({len(matrix.model_ids)} models)")
    return 0


def cmd_perturb(args: argparse.Namespace) -> int:
    test = read_ucr(args.test)
    if not 0 <= args.specimen < len(test):
        raise DataError(
            f"--specimen {args.specimen} out of range [0, {len(test) - 1}]"
        )
    x = TimeSeries(test.series[args.specimen])
    kind = _MAPPING_FLAGS[args.mapping]
    cfg = ExplainConfig(
        mapping=kind,
        fragments=args.fragments,
        replacement=_REPLACEMENT_FLAGS[args.replacement],
        rng_seed=args.seed,
    )
    d_prime = cfg.resolve_fragments(len(x))
    if len(args.mask) != d_prime or set(args.mask) - {"0", "1"}:
        return _flag_error(
            f"--mask must be a {d_prime}-character string of 0/1 "
            f"for d'={d_prime}, got {args.mask!r}"
        )
    strategy = ReplacementStrategy(
        _REPLACEMENT_FLAGS[args.replacement], test, rng_seed=args.seed
    )
    h = make_mapping(kind, x, d_prime, strategy)
    out_series = apply_mapping(
        h, SimplifiedInput(tuple(int(c) for c in args.mask))
    )
    lines = ["t,value"] + [
        f"{t},{float(v)!r}" for t, v in enumerate(out_series)
    ]
    Path(args.out).write_text("\n".join(lines) + "\n")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsimpact",
        description="Per-fragment impact explanations for time series models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_explain = sub.add_parser(
        "explain", help="explain one specimen and write a document + plots"
    )
    p_explain.add_argument("--train", required=True, help="training set (UCR layout)")
    p_explain.add_argument("--test", required=True, help="test set; also the reference set")
    p_explain.add_argument("--specimen", type=int, required=True, help="test-set row index")
    p_explain.add_argument(
        "--model", choices=["knn", "spectrum-centroid", "external"],
        default="knn",
    )
    p_explain.add_argument("--model-cmd", help="command line of an external stdio model")
    p_explain.add_argument("--model-addr", help="host:port of an external TCP model")
    p_explain.add_argument("--knn-k", type=int, default=1, help="neighbors for --model knn")
    _add_mapping_flags(p_explain)
    p_explain.add_argument("--samples", type=int, default=1000, help="coalition budget (default 1000)")
    p_explain.add_argument("--runs", type=int, default=10, help="replacement draws to average (default 10)")
    p_explain.add_argument(
        "--env-classes", action=argparse.BooleanOptionalAction, default=True,
        help="average over per-class reference environments (default on)",
    )
    p_explain.add_argument("--out", required=True, help="output document path")
    p_explain.set_defaults(func=cmd_explain)

    p_compare = sub.add_parser(
        "compare", help="median-correlation matrix over explanation documents"
    )
    p_compare.add_argument(
        "--explanations", nargs="+", required=True, metavar="PATH",
        help="documents; at least two per specimen",
    )
    p_compare.add_argument(
        "--class", dest="class_label", default=None,
        help="class label to compare (default: first common class)",
    )
    p_compare.add_argument("--out", required=True, help="output CSV path")
    p_compare.set_defaults(func=cmd_compare)

    p_perturb = sub.add_parser(
        "perturb", help="write h_x(z') for one mask, for inspection"
    )
    p_perturb.add_argument("--test", required=True, help="dataset holding the specimen; also the reference set")
    p_perturb.add_argument("--specimen", type=int, required=True)
    _add_mapping_flags(p_perturb)
    p_perturb.add_argument("--mask", required=True, help="bitstring of length d'")
    p_perturb.add_argument("--out", required=True, help="output CSV path")
    p_perturb.set_defaults(func=cmd_perturb)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
