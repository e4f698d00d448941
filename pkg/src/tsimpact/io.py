"""File formats: UCR-style datasets, explanation documents, plot data.

Everything written here is byte-deterministic: floats are serialized with
Python's shortest round-trip representation (at most 17 significant
digits, parse-exact), keys are sorted, and no timestamps are embedded.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import dsp
from .core import ImpactVector, LabeledDataset, TimeSeries, validate_dataset
from .errors import (
    MissingLabels,
    NonUniformLength,
    ParseError,
    SchemaVersionMismatch,
)

SCHEMA_VERSION = "1"


def read_ucr(path) -> LabeledDataset:
    """Read a UCR-style text file: one series per line, label first.

    The separator (tab or comma) is auto-detected from the first line;
    labels are kept as opaque strings.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc})") from None
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError(f"{path}: empty dataset file")
    sep = "\t" if "\t" in lines[0] else ","
    labels: List[str] = []
    rows: List[List[float]] = []
    width: Optional[int] = None
    for lineno, line in enumerate(lines, start=1):
        fields = line.split(sep)
        if len(fields) < 2:
            raise ParseError(
                f"{path}: line {lineno}: need a label and at least one value"
            )
        labels.append(fields[0].strip())
        try:
            rows.append([float(v) for v in fields[1:]])
        except ValueError as exc:
            raise ParseError(
                f"{path}: line {lineno}: malformed number ({exc})"
            ) from None
        if width is None:
            width = len(rows[-1])
        elif len(rows[-1]) != width:
            raise NonUniformLength(
                f"{path}: line {lineno}: {len(rows[-1])} values, "
                f"expected {width}"
            )
    return validate_dataset(rows, labels)


def write_ucr(dataset: LabeledDataset, path, sep: str = "\t") -> None:
    """Write a dataset in the UCR text layout (test-fixture helper)."""
    if dataset.labels is None:
        raise MissingLabels("the UCR layout requires labels")
    lines = []
    for label, row in zip(dataset.labels, dataset.series):
        lines.append(sep.join([label] + [repr(float(v)) for v in row]))
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class ExplanationDocument:
    """Serializable record of one explained specimen.

    ``mapping`` describes the fragmentation: kind, d_prime, replacement
    kind, and the slice/band edges (None for statistics). ``per_class``
    holds one impact vector per class label.
    """

    dataset: str
    specimen_index: int
    model: str
    mapping: Dict[str, object]
    per_class: Dict[str, ImpactVector]
    runs: int
    budget: int
    seed: int
    query_count: int
    schema_version: str = SCHEMA_VERSION


def serialize_explanation(doc: ExplanationDocument) -> str:
    payload = {
        "schema_version": doc.schema_version,
        "dataset": doc.dataset,
        "specimen_index": doc.specimen_index,
        "model": doc.model,
        "mapping": doc.mapping,
        "per_class": {
            label: {
                "phi": [float(v) for v in vec.phi],
                "base_value": vec.base_value,
                "prediction": vec.prediction,
            }
            for label, vec in doc.per_class.items()
        },
        "runs": doc.runs,
        "budget": doc.budget,
        "seed": doc.seed,
        "query_count": doc.query_count,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def parse_explanation(text: str) -> ExplanationDocument:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ParseError("document must be a JSON object")
    version = payload.get("schema_version")
    if version is None:
        raise ParseError("document lacks 'schema_version'")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"schema version {version!r} unsupported (expected "
            f"{SCHEMA_VERSION!r})"
        )
    try:
        per_class = {}
        for label, entry in payload["per_class"].items():
            phi = np.asarray(entry["phi"], dtype=float)
            per_class[label] = ImpactVector(
                phi,
                float(entry["base_value"]),
                float(entry["prediction"]),
                phi.shape[0],
            )
        return ExplanationDocument(
            dataset=str(payload["dataset"]),
            specimen_index=int(payload["specimen_index"]),
            model=str(payload["model"]),
            mapping=dict(payload["mapping"]),
            per_class=per_class,
            runs=int(payload["runs"]),
            budget=int(payload["budget"]),
            seed=int(payload["seed"]),
            query_count=int(payload["query_count"]),
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise ParseError(f"document field missing or malformed: {exc}") from None


def write_explanation(doc: ExplanationDocument, path) -> None:
    Path(path).write_text(serialize_explanation(doc))


def read_explanation(path) -> ExplanationDocument:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"{path}: cannot read file ({exc})") from None
    return parse_explanation(text)


# ---------------------------------------------------------------------
# plot emission
# ---------------------------------------------------------------------

def _plotted_class(doc: ExplanationDocument) -> str:
    """The class whose vector is rendered: highest prediction, ties by name."""
    return min(
        doc.per_class,
        key=lambda c: (-doc.per_class[c].prediction, c),
    )


def _heat_color(impact: float, max_abs: float) -> str:
    if max_abs == 0.0 or impact == 0.0:
        return "#ffffff"
    alpha = min(abs(impact) / max_abs, 1.0)
    fade = 255 - round(255 * alpha)
    if impact > 0:
        return f"rgb(255,{fade},{fade})"
    return f"rgb({fade},{fade},255)"


def _svg_line_and_strip(
    values: np.ndarray,
    fragment_ranges: Sequence[Tuple[int, float, float]],
    impacts: np.ndarray,
    x_span: float,
) -> str:
    """Series polyline plus one heat rect per fragment.

    ``fragment_ranges`` holds (fragment id, start, stop) in data
    coordinates covering [0, x_span).
    """
    width, height = 800.0, 260.0
    lo, hi = float(values.min()), float(values.max())
    spread = (hi - lo) or 1.0
    xs = 40.0 + 720.0 * np.arange(values.shape[0]) / max(x_span - 1, 1)
    ys = 190.0 - 170.0 * (values - lo) / spread
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    max_abs = float(np.max(np.abs(impacts))) if impacts.size else 0.0
    rects = []
    for k, start, stop in fragment_ranges:
        x0 = 40.0 + 720.0 * start / max(x_span - 1, 1)
        x1 = 40.0 + 720.0 * stop / max(x_span - 1, 1)
        color = _heat_color(float(impacts[k]), max_abs)
        rects.append(
            f'  <rect data-fragment="{k}" x="{x0:.2f}" y="210" '
            f'width="{max(x1 - x0, 0.0):.2f}" height="40" fill="{color}" '
            f'stroke="#cccccc" stroke-width="0.5"/>'
        )
    return "\n".join(
        [
            f'<svg xmlns="http://www.w3.org/2000/svg" '
            f'viewBox="0 0 {width:.0f} {height:.0f}">',
            f'  <polyline fill="none" stroke="#333333" stroke-width="1" '
            f'points="{points}"/>',
            *rects,
            "</svg>",
        ]
    ) + "\n"


def emit_plot_data(
    doc: ExplanationDocument,
    specimen: Union[TimeSeries, Sequence[float]],
    stem,
) -> Tuple[Path, Path]:
    """Write ``<stem>.csv`` and ``<stem>.svg`` for one document.

    Time-slice documents get one CSV row per time sample
    (t, x_t, slice_id, impact) and a heat strip under the series line;
    frequency documents one row per bin (omega, magnitude, band_id,
    impact; DC has no band); statistics documents one row per fragment.
    """
    if not isinstance(specimen, TimeSeries):
        specimen = TimeSeries(np.asarray(specimen, dtype=float))
    x = specimen.values
    d = x.shape[0]
    label = _plotted_class(doc)
    phi = doc.per_class[label].phi
    kind = doc.mapping["kind"]
    stem = Path(stem)
    csv_path = stem.with_suffix(".csv")
    svg_path = stem.with_suffix(".svg")

    if kind == "time_slice":
        edges = [int(e) for e in doc.mapping["edges"]]
        slice_of = np.searchsorted(edges, np.arange(d), side="right") - 1
        lines = ["t,x_t,slice_id,impact"]
        for t in range(d):
            k = int(slice_of[t])
            lines.append(f"{t},{float(x[t])!r},{k},{float(phi[k])!r}")
        ranges = [
            (k, float(edges[k]), float(edges[k + 1]))
            for k in range(len(edges) - 1)
        ]
        svg = _svg_line_and_strip(x, ranges, phi, float(d))
    elif kind in ("freq_patch", "freq_filter"):
        edges = [int(e) for e in doc.mapping["edges"]]
        mags = np.abs(dsp.rdft(x).bins)
        n_bins = mags.shape[0]
        band_of = np.searchsorted(edges, np.arange(n_bins), side="right") - 1
        lines = ["omega,magnitude,band_id,impact"]
        for w in range(n_bins):
            k = int(band_of[w])
            if w == 0 or k < 0:
                lines.append(f"{w},{float(mags[w])!r},,0.0")
            else:
                lines.append(f"{w},{float(mags[w])!r},{k},{float(phi[k])!r}")
        ranges = [
            (k, float(edges[k]), float(edges[k + 1]))
            for k in range(len(edges) - 1)
        ]
        svg = _svg_line_and_strip(mags, ranges, phi, float(n_bins))
    elif kind == "statistics":
        mean_x = float(x.mean())
        std_x = float(x.std())
        lines = [
            "fragment,value,fragment_id,impact",
            f"mean,{mean_x!r},0,{float(phi[0])!r}",
            f"std,{std_x!r},1,{float(phi[1])!r}",
        ]
        ranges = [(0, 0.0, d / 2.0), (1, d / 2.0, float(d))]
        svg = _svg_line_and_strip(x, ranges, phi, float(d))
    else:
        raise ParseError(f"unknown mapping kind {kind!r} in document")

    csv_path.write_text("\n".join(lines) + "\n")
    svg_path.write_text(svg)
    return csv_path, svg_path
