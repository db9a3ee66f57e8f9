"""Report serialization: one JSON document, or one CSV file per table.

Floats are written with 17 significant digits (exact round trip); NaN and
missing values become JSON ``null`` / an empty CSV cell.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .runner import RunReport

COMPARISON_HEADER = ("head", "method", "row", "cosine", "spearman")
SUMMARY_HEADER = ("head", "method", "cosine_mean", "cosine_median", "cosine_q10", "cosine_q90",
                  "spearman_mean", "spearman_median", "spearman_q10", "spearman_q90")
AGGREGATE_HEADER = ("method", "cosine_mean", "spearman_mean", "needle_score_mean", "sparsity")
COST_HEADER = ("head", "method", "n", "dense_entries", "method_entries", "base_entries", "sparsity",
               "flop_ratio_vs_dense", "overhead_entries", "overhead_fraction")
BOUND_HEADER = ("head", "pattern", "row", "head_sum_H", "tail_sum_T", "head_fraction", "max_abs_R",
                "max_bound", "max_tail", "max_abs_head_contribution", "max_empirical_delta_error",
                "satisfied", "exact_topk")
NEEDLE_HEADER = ("head", "method", "score")
LOCALITY_HEADER = ("head", "pattern", "offset", "mean_cosine", "pairs")
TIMING_HEADER = ("head", "method", "seconds")
BENCH_HEADER = ("method", "median_seconds", "entries", "entry_ratio_vs_dense")
SWEEP_HEADER = ("gamma", "window", "method", "cosine_mean", "spearman_mean", "needle_score_mean",
                "sparsity")

# report attribute -> (csv file name, header)
TABLES = {
    "rows": ("comparison.csv", COMPARISON_HEADER),
    "summaries": ("summary.csv", SUMMARY_HEADER),
    "aggregate": ("aggregate.csv", AGGREGATE_HEADER),
    "costs": ("cost.csv", COST_HEADER),
    "bounds": ("bound.csv", BOUND_HEADER),
    "needle": ("needle.csv", NEEDLE_HEADER),
    "locality": ("locality.csv", LOCALITY_HEADER),
    "timings": ("timing.csv", TIMING_HEADER),
}


def format_float(x: float) -> str:
    s = format(x, ".17g")
    if not any(c in s for c in ".en"):
        s += ".0"
    return s


def _scalar(x) -> str:
    if x is None:
        return "null"
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        return "null" if not math.isfinite(x) else format_float(x)
    if isinstance(x, str):
        return json.dumps(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _encode(obj, out: list, indent: int) -> None:
    pad = " " * indent
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        # flat dicts (table rows) stay on one line
        if all(not isinstance(v, (dict, list)) for v in obj.values()):
            out.append("{" + ", ".join(f"{json.dumps(str(k))}: {_scalar(v)}" for k, v in obj.items()) + "}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(f"{pad}  {json.dumps(str(k))}: ")
            _encode(v, out, indent + 2)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad + "  ")
            _encode(v, out, indent + 2)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "]")
    else:
        out.append(_scalar(obj))


def dumps(obj) -> str:
    out: list[str] = []
    _encode(obj, out, 0)
    return "".join(out) + "\n"


def report_json(report: RunReport) -> str:
    return dumps(report.to_dict())


def parse_report(text: str) -> RunReport:
    return RunReport.from_dict(json.loads(text))


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format_float(x) if math.isfinite(x) else ""
    return str(x)


def table_csv(rows: list[dict], header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(r.get(h)) for h in header])
    return buf.getvalue()


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report file {path}: {exc.strerror or exc}") from exc


def emit_report(report: RunReport, out_dir, formats=("json", "csv")) -> list[Path]:
    """Write ``report.json`` and/or the CSV tables into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc.strerror or exc}") from exc
    written = []
    if "json" in formats:
        p = out / "report.json"
        _write(p, report_json(report))
        written.append(p)
    if "csv" in formats:
        for attr, (name, header) in TABLES.items():
            p = out / name
            _write(p, table_csv(getattr(report, attr), header))
            written.append(p)
    return written


def emit_table(rows: list[dict], header, out_dir, stem: str, formats=("json", "csv")) -> list[Path]:
    """Write a standalone table (bench, sweep) as ``stem.json`` / ``stem.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        p = out / f"{stem}.json"
        _write(p, dumps(rows))
        written.append(p)
    if "csv" in formats:
        p = out / f"{stem}.csv"
        _write(p, table_csv(rows, header))
        written.append(p)
    return written
