"""Experiment orchestration: per-head method runs, comparisons, costs, bounds."""

from __future__ import annotations

import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..attention import (
    AttentionProblem,
    Explicit,
    dense_attention,
    sparse_attention,
)
from ..bound import bound_sweep
from ..delta import delta_attention, imputation_label, recompute_attention
from ..linalg import DEGENERATE, cosine
from ..metrics import (
    _account,
    analytic_cost,
    compare_methods,
    cost_account,
    delta_entries,
    delta_locality,
)
from .config import ExperimentConfig, FullSpec, GaussianSpec, NeedleSpec, SinkWindowSpec, to_pattern
from .workload import Workload, from_tensors, gaussian, needle

log = logging.getLogger(__name__)


def generate_workload(cfg: ExperimentConfig, head: int) -> Workload:
    wl = cfg.workload
    if isinstance(wl, GaussianSpec):
        return Workload(problem=AttentionProblem(*gaussian(cfg.seed, head, cfg.n, cfg.d)))
    if isinstance(wl, NeedleSpec):
        return needle(cfg.seed, head, cfg.n, cfg.d, wl.num_pairs, wl.signal_strength)
    w = from_tensors(wl.q, wl.k, wl.v, head)
    if w.problem.n != cfg.n or w.problem.d != cfg.d:
        raise ValueError(f"tensor files are {w.problem.n}x{w.problem.d}, config says {cfg.n}x{cfg.d}")
    return w


@dataclass(frozen=True)
class MethodSpec:
    """One method to evaluate: ``kind`` in dense/sparse/recompute/delta."""

    label: str
    kind: str
    pattern: object = None
    delta: object = None


def method_specs(cfg: ExperimentConfig) -> list[MethodSpec]:
    specs = []
    # accounting never materializes the full N x N mask
    patterns = [(ps, None if cfg.accounting_only and isinstance(ps, FullSpec) else to_pattern(ps, cfg.n))
                for ps in cfg.patterns]
    if "dense" in cfg.methods:
        specs.append(MethodSpec("dense", "dense"))
    for ps, pat in patterns:
        plabel = _pattern_label(ps)
        if "sparse" in cfg.methods:
            specs.append(MethodSpec(f"sparse:{plabel}", "sparse", pat))
        if "recompute" in cfg.methods:
            dc = cfg.delta_configs()[0]
            specs.append(MethodSpec(f"recompute:{plabel}/g{dc.gamma}", "recompute", pat, dc))
        if "delta" in cfg.methods:
            for dc in cfg.delta_configs():
                specs.append(MethodSpec(
                    f"delta-{imputation_label(dc.imputation)}:{plabel}/g{dc.gamma}", "delta", pat, dc))
    return specs


def _pattern_label(ps) -> str:
    if isinstance(ps, SinkWindowSpec):
        return f"sw({ps.sink},{ps.window})"
    if isinstance(ps, FullSpec):
        return "full"
    return f"topk({ps.k})"


@dataclass
class RunReport:
    config: dict
    methods: list[str]
    summaries: list[dict] = field(default_factory=list)
    aggregate: list[dict] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)
    costs: list[dict] = field(default_factory=list)
    bounds: list[dict] = field(default_factory=list)
    needle: list[dict] = field(default_factory=list)
    locality: list[dict] = field(default_factory=list)
    timings: list[dict] = field(default_factory=list)
    degenerate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        return cls(**data)

    def method_rows(self, table: str, method: str) -> list[dict]:
        return [r for r in getattr(self, table) if r.get("method") == method]


@dataclass
class _HeadOut:
    summaries: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    bounds: list = field(default_factory=list)
    needle: list = field(default_factory=list)
    locality: list = field(default_factory=list)
    timings: list = field(default_factory=list)


def _timed(fn, deterministic: bool):
    t0 = time.perf_counter()
    out = fn()
    return out, (0.0 if deterministic else time.perf_counter() - t0)


def _run_head(cfg: ExperimentConfig, head: int, specs: list[MethodSpec],
              deterministic: bool) -> _HeadOut:
    res = _HeadOut()
    wl = generate_workload(cfg, head)
    p = wl.problem
    outputs = set(cfg.outputs)
    dense, t_dense = _timed(lambda: dense_attention(p), deterministic)
    sparse_cache = {}

    def sparse_for(pat):
        key = id(pat)
        if key not in sparse_cache:
            sparse_cache[key] = _timed(lambda: sparse_attention(p, pat), deterministic)
        return sparse_cache[key]

    for spec in specs:
        base = None
        if spec.kind == "dense":
            result, secs = dense, t_dense
        elif spec.kind == "sparse":
            result, secs = sparse_for(spec.pattern)
        else:
            base, t_sparse = sparse_for(spec.pattern)
            if spec.kind == "recompute":
                result, t = _timed(lambda: recompute_attention(p, spec.pattern, spec.delta, sparse=base),
                                   deterministic)
            else:
                (result, _), t = _timed(lambda: delta_attention(p, spec.pattern, spec.delta, sparse=base),
                                        deterministic)
            secs = t_sparse + t

        if "comparison" in outputs:
            cmp = compare_methods(p, result, cfg.effective_suffix, dense=dense,
                                  exclude_unsupported=cfg.exclude_unsupported)
            res.summaries.append({"head": head, "method": spec.label, **cmp.summary()})
            rho = dict(zip(cmp.suffix_rows.tolist(), cmp.spearman.tolist()))
            for i, c in enumerate(cmp.cosines.tolist()):
                res.rows.append({"head": head, "method": spec.label, "row": i,
                                 "cosine": c, "spearman": rho.get(i)})
        if "cost" in outputs:
            acct = cost_account(result, p.n, base=base)
            res.costs.append({"head": head, "method": spec.label, **acct.to_dict()})
        if "needle" in outputs and wl.needle_value is not None:
            res.needle.append({"head": head, "method": spec.label,
                               "score": cosine(result.output[-1], wl.needle_value)})
        if "timing" in outputs:
            res.timings.append({"head": head, "method": spec.label, "seconds": secs})

    patterns = []
    for s in specs:
        if s.pattern is not None and all(s.pattern is not q for q in patterns):
            patterns.append(s.pattern)
    if "bound" in outputs and patterns:
        rows = np.unique(np.linspace(0, p.n - 1, min(cfg.bound_rows, p.n)).round().astype(np.int64))
        rep = bound_sweep(p, patterns, rows)
        res.bounds.extend({"head": head, **r} for r in rep.to_records())
    if "locality" in outputs:
        for pat in patterns:
            prof = delta_locality(p, pat, cfg.effective_locality_max, dense=dense, sparse=sparse_for(pat)[0])
            for nu, m, c in zip(prof.offsets.tolist(), prof.mean_cosine.tolist(),
                                prof.defined_pairs.tolist()):
                res.locality.append({"head": head, "pattern": pat.label, "offset": nu,
                                     "mean_cosine": None if np.isnan(m) else m, "pairs": c})
    return res


def _accounting_costs(cfg: ExperimentConfig, specs: list[MethodSpec]) -> list[dict]:
    n = cfg.n
    dense_entries = n * (n + 1) // 2
    rows = []
    for spec in specs:
        if spec.kind == "dense":
            acct = _account(n, dense_entries)
        elif spec.pattern is None:
            # full pattern: every row is already dense
            acct = _account(n, dense_entries, None if spec.kind == "sparse" else dense_entries)
        elif spec.kind == "sparse":
            acct = analytic_cost(n, spec.pattern)
        else:
            acct = analytic_cost(n, spec.pattern, spec.delta)
        for head in range(cfg.heads):
            rows.append({"head": head, "method": spec.label, **acct.to_dict()})
    return rows


def _aggregate(report: RunReport) -> list[dict]:
    out = []
    for m in report.methods:
        entry = {"method": m}
        for table, key, name in (("summaries", "cosine_mean", "cosine_mean"),
                                 ("summaries", "spearman_mean", "spearman_mean"),
                                 ("needle", "score", "needle_score_mean"),
                                 ("costs", "sparsity", "sparsity")):
            vals = [r[key] for r in report.method_rows(table, m) if r.get(key) is not None]
            vals = [v for v in vals if v == v]
            entry[name] = float(np.mean(vals)) if vals else None
        out.append(entry)
    return out


def run_experiment(cfg: ExperimentConfig, deterministic: bool = False, jobs: int = 1) -> RunReport:
    """Evaluate every configured method on every head and assemble one report.

    Heads may run in parallel (``jobs``); results are merged in head order so
    the report does not depend on scheduling.
    """
    specs = method_specs(cfg)
    report = RunReport(config=cfg.model_dump(mode="json"), methods=[s.label for s in specs])
    before = DEGENERATE.copy()
    if cfg.accounting_only:
        report.costs = _accounting_costs(cfg, specs)
    else:
        def one(h):
            log.info("head %d: %d methods", h, len(specs))
            return _run_head(cfg, h, specs, deterministic)

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                heads = list(pool.map(one, range(cfg.heads)))
        else:
            heads = [one(h) for h in range(cfg.heads)]
        for h in heads:
            for name in ("summaries", "rows", "costs", "bounds", "needle", "locality", "timings"):
                getattr(report, name).extend(getattr(h, name))
    report.aggregate = _aggregate(report)
    report.degenerate = {k: DEGENERATE[k] - before.get(k, 0) for k in ("cosine", "spearman")}
    return report


def bench(cfg: ExperimentConfig, repeats: int | None = None, deterministic: bool = False) -> list[dict]:
    """Median CPU wall-clock per method on head 0, with analytic entry-count ratios.

    With ``accounting_only`` nothing is timed (``median_seconds`` is None),
    which keeps long sequences cheap.
    """
    repeats = cfg.bench_repeats if repeats is None else repeats
    if repeats < 3:
        raise ValueError("bench needs at least 3 repeats")
    specs = method_specs(cfg)
    n = cfg.n
    dense_entries = n * (n + 1) // 2
    p = None if cfg.accounting_only else generate_workload(cfg, 0).problem
    table = []
    for spec in specs:
        entries = _entries(n, spec)
        median = None
        if p is not None:
            fn = _bench_fn(p, spec)
            median = statistics.median(_timed(fn, deterministic)[1] for _ in range(repeats))
        table.append({"method": spec.label, "median_seconds": median,
                      "entries": entries, "entry_ratio_vs_dense": dense_entries / entries})
    return table


def _bench_fn(p: AttentionProblem, spec: MethodSpec):
    if spec.kind == "dense":
        return lambda: dense_attention(p, keep_weights=False)
    if spec.kind == "sparse":
        return lambda: sparse_attention(p, spec.pattern, keep_weights=False)
    if spec.kind == "recompute":
        return lambda: recompute_attention(p, spec.pattern, spec.delta, keep_weights=False)
    return lambda: delta_attention(p, spec.pattern, spec.delta, keep_weights=False)


def _entries(n: int, spec: MethodSpec) -> int:
    if spec.kind == "dense" or spec.pattern is None or isinstance(spec.pattern, Explicit):
        return n * (n + 1) // 2
    if spec.kind == "sparse":
        return analytic_cost(n, spec.pattern).method_entries
    return int(delta_entries(n, spec.pattern, spec.delta).sum())


def sweep(cfg: ExperimentConfig, deterministic: bool = False, jobs: int = 1) -> list[dict]:
    """Cartesian product over gamma x window (sink-window pattern); one row per method."""
    sink = next((p.sink for p in cfg.patterns if isinstance(p, SinkWindowSpec)), 4)
    table = []
    for gamma in cfg.sweep.gammas:
        for window in cfg.sweep.windows:
            sub = ExperimentConfig.model_validate({
                **cfg.model_dump(),
                "patterns": [{"kind": "sink_window", "sink": sink, "window": window}],
                "delta": {**cfg.delta.model_dump(), "gamma": gamma},
                "outputs": ["cost"] if cfg.accounting_only else ["comparison", "cost", "needle"],
            })
            rep = run_experiment(sub, deterministic=deterministic, jobs=jobs)
            for agg in rep.aggregate:
                table.append({"gamma": gamma, "window": window, **agg})
    return table


def run_bounds(cfg: ExperimentConfig, jobs: int = 1) -> RunReport:
    """Only the bound sweep, for each head and configured pattern."""
    sub = ExperimentConfig.model_validate({**cfg.model_dump(), "methods": ["sparse"],
                                           "outputs": ["bound"], "accounting_only": False})
    return run_experiment(sub, deterministic=True, jobs=jobs)
