"""Sparse-prefill attention lab: reference attention, strided delta correction,
remainder-bound analysis and output-distribution diagnostics."""

from .attention import (
    AttentionProblem,
    AttentionResult,
    Explicit,
    OracleTopK,
    SinkWindow,
    decode_step,
    dense_attention,
    sparse_attention,
)
from .bound import bound_sweep, lemma_decompose
from .delta import (
    AbgFilter,
    DeltaConfig,
    Ema,
    Linear,
    Repeat,
    delta_attention,
    impute_deltas,
    recompute_attention,
    select_query_rows,
    strided_dense_rows,
)
from .metrics import (
    analytic_cost,
    approx_window_size,
    compare_methods,
    cost_account,
    delta_locality,
    spearman_rho,
)

__version__ = "0.1.0"
