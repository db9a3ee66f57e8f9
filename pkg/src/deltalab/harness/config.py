"""Experiment configuration (JSON) and its conversion to core types."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ..attention import Explicit, OracleTopK, SinkWindow
from ..delta import AbgFilter, DeltaConfig, Ema, Linear, Repeat

METHODS = ("dense", "sparse", "recompute", "delta")
OUTPUTS = ("comparison", "cost", "bound", "needle", "locality", "timing")


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SinkWindowSpec(_Model):
    kind: Literal["sink_window"] = "sink_window"
    sink: int = Field(4, ge=0)
    window: int = Field(64, ge=1)


class OracleTopKSpec(_Model):
    kind: Literal["oracle_topk"] = "oracle_topk"
    k: int = Field(ge=1)


class FullSpec(_Model):
    """Every causal key; a control pattern that makes sparse equal dense."""

    kind: Literal["full"] = "full"


PatternSpec = Annotated[Union[SinkWindowSpec, OracleTopKSpec, FullSpec], Field(discriminator="kind")]


class RepeatSpec(_Model):
    mode: Literal["repeat"] = "repeat"


class LinearSpec(_Model):
    mode: Literal["linear"] = "linear"


class EmaSpec(_Model):
    mode: Literal["ema"] = "ema"
    beta: float = Field(gt=0.0, le=1.0)


class AbgSpec(_Model):
    mode: Literal["abg"] = "abg"
    alpha: float
    beta: float
    g: float

    @model_validator(mode="after")
    def _finite(self):
        if not all(math.isfinite(x) for x in (self.alpha, self.beta, self.g)):
            raise ValueError("filter coefficients must be finite")
        return self


ImputationSpec = Annotated[Union[RepeatSpec, LinearSpec, EmaSpec, AbgSpec], Field(discriminator="mode")]


class DeltaSpec(_Model):
    gamma: int = Field(16, ge=1)
    tail_dense: int | None = Field(None, ge=0)
    imputations: list[ImputationSpec] = Field(default_factory=lambda: [RepeatSpec()], min_length=1)


class GaussianSpec(_Model):
    kind: Literal["gaussian"] = "gaussian"


class NeedleSpec(_Model):
    kind: Literal["needle"] = "needle"
    num_pairs: int = Field(16, ge=1)
    signal_strength: float = Field(10.0, gt=0.0)


class TensorFilesSpec(_Model):
    """Import Q/K/V from tensor files; ``{head}`` in a path expands to the head index."""

    kind: Literal["tensors"] = "tensors"
    q: str
    k: str
    v: str


WorkloadSpec = Annotated[Union[GaussianSpec, NeedleSpec, TensorFilesSpec], Field(discriminator="kind")]


class SweepSpec(_Model):
    gammas: list[Annotated[int, Field(ge=1)]] = Field(default_factory=lambda: [8, 16, 32, 64])
    windows: list[Annotated[int, Field(ge=1)]] = Field(default_factory=lambda: [32, 64, 128])


class ExperimentConfig(_Model):
    seed: int = Field(0, ge=0, lt=2**64)
    n: int = Field(1024, ge=2)
    d: int = Field(64, ge=1)
    heads: int = Field(4, ge=1)
    workload: WorkloadSpec = Field(default_factory=GaussianSpec)
    patterns: list[PatternSpec] = Field(default_factory=lambda: [SinkWindowSpec()], min_length=1)
    delta: DeltaSpec = Field(default_factory=DeltaSpec)
    methods: list[Literal["dense", "sparse", "recompute", "delta"]] = Field(
        default_factory=lambda: list(METHODS), min_length=1)
    suffix_len: int | None = Field(None, ge=0)
    outputs: list[Literal["comparison", "cost", "bound", "needle", "locality", "timing"]] = Field(
        default_factory=lambda: ["comparison", "cost", "needle", "timing"])
    bound_rows: int = Field(64, ge=1)
    locality_max: int | None = Field(None, ge=0)
    exclude_unsupported: bool = False
    accounting_only: bool = False
    bench_repeats: int = Field(5, ge=3)
    sweep: SweepSpec = Field(default_factory=SweepSpec)

    @field_validator("methods", "outputs")
    @classmethod
    def _unique(cls, v):
        if len(set(v)) != len(v):
            raise ValueError("entries must be unique")
        return v

    @model_validator(mode="after")
    def _fits(self):
        if self.suffix_len is not None and self.suffix_len > self.n:
            raise ValueError(f"suffix_len ({self.suffix_len}) exceeds n ({self.n})")
        if self.delta.tail_dense is not None and self.delta.tail_dense >= self.n:
            raise ValueError(f"delta.tail_dense ({self.delta.tail_dense}) must be < n ({self.n})")
        if self.locality_max is not None and self.locality_max >= self.n:
            raise ValueError(f"locality_max ({self.locality_max}) must be < n ({self.n})")
        return self

    @property
    def effective_suffix(self) -> int:
        return min(128, self.n) if self.suffix_len is None else self.suffix_len

    @property
    def effective_locality_max(self) -> int:
        return min(64, self.n - 1) if self.locality_max is None else self.locality_max

    def sparsity_patterns(self):
        return [to_pattern(p, self.n) for p in self.patterns]

    def delta_configs(self) -> list[DeltaConfig]:
        return [DeltaConfig(gamma=self.delta.gamma, tail_dense=self.delta.tail_dense,
                            imputation=to_imputation(i)) for i in self.delta.imputations]


def to_pattern(spec, n: int):
    if isinstance(spec, SinkWindowSpec):
        return SinkWindow(spec.sink, spec.window)
    if isinstance(spec, OracleTopKSpec):
        return OracleTopK(spec.k)
    return Explicit.full(n)


def to_imputation(spec):
    if isinstance(spec, RepeatSpec):
        return Repeat()
    if isinstance(spec, LinearSpec):
        return Linear()
    if isinstance(spec, EmaSpec):
        return Ema(spec.beta)
    return AbgFilter(spec.alpha, spec.beta, spec.g)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a JSON config file; ``overrides`` (e.g. seed) replace top-level fields."""
    data = json.loads(Path(path).read_text())
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.model_validate(data)


def config_schema() -> dict:
    return ExperimentConfig.model_json_schema()
