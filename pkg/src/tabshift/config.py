"""Run configuration: one YAML file, validated field by field."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .boosting import GbdtParams
from .ctgan import CtganConfig
from .data import MissingPolicy
from .pipeline import FilterConfig, PipelineConfig
from .transform import GmmConfig

DEFAULT_FRACTIONS = [0.05, 0.10, 0.25, 0.50, 0.75]


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GmmSection(_Strict):
    m_max: int = Field(10, ge=1)
    tol: float = Field(1e-6, gt=0)
    max_iter: int = Field(300, ge=1)
    prune_weight: float = Field(0.005, ge=0, lt=1)
    select: Literal["bic", "none"] = "bic"
    max_fit_rows: int = Field(20000, ge=10)


class GanSection(_Strict):
    epochs: int = Field(300, ge=0)
    batch_size: int = Field(256, ge=2)
    noise_dim: int = Field(64, ge=1)
    generator_dims: list[int] = Field(default_factory=lambda: [128, 128], min_length=1)
    critic_dims: list[int] = Field(default_factory=lambda: [128, 128], min_length=1)
    lr: float = Field(2e-4, gt=0)
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.9, ge=0, lt=1)
    gp_lambda: float = Field(10.0, ge=0)
    n_critic: int = Field(1, ge=1)
    tau: float = Field(0.2, gt=0)
    gmm: GmmSection = Field(default_factory=GmmSection)

    def build(self) -> CtganConfig:
        d = self.model_dump()
        d["gmm"] = GmmConfig(**d["gmm"])
        return CtganConfig(**d)


class GbdtSection(_Strict):
    trees: int = Field(200, ge=0)
    depth: int = Field(3, ge=1, le=12)
    lr: float = Field(0.1, gt=0, le=1)
    min_leaf: int = Field(5, ge=1)
    max_bins: int = Field(255, ge=2)
    prior: float = Field(10.0, ge=0)

    def build(self) -> GbdtParams:
        return GbdtParams(self.trees, self.depth, self.lr, self.min_leaf, self.max_bins)


class FilterSection(_Strict):
    keep_n: Optional[int] = Field(None, ge=1)
    folds: int = Field(4, ge=2)
    trees: int = Field(100, ge=1)
    depth: int = Field(3, ge=1, le=12)
    lr: float = Field(0.1, gt=0, le=1)
    min_leaf: int = Field(5, ge=1)
    prior: float = Field(10.0, ge=0)

    def build(self, seed: int = 0) -> FilterConfig:
        return FilterConfig(self.keep_n, GbdtParams(self.trees, self.depth, self.lr, self.min_leaf),
                            self.folds, self.prior, seed)


class SyntheticSource(_Strict):
    kind: Literal["shift"] = "shift"
    n_train: int = Field(2000, ge=10)
    n_test: int = Field(2000, ge=10)
    shift: float = Field(1.0, ge=0, le=2)


class DatasetSection(_Strict):
    name: str = Field(min_length=1)
    data: Optional[Path] = None
    schema_file: Optional[Path] = Field(None, alias="schema")
    test_data: Optional[Path] = None
    missing_policy: MissingPolicy = MissingPolicy.IMPUTE
    synthetic: Optional[SyntheticSource] = None

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.data is None) == (self.synthetic is None):
            raise ValueError("give exactly one of 'data' (with 'schema') or 'synthetic'")
        if self.data is not None and self.schema_file is None:
            raise ValueError("'schema' is required with 'data'")
        return self


class RunConfig(_Strict):
    seed: int = Field(0, ge=0)
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    strategies: list[Literal["none", "gan", "sample_original"]] = Field(
        default_factory=lambda: ["none", "gan", "sample_original"], min_length=1
    )
    train_fractions: list[float] = Field(default_factory=lambda: list(DEFAULT_FRACTIONS), min_length=1)
    test_fraction: float = Field(0.4, gt=0, lt=1)
    synth_size: Optional[int] = Field(None, ge=1)
    resample_original: bool = False
    output_dir: Path = Path("tabshift-out")
    datasets: list[DatasetSection] = Field(default_factory=list)
    gan: GanSection = Field(default_factory=GanSection)
    gbdt: GbdtSection = Field(default_factory=GbdtSection)
    filter: FilterSection = Field(default_factory=FilterSection)

    @field_validator("train_fractions")
    @classmethod
    def _fractions(cls, v):
        bad = [f for f in v if not 0 < f <= 1]
        if bad:
            raise ValueError(f"fractions must lie in (0, 1], got {bad}")
        return v

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if any(s < 0 for s in v):
            raise ValueError("seeds must be non-negative")
        return v

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.gan.build(), self.gbdt.build(), self.filter.build(), self.synth_size,
                              self.resample_original, self.gbdt.prior)


def _format(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{where}: {err['msg']}")
    return "invalid config: " + "; ".join(lines)


def parse_config(raw: dict | None, base_dir: Path | None = None, check_files: bool = True) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(raw or {})
    except ValidationError as exc:
        raise ConfigError(_format(exc)) from None
    if base_dir is not None:
        cfg = _rebase(cfg, base_dir)
    if check_files:
        for i, ds in enumerate(cfg.datasets):
            for key, path in (("data", ds.data), ("schema", ds.schema_file), ("test_data", ds.test_data)):
                if path is not None and not path.is_file():
                    raise ConfigError(f"datasets.{i}.{key}: file not found: {path}")
    return cfg


def _rebase(cfg: RunConfig, base: Path) -> RunConfig:
    """Resolve relative paths against the config file's directory."""

    def fix(p):
        return p if p is None or p.is_absolute() else base / p

    datasets = [
        d.model_copy(update={"data": fix(d.data), "schema_file": fix(d.schema_file), "test_data": fix(d.test_data)})
        for d in cfg.datasets
    ]
    return cfg.model_copy(update={"datasets": datasets, "output_dir": fix(cfg.output_dir)})


def load_config(path: str | Path, check_files: bool = True) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return parse_config(raw, path.parent, check_files)
