"""Run configuration schema (YAML or JSON), validated before any computation."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import volatility as vol
from .bvar import MinnesotaSpec
from .dates import normalize_quarter, quarter_range
from .errors import ConfigError
from .forecast import ForecastTask, ModelSpec
from .sampler import McmcConfig

Family = Literal["BVAR", "TVAR", "TVAR-CSV", "TVAR-SV"]
Regime = Literal["homoskedastic", "csv", "cholesky"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SimulateConfig(_Strict):
    n: int = Field(3, ge=1)
    p: int = Field(2, ge=1)
    rank: int = Field(1, ge=1)
    T: int = Field(120, ge=1)
    burn: int = Field(100, ge=1)
    regime: Regime = "homoskedastic"
    radius: float = Field(0.8, gt=0, lt=1)
    omega_scale: float = Field(1.0, gt=0)
    phi: float = Field(0.95, gt=-1, lt=1)
    sigma2: float = Field(0.05, ge=0)
    mu: float = 0.0
    b0_lower: float = 0.0
    start: str = "1960Q1"


class DataConfig(_Strict):
    csv: Optional[str] = None
    spec: Optional[str] = None
    variables: Optional[list[str]] = None
    date_range: Optional[tuple[Optional[str], Optional[str]]] = None
    simulate: Optional[SimulateConfig] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.csv is None) == (self.simulate is None):
            raise ValueError("give exactly one of data.csv or data.simulate")
        return self


class VolPriorConfig(_Strict):
    phi_mean: float = 0.95
    phi_var: float = Field(0.01, gt=0)
    sigma2_shape: float = Field(5.0, gt=0)
    sigma2_scale: float = Field(0.16, gt=0)
    mu_mean: float = 0.0
    mu_var: float = Field(10.0, gt=0)
    omega_df: Optional[float] = None
    b0_var: float = Field(10.0, gt=0)


class MinnesotaConfig(_Strict):
    lambda2: float = Field(0.04, gt=0)
    decay: float = 2.0
    ar_lags: int = Field(4, ge=1)
    own_mean: float = 0.0
    intercept_var: float = Field(100.0, gt=0)
    nu0_extra: int = Field(2, ge=0)


class PriorConfig(_Strict):
    theta_variances: tuple[float, float, float] = (1.0, 1.0, 10.0)
    volatility: VolPriorConfig = VolPriorConfig()
    minnesota: MinnesotaConfig = MinnesotaConfig()


class ModelConfig(_Strict):
    name: Optional[str] = None
    family: Family = "TVAR"
    rank: int = Field(1, ge=1)
    p: int = Field(4, ge=1)
    intercept: bool = False
    sigma_mode: Literal["model", "diagonal_fixed"] = "model"
    priors: PriorConfig = PriorConfig()

    def label(self) -> str:
        if self.name:
            return self.name
        base = self.family if self.family == "BVAR" else f"{self.family} R={self.rank}"
        return base + (" diag-fixed" if self.sigma_mode == "diagonal_fixed" else "")

    def to_spec(self, rank: Optional[int] = None, name: Optional[str] = None) -> ModelSpec:
        pr = self.priors
        return ModelSpec(
            name=name or self.label(),
            family=self.family,
            rank=rank or self.rank,
            p=self.p,
            intercept=self.intercept,
            sigma_mode=self.sigma_mode,
            prior_variances=pr.theta_variances,
            minnesota=MinnesotaSpec(**pr.minnesota.model_dump()),
            vol_prior=vol.VolatilityPrior(**pr.volatility.model_dump()),
        )


class McmcBlock(_Strict):
    burn_in: int = Field(1000, ge=0)
    draws: int = Field(5000, ge=1)
    thin: int = Field(1, ge=1)
    sampler_mode: Literal["joint", "per-rank", "auto"] = "auto"
    store_paths: bool = True

    def to_config(self, seed: int) -> McmcConfig:
        return McmcConfig(
            burn_in=self.burn_in,
            draws=self.draws,
            thin=self.thin,
            sampler_mode=self.sampler_mode,
            seed=seed,
            store_paths=self.store_paths,
        )


class ForecastConfig(_Strict):
    origins: Optional[list[str]] = None
    origin_range: Optional[tuple[str, str]] = None
    horizons: list[int] = [1, 4]
    paths: int = Field(5, ge=1)
    targets: list[str] = []
    standardization: Literal["train", "full"] = "train"
    benchmark: str = "BVAR"
    models: Optional[list[ModelConfig]] = None
    ranks: Optional[list[int]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.origins is not None and self.origin_range is not None:
            raise ValueError("give origins or origin_range, not both")
        if any(h < 1 for h in self.horizons):
            raise ValueError("horizons must be >= 1")
        if self.ranks is not None and any(r < 1 for r in self.ranks):
            raise ValueError("ranks must be >= 1")
        return self

    def origin_list(self) -> list[str]:
        if self.origins is not None:
            return [normalize_quarter(o) for o in self.origins]
        if self.origin_range is not None:
            return quarter_range(*self.origin_range)
        return []


class RunConfig(_Strict):
    seed: int = 0
    output: str = "runs/out"
    workers: Optional[int] = Field(None, ge=1)
    data: DataConfig
    model: ModelConfig = ModelConfig()
    mcmc: McmcBlock = McmcBlock()
    forecast: ForecastConfig = ForecastConfig()

    # paths inside the file are relative to it
    base_dir: str = Field(".", exclude=True)

    def resolve(self, path: Optional[str]) -> Optional[Path]:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def model_specs(self) -> list[ModelSpec]:
        blocks = self.forecast.models or [self.model]
        specs = []
        for b in blocks:
            if self.forecast.ranks and b.family != "BVAR":
                specs += [b.to_spec(rank=r, name=f"{b.label().split(' R=')[0]} R={r}") for r in self.forecast.ranks]
            else:
                specs.append(b.to_spec())
        return specs

    def task(self) -> ForecastTask:
        return ForecastTask(
            origins=tuple(self.forecast.origin_list()),
            horizons=tuple(self.forecast.horizons),
            paths=self.forecast.paths,
            targets=tuple(self.forecast.targets),
            benchmark=self.forecast.benchmark,
            standardization=self.forecast.standardization,
        )

    def canonical(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.canonical(), sort_keys=True).encode()).hexdigest()


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(raw: dict, base_dir=".") -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        return RunConfig(**raw, base_dir=str(base_dir))
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {_format_validation(exc)}") from None


def load_config(path, seed: Optional[int] = None, output: Optional[str] = None) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if isinstance(raw, dict) and "base_dir" in raw:
        raise ConfigError("invalid config: base_dir: extra inputs are not permitted")
    raw = dict(raw or {})
    if seed is not None:
        raw["seed"] = seed
    if output is not None:
        raw["output"] = output
    return parse_config(raw, base_dir=path.parent.resolve())
