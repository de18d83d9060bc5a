"""Run configuration: strict JSON documents validated before any computation."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import __version__
from .engine import EnsembleConfig, Engine, KernelModel, RecordMode, log_sample_times
from .errors import ConfigError, LevyRotorError
from .levy import FloorPolicy, LevyParams
from .unitary import ResonanceParams

ENGINE_ALIASES = {
    "kernel": Engine.CLOSED_FORM_KERNEL.value,
    "wavefunction": Engine.FULL_WAVEFUNCTION.value,
}


class RunConfig(BaseModel):
    """Flat run description; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha: float = Field(1.5, gt=0, le=2)
    floor_policy: FloorPolicy = FloorPolicy.FLOOR_ALLOW_ZERO
    kappa: float = Field(1.0, gt=0)
    p: int = Field(1, ge=1)
    q: int = Field(1, ge=1)
    n_trajectories: int = Field(2000, ge=2)
    horizon: int = Field(1_000_000, ge=1)
    sample_times: Optional[list[int]] = None
    points_per_decade: int = Field(20, ge=1)
    master_seed: int = Field(0, ge=0, lt=2 ** 64)
    engine: Engine = Engine.CLOSED_FORM_KERNEL
    kernel_model: Literal["bessel", "synthetic_beta"] = "bessel"
    beta: Optional[float] = Field(None, gt=0, le=2)
    record_mode: RecordMode = RecordMode.COLLAPSED
    tail_tol: float = Field(1e-10, gt=0, le=1e-6)

    fit_t_min: Optional[int] = Field(None, ge=1)
    fit_t_max: Optional[int] = Field(None, ge=1)
    tolerance: float = Field(0.15, gt=0)
    bootstrap: int = Field(200, ge=0)

    output_dir: str = "out"
    format: Literal["csv", "json"] = "csv"
    plot: bool = False

    alpha_values: Optional[list[float]] = None
    kappa_values: Optional[list[float]] = None
    beta_values: Optional[list[float]] = None

    # master subcommand: cap on the number of sampled intervals
    max_intervals: Optional[int] = Field(None, ge=1)

    artifact_version: Optional[str] = None

    @field_validator("engine", mode="before")
    @classmethod
    def _engine_alias(cls, v):
        return ENGINE_ALIASES.get(v, v)

    @model_validator(mode="after")
    def _check(self):
        if self.kernel_model == "synthetic_beta" and self.beta is None:
            raise ValueError("kernel_model synthetic_beta requires beta")
        if self.kernel_model == "bessel" and self.beta is not None:
            raise ValueError("beta is only meaningful with kernel_model synthetic_beta")
        if self.fit_t_min and self.fit_t_max and self.fit_t_min >= self.fit_t_max:
            raise ValueError("fit_t_min must be below fit_t_max")
        for name in ("alpha_values", "kappa_values", "beta_values"):
            vals = getattr(self, name)
            if vals is not None and not vals:
                raise ValueError(f"{name} must not be empty")
        return self

    def ensemble(self) -> EnsembleConfig:
        """Translate into the engine's configuration (raises :class:`ConfigError`)."""
        try:
            model = KernelModel(self.kernel_model, self.beta)
            return EnsembleConfig(
                n_trajectories=self.n_trajectories,
                horizon=self.horizon,
                levy=LevyParams(self.alpha, self.floor_policy),
                resonance=ResonanceParams(self.p, self.q, self.kappa),
                master_seed=self.master_seed,
                sample_times=self.resolved_sample_times(),
                engine=self.engine,
                kernel_model=model,
                record_mode=self.record_mode,
                tail_tol=self.tail_tol,
            )
        except ConfigError:
            raise
        except LevyRotorError as exc:
            raise ConfigError(str(exc)) from exc

    def resolved_sample_times(self) -> tuple[int, ...]:
        if self.sample_times is not None:
            return tuple(self.sample_times)
        return tuple(int(t) for t in log_sample_times(self.horizon, self.points_per_decade))

    def manifest(self) -> dict:
        data = self.model_dump(mode="json")
        data["artifact_version"] = __version__
        return data


def load_config(path: str | Path | None, **overrides) -> RunConfig:
    """Read a JSON config (or start from defaults) and apply non-``None`` overrides."""
    data: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
