"""Forge configuration schema (version 1) and loader.

Configs are YAML (or JSON, which YAML accepts). Relative paths inside a
config resolve against the config file's directory. See ``configs/`` for
worked examples and ``lunarforge schema`` for the JSON schema.
"""

from __future__ import annotations

import math
import os
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    model_validator,
)

from .dem import DEFAULT_PIXEL_BUDGET
from .errors import ConfigError, UnreadableFileError

SCHEMA_VERSION = 1


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FlatBase(_Model):
    kind: Literal["flat"] = "flat"
    width: PositiveFloat
    height: PositiveFloat
    elevation: float = 0.0


class DemBase(_Model):
    kind: Literal["dem"] = "dem"
    path: str
    format: Optional[Literal["raw-f32", "png16"]] = None


class CraterTier(_Model):
    """One size class of craters scattered by a per-mark hard-core process."""

    density: NonNegativeFloat
    radius_range: tuple[PositiveFloat, PositiveFloat]
    max_attempts: PositiveInt = 100

    @model_validator(mode="after")
    def _ordered(self):
        lo, hi = self.radius_range
        if not lo < hi:
            raise ValueError(f"radius_range must satisfy min < max, got {self.radius_range}")
        return self


# Densities are illustrative defaults, not measured lunar statistics.
DEFAULT_TIERS = (
    CraterTier(density=5e-4, radius_range=(5.0, 10.0)),
    CraterTier(density=2e-3, radius_range=(1.5, 5.0)),
    CraterTier(density=8e-3, radius_range=(0.5, 1.5)),
)


class Distortion(_Model):
    harmonics: Annotated[int, Field(ge=0, le=16)] = 4
    max_total: Annotated[float, Field(ge=0.0, lt=1.0)] = 0.08


class UniformProcess(_Model):
    kind: Literal["uniform"] = "uniform"
    count: Annotated[int, Field(ge=0)]


class NormalProcess(_Model):
    kind: Literal["normal"] = "normal"
    count: Annotated[int, Field(ge=0)]
    mean: tuple[float, float]
    sigma: PositiveFloat


class PoissonProcess(_Model):
    kind: Literal["poisson"] = "poisson"
    intensity: NonNegativeFloat


class HardcoreProcess(_Model):
    kind: Literal["hardcore"] = "hardcore"
    intensity: NonNegativeFloat
    r_min: PositiveFloat
    r_max: Optional[PositiveFloat] = None
    mode: Literal["fixed", "per-mark"] = "fixed"
    max_attempts: PositiveInt = 100

    @model_validator(mode="after")
    def _marks(self):
        if self.mode == "per-mark" and (self.r_max is None or self.r_max < self.r_min):
            raise ValueError("per-mark mode needs r_max >= r_min")
        return self


class ThomasProcess(_Model):
    kind: Literal["thomas"] = "thomas"
    parent_intensity: NonNegativeFloat
    mean_offspring: NonNegativeFloat
    sigma: PositiveFloat


class MaternProcess(_Model):
    kind: Literal["matern"] = "matern"
    parent_intensity: NonNegativeFloat
    mean_offspring: NonNegativeFloat
    cluster_radius: PositiveFloat


Process = Annotated[
    Union[UniformProcess, NormalProcess, PoissonProcess, HardcoreProcess, ThomasProcess, MaternProcess],
    Field(discriminator="kind"),
]


class ScatterRule(_Model):
    """How one asset is scattered over the terrain.

    ``yaw`` is ``"uniform"`` (uniform in [0, 2pi)) or a fixed angle in
    radians. ``footprint`` is the asset's top-down radius at scale 1, used by
    the annotation stage.
    """

    asset_id: Annotated[str, Field(min_length=1)]
    process: Process
    scale_range: tuple[PositiveFloat, PositiveFloat] = (1.0, 1.0)
    yaw: Union[Literal["uniform"], float] = "uniform"
    z_offset: float = 0.0
    footprint: PositiveFloat = 0.25

    @model_validator(mode="after")
    def _scale(self):
        lo, hi = self.scale_range
        if lo > hi:
            raise ValueError(f"scale_range must satisfy min <= max, got {self.scale_range}")
        if isinstance(self.yaw, float) and not math.isfinite(self.yaw):
            raise ValueError("fixed yaw must be finite")
        return self


class MeshSettings(_Model):
    uv_scale: float = 1.0
    collision_factor: PositiveInt = 4


class PreviewSettings(_Model):
    sun_azimuth_deg: float = 315.0
    sun_elevation_deg: Annotated[float, Field(gt=0.0, le=90.0)] = 30.0


class ForgeConfig(_Model):
    schema_version: Literal[1] = 1
    master_seed: Annotated[int, Field(ge=0, lt=2**64)] = 0
    resolution: PositiveFloat
    base: Annotated[Union[FlatBase, DemBase], Field(discriminator="kind")]
    tiers: tuple[CraterTier, ...] = DEFAULT_TIERS
    profiles: Optional[str] = None
    distortion: Distortion = Distortion()
    assets: tuple[ScatterRule, ...] = ()
    pixel_budget: PositiveInt = DEFAULT_PIXEL_BUDGET
    mesh: MeshSettings = MeshSettings()
    preview: PreviewSettings = PreviewSettings()

    def with_seed(self, seed: int) -> ForgeConfig:
        return self.model_validate({**self.model_dump(), "master_seed": seed})


def _resolve(data: dict, root: Path) -> dict:
    data = dict(data)
    base = data.get("base")
    if isinstance(base, dict) and base.get("kind") == "dem" and isinstance(base.get("path"), str):
        data["base"] = {**base, "path": str((root / base["path"]).resolve())}
    if isinstance(data.get("profiles"), str):
        data["profiles"] = str((root / data["profiles"]).resolve())
    return data


def parse_config(data: dict, root: str | os.PathLike | None = None) -> ForgeConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    if root is not None:
        data = _resolve(data, Path(root))
    try:
        return ForgeConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike) -> ForgeConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UnreadableFileError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from None
    return parse_config(data, path.parent)


def config_schema() -> dict:
    return ForgeConfig.model_json_schema()
