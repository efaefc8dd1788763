"""Seeded end-to-end terrain randomisation.

Stage labels (each one an independent :class:`RngStream`):

``tier/<i>/centers``
    crater centres and radii of tier ``i`` (index in the config's tier list)
``tier/<i>/crater/<j>/profile`` ``.../rotation`` ``.../distortion``
    per-crater shape draws
``scatter/<k>/points`` ``scatter/<k>/yaw`` ``scatter/<k>/scale``
    placement of asset rule ``k``

Because every entity owns its streams, editing a scatter rule never moves a
crater and vice versa. Only whole-config determinism is promised: adding
density to a tier reshuffles that tier's dart throwing.
"""

from __future__ import annotations

import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .config import (
    DemBase,
    FlatBase,
    ForgeConfig,
    HardcoreProcess,
    MaternProcess,
    NormalProcess,
    PoissonProcess,
    ScatterRule,
    ThomasProcess,
    UniformProcess,
)
from .craters import (
    TWO_PI,
    CraterProfile,
    CraterSpec,
    accumulate_stamp,
    draw_distortion,
    load_profiles,
    make_stamp,
)
from .dem import Dem, bilinear_sample_many, fill_holes, load_dem, resample
from .errors import BudgetExceededError, LunarForgeError, PipelineError
from .mesh import MeshBuffers, collision_mesh, dem_to_mesh
from .points import (
    HardCore,
    PointSet,
    Rectangle,
    sample_hardcore_poisson,
    sample_matern,
    sample_normal,
    sample_poisson,
    sample_thomas,
    sample_uniform,
)
from .rng import RngStream

logger = logging.getLogger(__name__)

THREADS_ENV = "LUNARFORGE_THREADS"


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
    return os.cpu_count() or 1


@lru_cache(maxsize=8)
def _profiles(path: str | None) -> tuple[CraterProfile, ...]:
    return load_profiles(path)


def build_base(config: ForgeConfig) -> Dem:
    """Base terrain at the config resolution: a flat plate or a loaded DEM
    (holes filled, resampled if its cell size differs)."""
    res = config.resolution
    base = config.base
    if isinstance(base, FlatBase):
        w = max(2, int(round(base.width / res)))
        h = max(2, int(round(base.height / res)))
        if w * h > config.pixel_budget:
            raise BudgetExceededError(f"base grid {w}x{h} exceeds pixel budget {config.pixel_budget}")
        return Dem.flat(w, h, res, base.elevation)
    assert isinstance(base, DemBase)
    dem = load_dem(base.path, base.format)
    if dem.has_holes:
        dem = fill_holes(dem)
    if not math.isclose(dem.resolution, res, rel_tol=1e-9):
        dem = resample(dem, res, pixel_budget=config.pixel_budget)
    elif dem.width * dem.height > config.pixel_budget:
        raise BudgetExceededError(f"base grid {dem.width}x{dem.height} exceeds pixel budget")
    return dem


def terrain_domain(dem: Dem) -> Rectangle:
    """Rectangle spanned by the terrain's cell centres."""
    sx, sy = dem.span
    return Rectangle(sx, sy)


def tier_order(config: ForgeConfig) -> list[int]:
    """Tier indices, largest maximum radius first (stable)."""
    return sorted(range(len(config.tiers)), key=lambda i: -config.tiers[i].radius_range[1])


def draw_tier_craters(config: ForgeConfig, tier_index: int, domain: Rectangle,
                      n_profiles: int) -> list[CraterSpec]:
    tier = config.tiers[tier_index]
    seed = config.master_seed
    lo, hi = tier.radius_range
    pts = sample_hardcore_poisson(
        domain, tier.density, HardCore(lo, hi, "per-mark"), tier.max_attempts,
        RngStream(seed, f"tier/{tier_index}/centers"))
    craters = []
    for j, ((x, y), r) in enumerate(zip(pts.points.tolist(), pts.marks.tolist())):
        prefix = f"tier/{tier_index}/crater/{j}"
        profile_index = int(RngStream(seed, f"{prefix}/profile").generator().integers(n_profiles))
        rotation = TWO_PI * float(RngStream(seed, f"{prefix}/rotation").generator().random())
        if rotation >= TWO_PI:
            rotation = 0.0
        distortion = draw_distortion(RngStream(seed, f"{prefix}/distortion").generator(),
                                     config.distortion.harmonics, config.distortion.max_total)
        craters.append(CraterSpec((x, y), r, rotation, distortion, profile_index, tier_index))
    return craters


def compose_craters(dem: Dem, craters: list[CraterSpec], profiles, *, pixel_budget: int,
                    threads: int | None = None) -> Dem:
    """Stamp ``craters`` into ``dem`` in list order (additive)."""
    if not craters:
        return dem
    z = dem.elevations.astype(np.float64)
    res = dem.resolution

    def synth(spec: CraterSpec):
        return make_stamp(spec, profiles[spec.profile_index], res, pixel_budget=pixel_budget)

    threads = default_threads() if threads is None else threads
    if threads > 1 and len(craters) > 1:
        # stamps are built concurrently but added strictly in list order
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for stamp in pool.map(synth, craters):
                accumulate_stamp(z, stamp)
    else:
        for spec in craters:
            accumulate_stamp(z, synth(spec))
    return Dem(z, res, dem.nodata_mask)


def forge_terrain(config: ForgeConfig, *, base: Dem | None = None,
                  threads: int | None = None) -> tuple[Dem, list[CraterSpec]]:
    """Base terrain plus every crater tier.

    Tiers are drawn and stamped largest-radius first; the returned crater
    list is ordered by (tier index, insertion order).
    """
    dem = build_base(config) if base is None else base
    profiles = _profiles(config.profiles)
    domain = terrain_domain(dem)
    by_tier: dict[int, list[CraterSpec]] = {}
    stamp_order: list[CraterSpec] = []
    for i in tier_order(config):
        by_tier[i] = draw_tier_craters(config, i, domain, len(profiles))
        stamp_order.extend(by_tier[i])
    out = compose_craters(dem, stamp_order, profiles, pixel_budget=config.pixel_budget, threads=threads)
    craters = [c for i in sorted(by_tier) for c in by_tier[i]]
    logger.info("forged %dx%d terrain with %d craters", dem.width, dem.height, len(craters))
    return out, craters


# ---------------------------------------------------------------------------
# Asset scattering
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PlacementManifest:
    """Asset instances for an instancer, plus the seed audit record."""

    asset_ids: tuple[str, ...]
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    yaw: np.ndarray
    scale: np.ndarray
    master_seed: int
    stage_labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        n = len(self.asset_ids)
        for name in ("x", "y", "z", "yaw", "scale"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if arr.size != n:
                raise PipelineError(f"manifest column {name} has {arr.size} entries for {n} instances")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))
        object.__setattr__(self, "stage_labels", tuple(self.stage_labels))

    def __len__(self) -> int:
        return len(self.asset_ids)

    @property
    def instances(self) -> list[tuple[str, float, float, float, float, float]]:
        return list(zip(self.asset_ids, self.x.tolist(), self.y.tolist(), self.z.tolist(),
                        self.yaw.tolist(), self.scale.tolist()))

    @classmethod
    def empty(cls, master_seed: int = 0) -> PlacementManifest:
        e = np.empty(0)
        return cls((), e, e, e, e, e, master_seed)


def sample_rule_points(rule: ScatterRule, domain: Rectangle, stream: RngStream) -> PointSet:
    p = rule.process
    if isinstance(p, UniformProcess):
        return sample_uniform(domain, p.count, stream)
    if isinstance(p, NormalProcess):
        return sample_normal(domain, p.count, p.mean, p.sigma, stream)
    if isinstance(p, PoissonProcess):
        return sample_poisson(domain, p.intensity, stream)
    if isinstance(p, HardcoreProcess):
        return sample_hardcore_poisson(domain, p.intensity, HardCore(p.r_min, p.r_max, p.mode),
                                       p.max_attempts, stream)
    if isinstance(p, ThomasProcess):
        return sample_thomas(domain, p.parent_intensity, p.mean_offspring, p.sigma, stream)
    if isinstance(p, MaternProcess):
        return sample_matern(domain, p.parent_intensity, p.mean_offspring, p.cluster_radius, stream)
    raise PipelineError(f"unknown point process {type(p).__name__}")


def scatter_assets(config: ForgeConfig, dem: Dem) -> PlacementManifest:
    """Place every asset rule's instances on ``dem``.

    Heights come from bilinear lookup at each (x, y) plus the rule's
    ``z_offset``; yaw and scale come from the rule's own substreams.
    """
    seed = config.master_seed
    domain = terrain_domain(dem)
    res = dem.resolution
    ids: list[str] = []
    cols: dict[str, list[np.ndarray]] = {k: [] for k in ("x", "y", "z", "yaw", "scale")}
    labels: list[str] = []
    for k, rule in enumerate(config.assets):
        pts = sample_rule_points(rule, domain, RngStream(seed, f"scatter/{k}/points")).points
        labels.append(f"scatter/{k}/points")
        n = len(pts)
        gx = np.minimum(pts[:, 0] / res, dem.width - 1)
        gy = np.minimum(pts[:, 1] / res, dem.height - 1)
        z = bilinear_sample_many(dem, gx, gy) + rule.z_offset
        if rule.yaw == "uniform":
            yaw = TWO_PI * RngStream(seed, f"scatter/{k}/yaw").generator().random(n)
            labels.append(f"scatter/{k}/yaw")
        else:
            yaw = np.full(n, float(rule.yaw))
        lo, hi = rule.scale_range
        scale = RngStream(seed, f"scatter/{k}/scale").generator().uniform(lo, hi, n) if lo < hi else np.full(n, lo)
        labels.append(f"scatter/{k}/scale")
        ids.extend([rule.asset_id] * n)
        for name, arr in zip(("x", "y", "z", "yaw", "scale"), (pts[:, 0], pts[:, 1], z, yaw, scale)):
            cols[name].append(arr)
    arrays = {k: (np.concatenate(v) if v else np.empty(0)) for k, v in cols.items()}
    return PlacementManifest(tuple(ids), master_seed=seed, stage_labels=tuple(labels), **arrays)


# ---------------------------------------------------------------------------
# Full randomisation
# ---------------------------------------------------------------------------

STAGES = ("dem", "visual_mesh", "collision_mesh", "scatter")


@dataclass(frozen=True, eq=False)
class Randomization:
    config: ForgeConfig
    dem: Dem
    craters: list[CraterSpec]
    manifest: PlacementManifest
    mesh: MeshBuffers
    collision: MeshBuffers
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.config.master_seed


class StageError(PipelineError):
    """Wraps the error that aborted a :func:`randomize` stage; ``cause``
    keeps the original (its class decides the CLI exit code)."""

    def __init__(self, stage: str, cause: Exception) -> None:
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def randomize(config: ForgeConfig, new_seed: int | None = None, *,
              threads: int | None = None) -> Randomization:
    """Re-run the whole pipeline (optionally under a new seed) with timings.

    ``timings`` maps each of :data:`STAGES` and ``"total"`` to wall seconds.
    """
    if new_seed is not None:
        config = config.with_seed(new_seed)
    timings: dict[str, float] = {}
    t_start = time.perf_counter()

    def run(stage, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kw)
        except LunarForgeError as exc:
            raise StageError(stage, exc) from exc
        finally:
            timings[stage] = time.perf_counter() - t0

    dem, craters = run("dem", forge_terrain, config, threads=threads)
    mesh = run("visual_mesh", dem_to_mesh, dem, config.mesh.uv_scale)
    collision = run("collision_mesh", collision_mesh, dem, config.mesh.collision_factor)
    manifest = run("scatter", scatter_assets, config, dem)
    timings["total"] = time.perf_counter() - t_start
    return Randomization(config, dem, craters, manifest, mesh, collision, timings)
