"""Seeded spatial point processes over rectangles, disks and density masks.

All samplers take an :class:`~lunarforge.rng.RngStream` (or a numpy
``Generator``) and are otherwise pure. Domains use meters:

* :class:`Rectangle` covers ``[0, width] x [0, height]``,
* :class:`Disk` is centred on the origin,
* :class:`DensityMask` covers ``[0, cols*res) x [0, rows*res)`` and weights
  each cell; a cell of weight ``w`` carries intensity ``intensity * w / max(w)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Union

import numpy as np

from .errors import SamplingError
from .rng import RngStream, as_generator

# Gaussian offspring beyond this many sigmas are ignored when padding the
# parent window (mass lost per child < 4e-6).
THOMAS_PARENT_MARGIN_SIGMAS = 5.0


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Rectangle:
    width: float
    height: float

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise SamplingError(f"rectangle needs positive dimensions, got {self.width}x{self.height}")

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return 0.0, 0.0, self.width, self.height

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return gen.random((n, 2)) * (self.width, self.height)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        x, y = pts[:, 0], pts[:, 1]
        return (x >= 0) & (x <= self.width) & (y >= 0) & (y <= self.height)


@dataclass(frozen=True)
class Disk:
    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise SamplingError(f"disk needs a positive radius, got {self.radius}")

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        r = self.radius
        return -r, -r, r, r

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        u = gen.random((n, 2))
        r = self.radius * np.sqrt(u[:, 0])
        t = 2 * np.pi * u[:, 1]
        return np.column_stack([r * np.cos(t), r * np.sin(t)])

    def contains(self, pts: np.ndarray) -> np.ndarray:
        return np.hypot(pts[:, 0], pts[:, 1]) <= self.radius


@dataclass(frozen=True, eq=False)
class DensityMask:
    """Per-cell non-negative weights; row 0 is the southern edge."""

    weights: np.ndarray
    resolution: float

    def __post_init__(self) -> None:
        w = np.array(self.weights, dtype=np.float64, copy=True)
        if w.ndim != 2:
            raise SamplingError("density mask must be 2-D")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise SamplingError("density mask weights must be finite and >= 0")
        if not np.any(w > 0):
            raise SamplingError("density mask has no positive weight")
        if not self.resolution > 0:
            raise SamplingError("density mask resolution must be positive")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def area(self) -> float:
        """Intensity-weighted area: sum of ``w / max(w)`` times cell area."""
        w = self.weights
        return float(w.sum() / w.max()) * self.resolution**2

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        rows, cols = self.weights.shape
        return 0.0, 0.0, cols * self.resolution, rows * self.resolution

    @cached_property
    def _alias(self) -> tuple[np.ndarray, np.ndarray]:
        return build_alias_table(self.weights.ravel())

    def draw(self, gen: np.random.Generator, n: int) -> np.ndarray:
        accept, alias = self._alias
        k = gen.integers(0, accept.size, n)
        u = gen.random(n)
        cell = np.where(u < accept[k], k, alias[k])
        jitter = gen.random((n, 2))
        cols = self.weights.shape[1]
        row, col = np.divmod(cell, cols)
        return np.column_stack([(col + jitter[:, 0]) * self.resolution,
                                (row + jitter[:, 1]) * self.resolution])

    def contains(self, pts: np.ndarray) -> np.ndarray:
        rows, cols = self.weights.shape
        c = np.floor(pts[:, 0] / self.resolution).astype(np.intp)
        r = np.floor(pts[:, 1] / self.resolution).astype(np.intp)
        inside = (c >= 0) & (c < cols) & (r >= 0) & (r < rows)
        out = np.zeros(len(pts), bool)
        out[inside] = self.weights[r[inside], c[inside]] > 0
        return out


SampleDomain = Union[Rectangle, Disk, DensityMask]


def build_alias_table(weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose's alias table for sampling indices proportionally to ``weights``.

    Returns ``(accept, alias)``: pick ``k`` uniformly, keep it with
    probability ``accept[k]``, otherwise take ``alias[k]``.
    """
    p = np.asarray(weights, dtype=np.float64)
    n = p.size
    scaled = (p * (n / p.sum())).tolist()
    accept = [0.0] * n
    alias = list(range(n))
    small = [i for i, v in enumerate(scaled) if v < 1.0]
    large = [i for i, v in enumerate(scaled) if v >= 1.0]
    while small and large:
        s = small.pop()
        g = large[-1]
        accept[s] = scaled[s]
        alias[s] = g
        scaled[g] = scaled[g] + scaled[s] - 1.0
        if scaled[g] < 1.0:
            large.pop()
            small.append(g)
    heaviest = int(np.argmax(p))
    for i in large + small:
        # leftovers only differ from 1 by rounding, unless they carry no weight
        if p[i] > 0:
            accept[i] = 1.0
        else:
            alias[i] = heaviest
    return np.array(accept), np.array(alias, dtype=np.intp)


# ---------------------------------------------------------------------------
# Point sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PointSet:
    points: np.ndarray
    marks: np.ndarray | None = None

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        if self.marks is not None:
            marks = np.asarray(self.marks, dtype=np.float64).ravel()
            if marks.size != len(pts):
                raise SamplingError(f"{marks.size} marks for {len(pts)} points")
            object.__setattr__(self, "marks", marks)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls, with_marks: bool = False) -> PointSet:
        return cls(np.empty((0, 2)), np.empty(0) if with_marks else None)


@dataclass(frozen=True)
class HardCore:
    """Exclusion rule for :func:`sample_hardcore_poisson`.

    ``fixed``: no two points closer than ``r_min``.
    ``per-mark``: each point carries a mark drawn uniformly in
    ``[r_min, r_max]`` and two points must be at least the sum of their
    marks apart (non-overlapping disks).
    """

    r_min: float
    r_max: float | None = None
    mode: Literal["fixed", "per-mark"] = "fixed"

    def __post_init__(self) -> None:
        if not self.r_min > 0:
            raise SamplingError(f"hardcore r_min must be > 0, got {self.r_min}")
        if self.mode not in ("fixed", "per-mark"):
            raise SamplingError(f"unknown hardcore mode {self.mode!r}")
        if self.mode == "per-mark":
            if self.r_max is None or self.r_max < self.r_min:
                raise SamplingError("per-mark hardcore needs r_max >= r_min")


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def _check_domain(domain) -> None:
    if not isinstance(domain, (Rectangle, Disk, DensityMask)):
        raise SamplingError(f"unsupported domain {type(domain).__name__}")


def sample_uniform(domain: SampleDomain, count: int, rng) -> PointSet:
    """Exactly ``count`` i.i.d. points, density-weighted for masks."""
    _check_domain(domain)
    if count < 0:
        raise SamplingError("count must be >= 0")
    gen = as_generator(rng)
    return PointSet(domain.draw(gen, int(count)))


def sample_normal(
    domain: SampleDomain,
    count: int,
    mean: tuple[float, float],
    sigma: float,
    rng,
    *,
    max_draws: int | None = None,
) -> PointSet:
    """``count`` isotropic normal points, rejecting those outside the domain.

    Gives up with :class:`SamplingError` after ``max_draws`` candidates
    (default ``max(1000, 100 * count)``).
    """
    _check_domain(domain)
    if count < 0:
        raise SamplingError("count must be >= 0")
    if not sigma > 0:
        raise SamplingError("sigma must be > 0")
    gen = as_generator(rng)
    budget = max(1000, 100 * count) if max_draws is None else max_draws
    kept: list[np.ndarray] = []
    have = drawn = 0
    while have < count:
        if drawn >= budget:
            raise SamplingError(
                f"normal sampler kept {have}/{count} points after {drawn} draws; "
                "mean lies too far outside the domain for this sigma")
        batch = min(max(2 * (count - have), 16), budget - drawn)
        cand = gen.normal(mean, sigma, size=(batch, 2))
        drawn += batch
        cand = cand[domain.contains(cand)]
        kept.append(cand)
        have += len(cand)
    pts = np.concatenate(kept)[:count] if kept else np.empty((0, 2))
    return PointSet(pts)


def sample_poisson(domain: SampleDomain, intensity: float, rng) -> PointSet:
    """Homogeneous Poisson process (inhomogeneous through mask weights)."""
    _check_domain(domain)
    if not intensity >= 0:
        raise SamplingError("intensity must be >= 0")
    gen = as_generator(rng)
    n = int(gen.poisson(intensity * domain.area))
    return PointSet(domain.draw(gen, n))


class _SpatialHash:
    def __init__(self, cell: float) -> None:
        self.cell = cell
        self.buckets: dict[tuple[int, int], list[int]] = {}

    def key(self, x: float, y: float) -> tuple[int, int]:
        return math.floor(x / self.cell), math.floor(y / self.cell)

    def add(self, idx: int, x: float, y: float) -> None:
        self.buckets.setdefault(self.key(x, y), []).append(idx)

    def near(self, x: float, y: float):
        kx, ky = self.key(x, y)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                yield from self.buckets.get((kx + dx, ky + dy), ())


def sample_hardcore_poisson(
    domain: SampleDomain,
    intensity: float,
    hardcore: HardCore,
    max_attempts: int = 100,
    rng=None,
    *,
    block: int = 32,
) -> PointSet:
    """Hard-core Poisson pattern by dart throwing.

    A target count is drawn from ``Poisson(intensity * area)``; each target
    point gets up to ``max_attempts`` uniform candidates and keeps the first
    one that respects the exclusion rule. Points that run out of attempts are
    dropped, so the result may hold fewer points than the target. In
    per-mark mode marks are inserted largest first.
    """
    _check_domain(domain)
    if rng is None:
        raise SamplingError("an rng stream is required")
    if not intensity >= 0:
        raise SamplingError("intensity must be >= 0")
    if max_attempts < 1:
        raise SamplingError("max_attempts must be >= 1")
    gen = as_generator(rng)
    target = int(gen.poisson(intensity * domain.area))
    per_mark = hardcore.mode == "per-mark"
    if per_mark:
        marks = np.sort(gen.uniform(hardcore.r_min, hardcore.r_max, target))[::-1]
        reach = 2.0 * hardcore.r_max
    else:
        marks = None
        reach = hardcore.r_min
    if target == 0:
        return PointSet.empty(with_marks=per_mark)

    grid = _SpatialHash(reach)
    xs: list[float] = []
    ys: list[float] = []
    ms: list[float] = []
    pool = np.empty((0, 2))
    pos = 0
    for i in range(target):
        mi = float(marks[i]) if per_mark else 0.0
        for _ in range(max_attempts):
            if pos == len(pool):
                pool = domain.draw(gen, block)
                pos = 0
            x, y = float(pool[pos, 0]), float(pool[pos, 1])
            pos += 1
            ok = True
            for j in grid.near(x, y):
                limit = mi + ms[j] if per_mark else reach
                if math.hypot(x - xs[j], y - ys[j]) < limit:
                    ok = False
                    break
            if ok:
                grid.add(len(xs), x, y)
                xs.append(x)
                ys.append(y)
                ms.append(mi)
                break

    pts = np.column_stack([xs, ys]) if xs else np.empty((0, 2))
    return PointSet(pts, np.array(ms) if per_mark else None)


def _parent_window(domain: SampleDomain, margin: float) -> tuple[float, float, float, float]:
    x0, y0, x1, y1 = domain.bounds
    if isinstance(domain, DensityMask):
        return x0, y0, x1, y1
    return x0 - margin, y0 - margin, x1 + margin, y1 + margin


def _cluster_parents(domain: SampleDomain, parent_intensity: float, margin: float,
                     gen: np.random.Generator) -> np.ndarray:
    if isinstance(domain, DensityMask):
        n = int(gen.poisson(parent_intensity * domain.area))
        return domain.draw(gen, n)
    x0, y0, x1, y1 = _parent_window(domain, margin)
    n = int(gen.poisson(parent_intensity * (x1 - x0) * (y1 - y0)))
    return gen.random((n, 2)) * (x1 - x0, y1 - y0) + (x0, y0)


@dataclass(frozen=True, eq=False)
class ClusterRealisation:
    """Children plus the parents that spawned them (parents are not part of
    the emitted pattern; they are exposed for diagnostics and tests)."""

    children: PointSet
    parents: np.ndarray
    parent_of: np.ndarray = field(repr=False)


def _cluster(domain, parent_intensity, mean_offspring, margin, offsets, rng) -> ClusterRealisation:
    _check_domain(domain)
    if not parent_intensity >= 0:
        raise SamplingError("parent_intensity must be >= 0")
    if not mean_offspring >= 0:
        raise SamplingError("mean_offspring must be >= 0")
    gen = as_generator(rng)
    parents = _cluster_parents(domain, parent_intensity, margin, gen)
    counts = gen.poisson(mean_offspring, len(parents))
    owner = np.repeat(np.arange(len(parents)), counts)
    children = parents[owner] + offsets(gen, len(owner))
    keep = domain.contains(children) if len(children) else np.zeros(0, bool)
    return ClusterRealisation(PointSet(children[keep]), parents, owner[keep])


def thomas_process(domain: SampleDomain, parent_intensity: float, mean_offspring: float,
                   sigma: float, rng) -> ClusterRealisation:
    if not sigma > 0:
        raise SamplingError("sigma must be > 0")
    return _cluster(domain, parent_intensity, mean_offspring,
                    THOMAS_PARENT_MARGIN_SIGMAS * sigma,
                    lambda gen, n: gen.normal(0.0, sigma, (n, 2)), rng)


def matern_process(domain: SampleDomain, parent_intensity: float, mean_offspring: float,
                   cluster_radius: float, rng) -> ClusterRealisation:
    if not cluster_radius > 0:
        raise SamplingError("cluster_radius must be > 0")

    def offsets(gen, n):
        u = gen.random((n, 2))
        r = cluster_radius * np.sqrt(u[:, 0])
        t = 2 * np.pi * u[:, 1]
        return np.column_stack([r * np.cos(t), r * np.sin(t)])

    return _cluster(domain, parent_intensity, mean_offspring, cluster_radius, offsets, rng)


def sample_thomas(domain: SampleDomain, parent_intensity: float, mean_offspring: float,
                  sigma: float, rng) -> PointSet:
    """Thomas cluster process.

    Parents are Poisson over the domain padded by five sigmas, so clusters
    centred just outside still contribute and the pattern is stationary up
    to the edges. Each parent spawns ``Poisson(mean_offspring)`` children
    displaced by an isotropic normal; children outside the domain are
    discarded and parents are not emitted.
    """
    return thomas_process(domain, parent_intensity, mean_offspring, sigma, rng).children


def sample_matern(domain: SampleDomain, parent_intensity: float, mean_offspring: float,
                  cluster_radius: float, rng) -> PointSet:
    """Matérn cluster process: as Thomas with children uniform in a disk."""
    return matern_process(domain, parent_intensity, mean_offspring, cluster_radius, rng).children
