"""Top-down annotations and relief previews.

Instances are painted as filled disks (radius = footprint x scale) into a
32-bit id raster on the terrain grid. Id ``k + 1`` is manifest instance
``k``; 0 is background. Later instances overwrite earlier ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import ndimage

from .dem import Dem
from .errors import AnnotationError
from .forge import PlacementManifest

FOOTPRINT_POLYGON_SIDES = 32


@dataclass(frozen=True, eq=False)
class InstanceRaster:
    ids: np.ndarray
    resolution: float

    def __post_init__(self) -> None:
        ids = np.asarray(self.ids, dtype=np.uint32)
        if ids.ndim != 2:
            raise AnnotationError("instance raster must be 2-D")
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]


@dataclass(frozen=True)
class InstanceAnnotation:
    id: int
    asset_id: str
    bbox: tuple[int, int, int, int]  # (x, y, w, h) in pixels, (x, y) = min column, min row
    pixel_count: int
    footprint: tuple[tuple[float, float], ...]  # polygon vertices in meters

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "asset_id": self.asset_id,
            "bbox": list(self.bbox),
            "pixel_count": self.pixel_count,
            "footprint": [list(p) for p in self.footprint],
        }


AnnotationSet = list[InstanceAnnotation]


def footprint_polygon(x: float, y: float, radius: float,
                      sides: int = FOOTPRINT_POLYGON_SIDES) -> tuple[tuple[float, float], ...]:
    t = np.arange(sides) * (2.0 * math.pi / sides)
    return tuple(zip((x + radius * np.cos(t)).tolist(), (y + radius * np.sin(t)).tolist()))


def rasterize_instances(dem: Dem, manifest: PlacementManifest,
                        footprints: Mapping[str, float]) -> tuple[InstanceRaster, AnnotationSet]:
    """Paint every instance and annotate the result.

    A cell is covered when its centre lies within the disk (distance <=
    radius). Instances covering no cell (fully hidden or too small) get no
    annotation record.
    """
    missing = sorted(set(manifest.asset_ids) - set(footprints))
    if missing:
        raise AnnotationError(f"no footprint for asset(s): {', '.join(missing)}")
    res = dem.resolution
    h, w = dem.shape
    ids = np.zeros((h, w), dtype=np.uint32)
    radii = np.array([footprints[a] for a in manifest.asset_ids], dtype=np.float64) * manifest.scale
    for k, (x, y, r) in enumerate(zip(manifest.x.tolist(), manifest.y.tolist(), radii.tolist())):
        if r <= 0:
            continue
        i_lo = max(0, math.ceil((x - r) / res))
        i_hi = min(w - 1, math.floor((x + r) / res))
        j_lo = max(0, math.ceil((y - r) / res))
        j_hi = min(h - 1, math.floor((y + r) / res))
        if i_lo > i_hi or j_lo > j_hi:
            continue
        dx = np.arange(i_lo, i_hi + 1) * res - x
        dy = np.arange(j_lo, j_hi + 1) * res - y
        inside = dx[None, :] ** 2 + dy[:, None] ** 2 <= r * r
        ids[j_lo:j_hi + 1, i_lo:i_hi + 1][inside] = k + 1

    raster = InstanceRaster(ids, res)
    n = len(manifest)
    counts = np.bincount(ids.ravel(), minlength=n + 1)
    slices = ndimage.find_objects(ids.astype(np.int64), max_label=n) if n else []
    annotations: AnnotationSet = []
    for k, sl in enumerate(slices):
        if sl is None:
            continue
        rows, cols = sl
        annotations.append(InstanceAnnotation(
            id=k + 1,
            asset_id=manifest.asset_ids[k],
            bbox=(cols.start, rows.start, cols.stop - cols.start, rows.stop - rows.start),
            pixel_count=int(counts[k + 1]),
            footprint=footprint_polygon(float(manifest.x[k]), float(manifest.y[k]), float(radii[k])),
        ))
    return raster, annotations


def hillshade(dem: Dem, sun_azimuth: float, sun_elevation: float) -> np.ndarray:
    """Lambertian relief shading as uint8, row 0 = south like the grid.

    ``sun_azimuth`` is a compass bearing in radians (0 = north = +y,
    clockwise towards east = +x); ``sun_elevation`` is above the horizon.
    Normals come from central differences (one-sided on the border).
    """
    if not 0.0 < sun_elevation <= math.pi / 2:
        raise AnnotationError("sun_elevation must be in (0, pi/2]")
    z = np.asarray(dem.elevations, dtype=np.float64)
    res = dem.resolution
    if min(z.shape) >= 2:
        dzdy, dzdx = np.gradient(z, res)
    else:
        dzdy = dzdx = np.zeros_like(z)
    ce = math.cos(sun_elevation)
    lx, ly, lz = math.sin(sun_azimuth) * ce, math.cos(sun_azimuth) * ce, math.sin(sun_elevation)
    # n = (-dz/dx, -dz/dy, 1) / |.|
    shade = (lz - lx * dzdx - ly * dzdy) / np.sqrt(1.0 + dzdx**2 + dzdy**2)
    return np.rint(np.clip(shade, 0.0, 1.0) * 255.0).astype(np.uint8)
