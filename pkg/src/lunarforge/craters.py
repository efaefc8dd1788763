"""Crater profiles and crater elevation stamps.

A profile is a radial curve ``h(u)`` where both the distance from the centre
``u`` and the elevation ``h`` are in units of the crater radius. A crater of
radius ``r`` therefore has elevation offset ``r * h(d / r)`` at distance ``d``.
Profiles are smoothed with a moving polynomial filter and interpolated with a
natural cubic spline; the spline is identically zero from ``u_max`` on.

A stamp is a square patch ``round(4 r / res)`` cells wide, aligned with the
terrain grid, holding the crater's signed elevation offsets. Stamps are
composed into a terrain additively.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np
from numba import njit
from scipy.interpolate import CubicSpline

from .dem import DEFAULT_PIXEL_BUDGET, Dem
from .errors import BudgetExceededError, CraterError, ProfileError

DEFAULT_U_MAX = 2.0
DEFAULT_WINDOW = 5
DEFAULT_DEGREE = 2
END_VALUE_TOL = 1e-3
END_SLOPE_TOL = 1e-6

BUNDLED_PROFILES = "crater_profiles.csv"

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Profiles
# ---------------------------------------------------------------------------


def smooth_profile(samples, window: int = DEFAULT_WINDOW, degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """Savitzky-Golay style smoothing of ``(u, h)`` samples.

    Every output value is the value at ``u[i]`` of a least-squares polynomial
    of ``degree`` fitted to ``window`` consecutive samples. Interior windows
    are centred; near the ends the window keeps its length and slides inwards
    so it stays inside the data. Actual ``u`` spacing is honoured, so uneven
    sampling is fine. Returns a new ``(n, 2)`` array with ``u`` unchanged.
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != 2:
        raise ProfileError(f"samples must be an (n, 2) array of (u, h), got shape {s.shape}")
    if window < 1 or window % 2 == 0:
        raise ProfileError(f"window must be a positive odd integer, got {window}")
    if degree < 0 or degree >= window:
        raise ProfileError(f"degree must satisfy 0 <= degree < window, got {degree} for window {window}")
    n = len(s)
    if n < window:
        raise ProfileError(f"need at least {window} samples for window {window}, got {n}")
    u, h = s[:, 0], s[:, 1]
    half = window // 2
    start = np.clip(np.arange(n) - half, 0, n - window)
    idx = start[:, None] + np.arange(window)[None, :]
    uw = u[idx]
    scale = uw[:, -1] - uw[:, 0]
    scale[scale == 0] = 1.0
    t = (uw - u[:, None]) / scale[:, None]
    vander = t[:, :, None] ** np.arange(degree + 1)[None, None, :]
    coef = np.einsum("nij,nj->ni", np.linalg.pinv(vander), h[idx])
    return np.column_stack([u, coef[:, 0]])


@dataclass(frozen=True, eq=False)
class CraterProfile:
    """Normalised radial crater profile with its natural cubic spline."""

    u: np.ndarray
    h: np.ndarray
    u_max: float = DEFAULT_U_MAX
    spline: CubicSpline = field(init=False, repr=False)

    def __post_init__(self) -> None:
        u = np.array(self.u, dtype=np.float64)
        h = np.array(self.h, dtype=np.float64)
        if u.ndim != 1 or u.shape != h.shape:
            raise ProfileError("u and h must be 1-D arrays of equal length")
        if len(u) < 4:
            raise ProfileError(f"a profile needs at least 4 samples, got {len(u)}")
        if not np.all(np.isfinite(u)) or not np.all(np.isfinite(h)):
            raise ProfileError("profile samples must be finite")
        if u[0] != 0.0:
            raise ProfileError(f"profile must start at u = 0, got {u[0]}")
        if not np.all(np.diff(u) > 0):
            raise ProfileError("profile u must be strictly ascending")
        if u[-1] != self.u_max:
            raise ProfileError(f"profile must end at u_max = {self.u_max}, got {u[-1]}")
        if h[-1] != 0.0:
            raise ProfileError(f"profile must reach h = 0 at u_max, got {h[-1]}")
        spline = CubicSpline(u, h, bc_type="natural")
        slope = float(spline(self.u_max, 1))
        if abs(slope) > END_SLOPE_TOL:
            raise ProfileError(
                f"profile slope at u_max is {slope:.3g}; it must blend flat into the terrain "
                f"(|h'| <= {END_SLOPE_TOL:g}); extend the flat tail")
        u.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "spline", spline)

    @property
    def samples(self) -> np.ndarray:
        return np.column_stack([self.u, self.h])

    def __call__(self, u) -> np.ndarray:
        """Evaluate ``h(u)``; exactly 0 for ``u >= u_max``."""
        u = np.asarray(u, dtype=np.float64)
        out = np.zeros(u.shape)
        inside = u < self.u_max
        out[inside] = self.spline(np.abs(u[inside]))
        return out

    @property
    def floor_depth(self) -> float:
        """Depth of the centre below the surrounding terrain, in radii."""
        return -float(self.h[0])

    @property
    def rim_height(self) -> float:
        return float(self.h.max())


def profile_from_samples(
    samples,
    *,
    u_max: float = DEFAULT_U_MAX,
    window: int = DEFAULT_WINDOW,
    degree: int = DEFAULT_DEGREE,
) -> CraterProfile:
    """Normalise, validate, smooth and spline-fit one raw profile.

    The raw distance axis is rescaled so its last sample lands on ``u_max``
    and elevations get the same factor. Short profiles shrink the smoothing
    window to the largest odd length that fits.
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim != 2 or s.shape[1] != 2:
        raise ProfileError("samples must be (u, h) pairs")
    if len(s) < 4:
        raise ProfileError(f"a profile needs at least 4 samples, got {len(s)}")
    u, h = s[:, 0], s[:, 1]
    if not np.all(np.isfinite(s)):
        raise ProfileError("profile samples must be finite")
    if u[0] != 0.0:
        raise ProfileError(f"profile must start at u = 0, got {u[0]}")
    if not np.all(np.diff(u) > 0):
        raise ProfileError("profile u must be strictly ascending")
    factor = u_max / u[-1]
    u = u * factor
    h = h * factor
    u[-1] = u_max
    if abs(h[-1]) > END_VALUE_TOL:
        raise ProfileError(f"profile ends at h = {h[-1]:.4g} (normalised); it must return to 0 at u_max")
    w = min(window, len(u) if len(u) % 2 else len(u) - 1)
    smoothed = smooth_profile(np.column_stack([u, h]), w, min(degree, w - 1))[:, 1]
    smoothed[-1] = 0.0
    return CraterProfile(u, smoothed, u_max)


def parse_profile_csv(text: str) -> list[np.ndarray]:
    """Split profile CSV text into raw ``(n, 2)`` sample blocks."""
    blocks: list[np.ndarray] = []
    current: list[tuple[float, float]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            if current:
                blocks.append(np.array(current))
                current = []
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ProfileError(f"line {lineno}: expected 'u,h', got {raw!r}")
        try:
            current.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise ProfileError(f"line {lineno}: not a number pair: {raw!r}") from None
    if current:
        blocks.append(np.array(current))
    if not blocks:
        raise ProfileError("profile file holds no profiles")
    return blocks


def load_profiles(
    path: str | os.PathLike | None = None,
    *,
    u_max: float = DEFAULT_U_MAX,
    window: int = DEFAULT_WINDOW,
    degree: int = DEFAULT_DEGREE,
) -> tuple[CraterProfile, ...]:
    """Load a profile library; ``None`` loads the bundled analytic set."""
    if path is None:
        text = resources.files("lunarforge").joinpath("data").joinpath(BUNDLED_PROFILES).read_text()
        source = f"<bundled {BUNDLED_PROFILES}>"
    else:
        with open(path) as fh:
            text = fh.read()
        source = str(path)
    library = []
    for k, block in enumerate(parse_profile_csv(text)):
        try:
            library.append(profile_from_samples(block, u_max=u_max, window=window, degree=degree))
        except ProfileError as exc:
            raise ProfileError(f"{source}: profile {k}: {exc}") from None
    return tuple(library)


def analytic_profile_samples(n_profiles: int = 16, knots: int = 64,
                             u_max: float = DEFAULT_U_MAX, ejecta_end: float = 1.6) -> list[np.ndarray]:
    """Fresh-to-degraded family of simple crater profiles.

    Profile ``k`` interpolates from a fresh bowl (depth/diameter 0.20, rim
    0.06 diameters, parabolic floor) to a degraded one (0.10, 0.02, flatter
    quartic floor). Outside the rim the ejecta blanket decays as a cubic to
    zero at ``ejecta_end`` radii; the rest of the support is flat.
    """
    u = np.linspace(0.0, u_max, knots)
    out = []
    for k in range(n_profiles):
        t = k / max(n_profiles - 1, 1)
        depth = 2.0 * (0.20 - 0.10 * t)   # radii
        rim = 2.0 * (0.06 - 0.04 * t)
        power = 2.0 + 2.0 * t
        inner = rim - depth * (1.0 - u**power)
        outer = rim * np.clip((ejecta_end - u) / (ejecta_end - 1.0), 0.0, None) ** 3
        out.append(np.column_stack([u, np.where(u <= 1.0, inner, outer)]))
    return out


def format_profile_csv(blocks: Sequence[np.ndarray]) -> str:
    return "\n".join("\n".join(f"{u!r},{h!r}" for u, h in b.tolist()) + "\n" for b in blocks)


def write_profile_csv(path: str | os.PathLike, blocks: Sequence[np.ndarray]) -> None:
    with open(path, "w") as fh:
        fh.write(format_profile_csv(blocks))


# ---------------------------------------------------------------------------
# Stamps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CraterSpec:
    center: tuple[float, float]
    radius: float
    rotation: float = 0.0
    distortion: tuple[tuple[float, int, float], ...] = ()
    profile_index: int = 0
    tier: int = 0

    def __post_init__(self) -> None:
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise CraterError(f"crater radius must be > 0, got {self.radius}")
        if not (0.0 <= self.rotation < TWO_PI):
            raise CraterError(f"rotation must lie in [0, 2pi), got {self.rotation}")
        dist = tuple((float(a), int(f), float(p)) for a, f, p in self.distortion)
        if sum(abs(a) for a, _, _ in dist) >= 1.0:
            raise CraterError("sum of |distortion amplitudes| must stay below 1")
        if any(f < 0 for _, f, _ in dist):
            raise CraterError("distortion frequencies must be non-negative integers")
        if self.profile_index < 0:
            raise CraterError("profile_index must be >= 0")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        object.__setattr__(self, "distortion", dist)

    def to_record(self) -> dict:
        return {
            "tier": self.tier,
            "x": self.center[0],
            "y": self.center[1],
            "radius": self.radius,
            "rotation": self.rotation,
            "profile_index": self.profile_index,
            "distortion": [list(d) for d in self.distortion],
        }

    @classmethod
    def from_record(cls, rec: dict) -> CraterSpec:
        return cls((rec["x"], rec["y"]), rec["radius"], rec["rotation"],
                   tuple(tuple(d) for d in rec["distortion"]), rec["profile_index"], rec.get("tier", 0))


@dataclass(frozen=True, eq=False)
class CraterStamp:
    """Elevation offsets of one crater on a grid-aligned square patch.

    ``origin`` is the terrain cell index of the patch's cell (0, 0) and
    ``anchor`` the same point in meters.
    """

    dem: Dem
    origin: tuple[int, int]

    @property
    def anchor(self) -> tuple[float, float]:
        return self.origin[0] * self.dem.resolution, self.origin[1] * self.dem.resolution

    @property
    def side(self) -> int:
        return self.dem.width


def stamp_side(radius: float, resolution: float) -> int:
    return max(2, int(math.floor(4.0 * radius / resolution + 0.5)))


def harmonic_coefficients(distortion: Sequence[tuple[float, int, float]]) -> tuple[np.ndarray, np.ndarray]:
    """Rewrite ``sum a sin(f phi + p)`` as ``sum_k S_k sin(k phi) + C_k cos(k phi)``."""
    top = max(max((f for _, f, _ in distortion), default=0), 1)
    s = np.zeros(top + 1)
    c = np.zeros(top + 1)
    for amp, freq, phase in distortion:
        s[freq] += amp * math.cos(phase)
        c[freq] += amp * math.sin(phase)
    return s, c


@njit(cache=True, nogil=True)
def _stamp_kernel(i0, j0, cx, cy, res, radius, cos_rot, sin_rot, s_coef, c_coef,
                  knots, pp, u_max, out):  # pragma: no cover - compiled
    n_rows, n_cols = out.shape
    top = s_coef.shape[0] - 1
    last = knots.shape[0] - 1
    knot_density = last / (knots[last] - knots[0])
    inv_r = 1.0 / radius
    has_distortion = False
    for k in range(top + 1):
        if s_coef[k] != 0.0 or c_coef[k] != 0.0:
            has_distortion = True
    for j in range(n_rows):
        dy = (j0 + j) * res - cy
        for i in range(n_cols):
            dx = (i0 + i) * res - cx
            d = math.sqrt(dx * dx + dy * dy)
            u = d * inv_r
            if has_distortion:
                if d > 0.0:
                    inv_d = 1.0 / d
                    ex = dx * inv_d
                    ey = dy * inv_d
                else:
                    ex = 1.0
                    ey = 0.0
                # bearing relative to the crater rotation
                c1 = ex * cos_rot + ey * sin_rot
                s1 = ey * cos_rot - ex * sin_rot
                fac = 1.0 + c_coef[0]
                cp = 1.0
                sp = 0.0
                ck = c1
                sk = s1
                two_c = 2.0 * c1
                fac += s_coef[1] * sk + c_coef[1] * ck
                for k in range(2, top + 1):
                    cn = two_c * ck - cp
                    sn = two_c * sk - sp
                    cp = ck
                    sp = sk
                    ck = cn
                    sk = sn
                    fac += s_coef[k] * sk + c_coef[k] * ck
                u = u * fac
            if u < u_max:
                # guess the interval from the mean knot spacing, then walk to
                # the unique lo with knots[lo] <= u < knots[lo + 1]
                lo = min(int(u * knot_density), last - 1)
                while knots[lo] > u:
                    lo -= 1
                while knots[lo + 1] <= u:
                    lo += 1
                t = u - knots[lo]
                out[j, i] = radius * (((pp[0, lo] * t + pp[1, lo]) * t + pp[2, lo]) * t + pp[3, lo])
            else:
                out[j, i] = 0.0


def make_stamp(spec: CraterSpec, profile: CraterProfile, resolution: float,
               *, pixel_budget: int = DEFAULT_PIXEL_BUDGET) -> CraterStamp:
    """Synthesise the elevation offsets of one crater.

    For every cell at distance ``d`` and bearing ``theta`` from the crater
    centre: ``u = d / r * (1 + sum a sin(f (theta - rotation) + phase))`` and
    the offset is ``r * h(u)`` (zero once ``u >= u_max``).
    """
    if not resolution > 0:
        raise CraterError("resolution must be > 0")
    n = stamp_side(spec.radius, resolution)
    if n * n > pixel_budget:
        raise BudgetExceededError(
            f"stamp for radius {spec.radius:g} m at {resolution:g} m/px is {n}x{n} cells, "
            f"budget is {pixel_budget}")
    cx, cy = spec.center
    i0 = int(math.floor(cx / resolution + 0.5)) - n // 2
    j0 = int(math.floor(cy / resolution + 0.5)) - n // 2
    s_coef, c_coef = harmonic_coefficients(spec.distortion)
    offsets = np.empty((n, n))
    _stamp_kernel(i0, j0, cx, cy, float(resolution), spec.radius,
                  math.cos(spec.rotation), math.sin(spec.rotation), s_coef, c_coef,
                  profile.spline.x, profile.spline.c, profile.u_max, offsets)
    return CraterStamp(Dem(offsets, resolution), (i0, j0))


def _overlap(shape: tuple[int, int], stamp: CraterStamp):
    h, w = shape
    i0, j0 = stamp.origin
    n = stamp.side
    x0, x1 = max(i0, 0), min(i0 + n, w)
    y0, y1 = max(j0, 0), min(j0 + n, h)
    if x0 >= x1 or y0 >= y1:
        return None
    return (slice(y0, y1), slice(x0, x1)), (slice(y0 - j0, y1 - j0), slice(x0 - i0, x1 - i0))


def accumulate_stamp(target: np.ndarray, stamp: CraterStamp) -> None:
    """Add ``stamp`` into a float64 elevation array in place, clipping at edges."""
    ov = _overlap(target.shape, stamp)
    if ov is not None:
        dst, src = ov
        target[dst] += stamp.dem.elevations[src]


def clipped_offsets(shape: tuple[int, int], stamp: CraterStamp) -> np.ndarray:
    """The part of the stamp that lands inside a grid of ``shape``."""
    ov = _overlap(shape, stamp)
    return np.empty((0, 0)) if ov is None else stamp.dem.elevations[ov[1]]


def stamp_into(dem: Dem, stamp: CraterStamp) -> Dem:
    """Return ``dem`` with the stamp's offsets added where they overlap."""
    if not math.isclose(dem.resolution, stamp.dem.resolution, rel_tol=1e-12):
        raise CraterError(
            f"stamp resolution {stamp.dem.resolution:g} differs from terrain resolution {dem.resolution:g}")
    z = dem.elevations.astype(np.float64)
    accumulate_stamp(z, stamp)
    return Dem(z, dem.resolution, dem.nodata_mask)


def draw_distortion(gen: np.random.Generator, harmonics: int = 4, max_total: float = 0.08,
                    first_frequency: int = 2) -> tuple[tuple[float, int, float], ...]:
    """Random low-order radius modulation with total amplitude below ``max_total``."""
    if harmonics <= 0 or max_total <= 0:
        return ()
    share = gen.random(harmonics)
    total = max_total * gen.random()
    amps = total * share / share.sum() if share.sum() > 0 else np.zeros(harmonics)
    phases = gen.uniform(0.0, TWO_PI, harmonics)
    return tuple((float(a), first_frequency + k, float(p))
                 for k, (a, p) in enumerate(zip(amps, phases)))


def profile_library_csv_for_bundle() -> str:
    """Text of the bundled profile file (regenerates ``data/crater_profiles.csv``)."""
    return format_profile_csv(analytic_profile_samples())

