"""Independent reference computations shared by the test modules."""

import math

import numpy as np
from scipy import integrate
from scipy.spatial.distance import pdist, squareform
from scipy.stats import norm

from lunarforge.points import PointSet


def min_gap(pts: PointSet) -> float:
    """Smallest dist - (m_i + m_j) over all pairs (brute force)."""
    if len(pts) < 2:
        return math.inf
    d = squareform(pdist(pts.points))
    m = pts.marks if pts.marks is not None else np.zeros(len(pts))
    gap = d - (m[:, None] + m[None, :])
    np.fill_diagonal(gap, np.inf)
    return float(gap.min())


def thomas_moments(w, h, lam_p, mu, sigma, margin):
    """Exact mean and variance of the child count, integrating the
    per-parent hit probability over the parent window."""

    def axis(length, power):
        f = lambda x: (norm.cdf((length - x) / sigma) - norm.cdf(-x / sigma)) ** power  # noqa: E731
        return integrate.quad(f, -margin, length + margin, points=[0, length], limit=200)[0]

    p1 = axis(w, 1) * axis(h, 1)
    p2 = axis(w, 2) * axis(h, 2)
    return lam_p * mu * p1, lam_p * (mu * p1 + mu**2 * p2)


def matern_moments(w, h, lam_p, mu, radius, step=0.25):
    """Mean/variance via the disk-rectangle overlap fraction on a grid of
    parent positions (stencil quadrature over the disk)."""
    k = np.linspace(-radius, radius, 81)
    sx, sy = np.meshgrid(k, k)
    keep = sx**2 + sy**2 <= radius**2
    sx, sy = sx[keep], sy[keep]
    xs = np.arange(-radius, w + radius + step / 2, step)
    ys = np.arange(-radius, h + radius + step / 2, step)
    px = np.array([[np.mean((x + sx >= 0) & (x + sx <= w) & (y + sy >= 0) & (y + sy <= h))
                    for x in xs] for y in ys])
    p1 = integrate.trapezoid(integrate.trapezoid(px, xs, axis=1), ys)
    p2 = integrate.trapezoid(integrate.trapezoid(px**2, xs, axis=1), ys)
    return lam_p * mu * p1, lam_p * (mu * p1 + mu**2 * p2)
