"""Planar convex-hull utilities.

Small exact-arithmetic-free helpers used by the singularity and estimate
modules: monotone-chain hulls, areas, diameters, rotating-caliper widths and
chord lengths. All inputs are ``(n, 2)`` float arrays.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "convex_hull",
    "polygon_area",
    "hull_area",
    "diameter",
    "min_width",
    "chord_through",
    "longest_chord",
    "signed_interior_margin",
]


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Convex hull by Andrew's monotone chain.

    Parameters
    ----------
    points : (n, 2) array

    Returns
    -------
    (k, 2) array
        Hull vertices in counterclockwise order, first vertex not repeated.
        Degenerate inputs return fewer than 3 vertices (collinear inputs
        return the two extreme points, a single repeated point returns one).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be an (n, 2) array")
    # unique lexicographic sort
    pts = np.unique(pts, axis=0)
    n = len(pts)
    if n <= 2:
        return pts
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0.0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:  # all collinear: keep the two extremes
        return np.array([pts[0], pts[-1]])
    return hull


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def polygon_area(vertices: np.ndarray) -> float:
    """Shoelace area of a simple polygon (positive when counterclockwise)."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def hull_area(points: np.ndarray) -> float:
    """Area of the convex hull of a point set (0 for degenerate sets)."""
    return abs(polygon_area(convex_hull(points)))


def diameter(points: np.ndarray) -> float:
    """Largest pairwise distance in a point set (0 for < 2 points)."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        return 0.0
    h = convex_hull(pts)
    d = h[:, None, :] - h[None, :, :]
    return float(np.sqrt((d * d).sum(axis=2)).max())


def min_width(points: np.ndarray) -> tuple[float, np.ndarray]:
    """Minimum width of the convex hull and the achieving unit normal.

    Rotating calipers over hull edges: for each edge direction the width is
    the largest distance of a hull vertex from the edge line; the minimum
    over edges is the hull width.

    Returns
    -------
    (width, normal) : (float, (2,) array)
        ``normal`` is the unit vector along which the extent equals
        ``width``. Degenerate hulls (< 3 vertices) have width 0 with the
        normal orthogonal to the segment (or ``[1, 0]`` for a point).
    """
    hull = convex_hull(points)
    if len(hull) == 1:
        return 0.0, np.array([1.0, 0.0])
    if len(hull) == 2:
        e = hull[1] - hull[0]
        n = np.array([-e[1], e[0]])
        n /= np.linalg.norm(n)
        return 0.0, n
    best = np.inf
    best_n = np.array([1.0, 0.0])
    for i in range(len(hull)):
        a = hull[i]
        b = hull[(i + 1) % len(hull)]
        e = b - a
        ln = np.linalg.norm(e)
        if ln == 0.0:
            continue
        n = np.array([-e[1], e[0]]) / ln
        w = float(np.max((hull - a) @ n))  # ccw hull: all vertices on +n side
        if w < best:
            best = w
            best_n = n
    return best, best_n


def chord_through(hull: np.ndarray, point: np.ndarray, direction: np.ndarray) -> float:
    """Length of ``hull ∩ {point + s·direction}`` by half-plane clipping.

    ``hull`` must be counterclockwise with at least 3 vertices; returns 0 when
    the line misses the hull.
    """
    p = np.asarray(point, dtype=float)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    lo, hi = -np.inf, np.inf
    m = len(hull)
    for i in range(m):
        a = hull[i]
        b = hull[(i + 1) % m]
        e = b - a
        # interior satisfies cross(e, x - a) >= 0
        denom = e[0] * u[1] - e[1] * u[0]
        num = e[0] * (p[1] - a[1]) - e[1] * (p[0] - a[0])
        if abs(denom) < 1e-300:
            if num < 0.0:
                return 0.0
            continue
        s = -num / denom
        if denom > 0.0:
            lo = max(lo, s)
        else:
            hi = min(hi, s)
    return max(0.0, hi - lo)


def longest_chord(points: np.ndarray, direction: np.ndarray) -> float:
    """Longest chord of the convex hull of ``points`` parallel to ``direction``.

    For a convex body the chord-length profile along parallel lines is
    concave, so its maximum is attained on a line through a hull vertex.
    """
    hull = convex_hull(points)
    if len(hull) < 3:
        if len(hull) == 2:
            e = hull[1] - hull[0]
            u = np.asarray(direction, dtype=float)
            u = u / np.linalg.norm(u)
            proj = abs(float(e @ u))
            return proj if np.isclose(proj, np.linalg.norm(e)) else 0.0
        return 0.0
    return max(chord_through(hull, v, direction) for v in hull)


def signed_interior_margin(hull: np.ndarray, x: np.ndarray) -> float:
    """Signed distance from ``x`` to the boundary of a ccw convex polygon.

    Positive inside, negative outside; degenerate hulls give ``-inf`` side
    behaviour (no interior), reported as 0 distance at best.
    """
    if len(hull) < 3:
        return -np.inf
    x = np.asarray(x, dtype=float)
    m = len(hull)
    margin = np.inf
    for i in range(m):
        a = hull[i]
        b = hull[(i + 1) % m]
        e = b - a
        ln = np.linalg.norm(e)
        if ln == 0.0:
            continue
        margin = min(margin, _cross(a, b, x) / ln)
    return float(margin)
