"""Quantitative inequality checks on solved transport potentials.

The dual potential ``u(x) = max_j (λ_j − c(x, ȳ_j))`` of a semi-discrete
problem is an envelope of c-affine functions ``−c(·, x̄) + λ``.  This module
measures the structural inequalities that govern such envelopes:

* :func:`loeper_check` — the interpolation maximum principle along cost
  segments (the sign condition that the cost-curvature sweep certifies
  pointwise, tested here in its integrated, chart-level form);
* :func:`c_monotonicity_check` — cyclical monotonicity of transport pairs
  under couple swaps;
* :func:`build_section` / :class:`Section` — raster sublevel sets
  ``{u ≤ m₀ + height}`` under a c-affine cap ``m₀``, with the width planes,
  longest-chord and base-distance data used by the shape-ratio diagnostic;
* :func:`contact_set` — the touching set of a c-affine support through a
  chosen co-vector;
* :func:`build_c_cone` / :class:`CConeFn` — the supremum of admissible
  c-affine functions pinned under the cap on a section's boundary and under
  ``u`` at the base point, together with its co-vector polytope at the base;
* :func:`aleksandrov_check` — the section shape ratio
  ``gap² · ℓ / (min(d₊, d₋) · volume²)`` per section.

Everything operates on the raster of the solution's source region; all
reported areas and distances are raster quantities with pixel-order error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .costs import CostFunction, c_exp
from .errors import (
    BoundaryTouching,
    DegenerateSection,
    EmptySection,
    InvalidPair,
    OtlabError,
)
from .geometry import CConvexityReport, c_convex_wrt
from .hull import convex_hull, longest_chord, min_width, signed_interior_margin
from .singular import subdifferential_at
from .transport import DualSolution, Tessellation

__all__ = [
    "Section",
    "ContactSet",
    "CConeFn",
    "loeper_check",
    "loeper_preset_samples",
    "c_monotonicity_check",
    "build_section",
    "section_from_mask",
    "contact_set",
    "build_c_cone",
    "aleksandrov_check",
]


# ---------------------------------------------------------------------------
# maximum principle along cost segments
# ---------------------------------------------------------------------------


def loeper_check(
    cost: CostFunction,
    x0: np.ndarray,
    pbar0: np.ndarray,
    pbar1: np.ndarray,
    x: np.ndarray,
    t_grid: int = 64,
) -> float:
    """Maximum excess of ``f(t) = −c(x, x̄(t)) + c(x₀, x̄(t))`` over its endpoints.

    ``x̄(t)`` is the cost segment seen from ``x₀``: momenta are interpolated
    linearly between ``pbar0`` and ``pbar1`` and mapped through the cost
    exponential.  For a cost with nonnegative curvature term the interior of
    the segment never beats the endpoints, so the returned violation is ≤ 0
    up to rounding; a positive return of magnitude above tolerance is a
    counterexample to the maximum principle.

    All point arguments broadcast: pass ``(n, 2)`` arrays to test ``n``
    tuples in one call (the result is the max over all of them).  Chart
    failures of the cost exponential propagate (`OutOfChart`); callers must
    supply tuples whose segment stays in the chart — see
    :func:`loeper_preset_samples` for per-cost admissible samplers.
    """
    if t_grid < 2:
        raise ValueError("t_grid must be at least 2")
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    p0 = np.atleast_2d(np.asarray(pbar0, dtype=float))
    p1 = np.atleast_2d(np.asarray(pbar1, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = max(len(x0), len(p0), len(p1), len(x))
    x0, p0, p1, x = (np.broadcast_to(a, (n, 2)) for a in (x0, p0, p1, x))

    t = np.linspace(0.0, 1.0, t_grid)
    worst = -np.inf
    step = max(1, 262144 // t_grid)
    for s in range(0, n, step):
        e = min(n, s + step)
        p = (1.0 - t)[None, :, None] * p0[s:e, None, :] + t[None, :, None] * p1[
            s:e, None, :
        ]
        xb = c_exp(cost, x0[s:e, None, :], p)
        f = -cost.eval(x[s:e, None, :], xb) + cost.eval(x0[s:e, None, :], xb)
        viol = f.max(axis=1) - np.maximum(f[:, 0], f[:, -1])
        worst = max(worst, float(viol.max()))
    return worst


#: Per-cost admissible sampling boxes for bulk maximum-principle sweeps:
#: (source box, target box) as (lo, hi) per axis.  The log cost uses disjoint
#: squares so every (point, target) pair stays separated; the bounded-slope
#: cost accepts any boxes because its momenta are always sub-unit.
_LOEPER_BOXES = {
    "quadratic": ((-1.0, 1.0), (-1.0, 1.0)),
    "bilinear": ((-1.0, 1.0), (-1.0, 1.0)),
    "log": ((-1.2, -0.2), (0.2, 1.2)),
    "sqrt_plus": ((-1.0, 1.0), (-0.8, 0.8)),
}


def loeper_preset_samples(
    cost: CostFunction, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Draw ``n`` admissible ``(x₀, p̄₀, p̄₁, x)`` tuples for a built-in cost.

    ``x₀`` and ``x`` are uniform in the cost's source box; the endpoint
    co-vectors are momenta of uniform targets in the cost's target box, so
    both segment endpoints are genuine chart points and (for the built-in
    costs) the whole momentum segment stays invertible.
    """
    try:
        (slo, shi), (tlo, thi) = _LOEPER_BOXES[cost.cost_id]
    except KeyError:
        raise ValueError(
            f"no admissible sampling preset for cost {cost.cost_id!r}"
        ) from None
    x0 = rng.uniform(slo, shi, size=(n, 2))
    x = rng.uniform(slo, shi, size=(n, 2))
    xb0 = rng.uniform(tlo, thi, size=(n, 2))
    xb1 = rng.uniform(tlo, thi, size=(n, 2))
    p0 = -cost.grad_x(x0, xb0)
    p1 = -cost.grad_x(x0, xb1)
    return x0, p0, p1, x


# ---------------------------------------------------------------------------
# cyclical monotonicity
# ---------------------------------------------------------------------------


def c_monotonicity_check(cost: CostFunction, pairs) -> float:
    """Largest couple-swap gain over a list of transport pairs.

    ``pairs`` is ``(x, x̄)`` as two ``(n, 2)`` arrays (or a sequence of point
    pairs).  For every ordered couple ``(i, j)`` the swap gain is
    ``c(x_i, x̄_i) + c(x_j, x̄_j) − c(x_i, x̄_j) − c(x_j, x̄_i)``; pairs drawn
    from an optimal assignment make every gain ≤ 0, so the returned maximum
    is ≤ 0 up to rounding (the ``i = j`` couples contribute exactly 0).
    A strictly positive value certifies the pairing is not optimal.
    """
    if isinstance(pairs, tuple) and len(pairs) == 2:
        xs, ys = pairs
    else:
        arr = np.asarray(pairs, dtype=float)
        xs, ys = arr[:, 0], arr[:, 1]
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if xs.shape != ys.shape:
        raise ValueError("pairs must supply matching x and x̄ arrays")
    own = cost.eval(xs, ys)
    n = len(xs)
    worst = -np.inf
    step = max(1, 4_000_000 // max(n, 1))
    for s in range(0, n, step):
        e = min(n, s + step)
        c_ij = cost.eval(xs[s:e, None, :], ys[None, :, :])
        c_ji = cost.eval(xs[None, :, :], ys[s:e, None, :])
        gain = own[s:e, None] + own[None, :] - c_ij - c_ji
        worst = max(worst, float(gain.max()))
    return worst


# ---------------------------------------------------------------------------
# sections
# ---------------------------------------------------------------------------


@dataclass
class Section:
    """A raster sublevel set of the potential under a c-affine cap.

    The cap is ``m₀(x) = −c(x, focus) + offset`` and the pixels are the
    region cells with ``u ≤ m₀ + height``.  ``gap = m₀(base) − u(base)`` is
    how far the cap sits above the potential at the base point.  All shape
    data lives in the co-vector chart ``q = −D_x̄ c(·, focus)``:
    ``coord_image`` are the mapped pixel centers, the planes are the
    supporting pair of the image hull along its minimum-width normal,
    ``ell`` is the longest chord of the hull parallel to that normal, and
    ``d_plus``/``d_minus`` are the distances from the mapped base point
    ``p0`` to the two planes.
    """

    focus: np.ndarray
    base: np.ndarray
    offset: float
    height: float
    gap: float
    mask: np.ndarray
    pixel_index: np.ndarray
    points: np.ndarray
    volume: float
    coord_image: np.ndarray
    hull: np.ndarray
    plane_normal: np.ndarray
    plane_lo: float
    plane_hi: float
    width: float
    ell: float
    p0: np.ndarray
    d_plus: float
    d_minus: float
    convexity: CConvexityReport

    @property
    def n_pixels(self) -> int:
        return int(len(self.pixel_index))

    @property
    def is_c_convex(self) -> bool:
        return bool(self.convexity.is_convex)

    def __repr__(self) -> str:
        return (
            f"Section(n_pixels={self.n_pixels}, height={self.height:.3g}, "
            f"gap={self.gap:.3g}, volume={self.volume:.3g}, ell={self.ell:.3g})"
        )


def _potential_image(solution: DualSolution, tess: Optional[Tessellation]) -> np.ndarray:
    """Flat raster image of the potential, reusing a tessellation if given."""
    region = solution.region
    if tess is not None:
        if tess.solution is not solution:
            raise ValueError("tessellation belongs to a different solution")
        return tess.u.ravel()
    return solution.potential_at(region.raster.centers())


def section_from_mask(
    solution: DualSolution,
    xbar0: np.ndarray,
    x0: np.ndarray,
    mask: np.ndarray,
    height: float,
    offset: float,
) -> Section:
    """Populate a :class:`Section` from an explicit pixel mask.

    :func:`build_section` computes the sublevel mask and delegates here;
    calling this directly supports constructions whose pixel set is chosen
    by hand (the cone checks use small synthetic sections).  The mask is
    intersected with the region; it must be nonempty afterwards.
    """
    cost = solution.cost
    region = solution.region
    raster = region.raster
    xbar0 = np.asarray(xbar0, dtype=float).reshape(2)
    x0 = np.asarray(x0, dtype=float).reshape(2)
    if not bool(cost.valid_pair(x0[None, :], xbar0[None, :]).all()):
        raise InvalidPair("section base and focus are not a valid cost pair")

    mask = np.asarray(mask, dtype=bool) & region.mask
    flat = np.nonzero(mask.ravel())[0]
    if len(flat) == 0:
        raise EmptySection("section contains no region pixels")
    points = raster.centers()[flat]
    ok = cost.valid_pair(points, xbar0[None, :])
    if not ok.all():
        # drop pixels the focus cannot pair with (e.g. the log cost's
        # excluded separation disk); the mask stays consistent with them
        flat = flat[ok]
        points = points[ok]
        mask = np.zeros_like(mask).ravel()
        mask[flat] = True
        mask = mask.reshape(region.mask.shape)
        if len(flat) == 0:
            raise EmptySection("section contains no valid pixels for the focus")

    u0 = float(solution.potential_at(x0[None, :])[0])
    gap = float(offset - cost.eval(x0[None, :], xbar0[None, :])[0] - u0)

    coord_image = -cost.grad_xbar(points, xbar0[None, :])
    p0 = -cost.grad_xbar(x0[None, :], xbar0[None, :])[0]
    hull = convex_hull(coord_image)
    width, normal = min_width(coord_image)
    proj = hull @ normal
    lo, hi = float(proj.min()), float(proj.max())
    ell = longest_chord(coord_image, normal)
    base_proj = float(p0 @ normal)
    h2 = raster.h * raster.h
    convexity = c_convex_wrt(
        (points, np.full(len(points), h2)),
        cost,
        xbar0,
        focus_side="target",
        tol=2e-2,
    )
    return Section(
        focus=xbar0,
        base=x0,
        offset=float(offset),
        height=float(height),
        gap=gap,
        mask=mask,
        pixel_index=flat,
        points=points,
        volume=float(len(flat)) * h2,
        coord_image=coord_image,
        hull=hull,
        plane_normal=normal,
        plane_lo=lo,
        plane_hi=hi,
        width=float(width),
        ell=float(ell),
        p0=p0,
        d_plus=hi - base_proj,
        d_minus=base_proj - lo,
        convexity=convexity,
    )


def build_section(
    solution: DualSolution,
    xbar0: np.ndarray,
    x0: np.ndarray,
    height: float,
    lift: float = 0.0,
    tess: Optional[Tessellation] = None,
) -> Section:
    """Build the section ``{u ≤ m₀ + height}`` of the potential.

    The cap offset is anchored at the base point and then lifted:
    ``offset = u(x₀) + c(x₀, x̄₀) + lift``, so ``gap = lift`` exactly.  With
    ``lift = 0`` the cap touches the potential at ``x₀`` and the family
    shrinks onto the touching set as ``height → 0``; a positive lift raises
    the cap a fixed amount, which is what gives the shape-ratio diagnostic a
    nonzero numerator.

    Parameters
    ----------
    height : float
        Sublevel threshold above the cap, ≥ 0.
    lift : float
        Fixed raise of the cap above the touching position, ≥ 0.
    tess : Tessellation, optional
        Reuses a precomputed raster potential image (several sections of one
        solution then share a single evaluation pass).
    """
    if height < 0.0:
        raise ValueError("section height must be ≥ 0")
    if lift < 0.0:
        raise ValueError("section lift must be ≥ 0")
    cost = solution.cost
    region = solution.region
    xbar0 = np.asarray(xbar0, dtype=float).reshape(2)
    x0 = np.asarray(x0, dtype=float).reshape(2)
    if not bool(cost.valid_pair(x0[None, :], xbar0[None, :]).all()):
        raise InvalidPair("section base and focus are not a valid cost pair")

    centers = region.raster.centers()
    inside = region.mask.ravel()
    u_flat = _potential_image(solution, tess)
    u0 = float(solution.potential_at(x0[None, :])[0])
    offset = u0 + float(cost.eval(x0[None, :], xbar0[None, :])[0]) + lift

    sel = np.zeros(len(centers), dtype=bool)
    idx = np.nonzero(inside)[0]
    pts_in = centers[idx]
    ok = cost.valid_pair(pts_in, xbar0[None, :])
    m0 = offset - cost.eval(pts_in[ok], xbar0[None, :])
    # exact-tie pixels (u == m₀ on a whole cell) must land inside the
    # section, so the comparison carries a rounding allowance
    tol = 1e-9 * (1.0 + abs(offset))
    sub = u_flat[idx[ok]] <= m0 + height + tol
    sel[idx[ok][sub]] = True
    if not sel.any():
        raise EmptySection("no region pixel satisfies the sublevel bound")
    return section_from_mask(
        solution, xbar0, x0, sel.reshape(region.mask.shape), height, offset
    )


# ---------------------------------------------------------------------------
# contact sets
# ---------------------------------------------------------------------------


@dataclass
class ContactSet:
    """Pixels where a c-affine support through a chosen co-vector touches u.

    The support is ``m(x) = −c(x, x̄₀) + c(x₀, x̄₀) + u(x₀)`` with
    ``x̄₀ = c_exp(x₀, p̄₀)``; the set holds the pixels with
    ``u − m ≤ tol``.  When the co-vector is interior to the subdifferential
    at an isolated kink the set collapses to the base pixel; for a co-vector
    on a crease it follows the crease; for an extremal vertex it fills that
    target's whole cell.
    """

    base: np.ndarray
    pbar0: np.ndarray
    focus: np.ndarray
    tol: float
    mask: np.ndarray
    pixel_index: np.ndarray
    points: np.ndarray

    @property
    def n_pixels(self) -> int:
        return int(len(self.pixel_index))


def contact_set(
    solution: DualSolution,
    x0: np.ndarray,
    pbar0: np.ndarray,
    tol: Optional[float] = None,
    tess: Optional[Tessellation] = None,
) -> ContactSet:
    """Raster contact set of the support with momentum ``p̄₀`` at ``x₀``.

    Precondition (not enforced): ``p̄₀`` lies in the hull of the
    subdifferential at ``x₀``, so the support actually stays below the
    potential.  The default tolerance is ``h · max(1, diam ∂u(x₀))`` — the
    set ``u − m`` grows linearly away from the contact locus at a rate
    bounded by the momentum spread, so this admits a transverse band about
    one pixel wide.
    """
    cost = solution.cost
    region = solution.region
    x0 = np.asarray(x0, dtype=float).reshape(2)
    pbar0 = np.asarray(pbar0, dtype=float).reshape(2)
    xbar0 = c_exp(cost, x0[None, :], pbar0[None, :])[0]
    if tol is None:
        sub = subdifferential_at(solution, x0)
        tol = region.raster.h * max(1.0, sub.diameter)

    centers = region.raster.centers()
    inside = region.mask.ravel()
    idx = np.nonzero(inside)[0]
    pts_in = centers[idx]
    ok = cost.valid_pair(pts_in, xbar0[None, :])
    idx = idx[ok]
    pts_in = pts_in[ok]
    u_flat = _potential_image(solution, tess)
    u0 = float(solution.potential_at(x0[None, :])[0])
    m = u0 + float(cost.eval(x0[None, :], xbar0[None, :])[0]) - cost.eval(
        pts_in, xbar0[None, :]
    )
    keep = (u_flat[idx] - m) <= tol
    flat = idx[keep]
    mask = np.zeros(len(centers), dtype=bool)
    mask[flat] = True
    return ContactSet(
        base=x0,
        pbar0=pbar0,
        focus=xbar0,
        tol=float(tol),
        mask=mask.reshape(region.mask.shape),
        pixel_index=flat,
        points=centers[flat],
    )


# ---------------------------------------------------------------------------
# cones of admissible c-affine supports
# ---------------------------------------------------------------------------


@dataclass
class CConeFn:
    """Supremum of c-affine functions pinned under a section's cap.

    Admissible functions are ``m_q(x) = −c(x, x̄_q) + λ(q)`` parametrized by
    source-chart co-vectors ``q`` at the vertex (``x̄_q = c_exp(x₀, q)``).
    Each λ(q) is the largest offset keeping ``m_q ≤ m₀`` on the section's
    boundary pixels (with a one-pixel slack) and ``m_q(x₀) ≤ u(x₀)``.  The
    cone value at a point is the max of the family; ``value(x₀) = u(x₀)``
    whenever some co-vector's vertex constraint binds.

    ``active`` marks the grid co-vectors whose vertex constraint binds
    within one co-grid cell of its own local slope: they form the cone's
    co-vector polytope at the vertex, an outer approximation accurate to
    one grid cell.  ``core`` is that polytope eroded by one grid cell, so
    core co-vectors lie inside the true polytope.  Reported diagnostics:

    * ``margin`` — interior margin of the source-chart focus momentum
      inside the active hull; the support-pinning inequality predicts
      ``margin ≳ gap / C_sens`` (``r0_pred``) for a compact section built
      with a positive lift.
    * ``inclusion_gaps`` — per core co-vector, the contact deficit
      ``min over section pixels (u + c(·, x̄_q)) − min over all region
      pixels (u + c(·, x̄_q))``: near 0 means the support plane of the
      potential with that slope touches it inside the section, the
      discrete form of the cone-support inclusion.  ``inclusion_ok``
      compares the worst deficit against ``C_omega · co_cell +
      C_sens · h``: one co-grid cell of slack at the region-wide value
      lever ``C_omega``, plus one raster cell at the boundary lever.
    """

    section: Section
    vertex: np.ndarray
    u_vertex: float
    gap: float
    co_cell: float
    q_grid: np.ndarray
    xbar_grid: np.ndarray
    lam: np.ndarray
    anchor: np.ndarray
    slack: np.ndarray
    active: np.ndarray
    core: np.ndarray
    active_hull: np.ndarray
    p0: np.ndarray
    C_sens: float
    C_omega: float
    margin: float
    r0_pred: float
    inclusion_gaps: np.ndarray
    inclusion_allowance: float
    _cost: CostFunction

    @property
    def inclusion_max_abs(self) -> float:
        if len(self.inclusion_gaps) == 0:
            return np.inf
        return float(np.abs(self.inclusion_gaps).max())

    @property
    def inclusion_ok(self) -> bool:
        return self.inclusion_max_abs <= self.inclusion_allowance

    def value(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the cone at arbitrary points (max over the family)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(pts), -np.inf)
        step = max(1, 4_000_000 // max(len(self.q_grid), 1))
        for s in range(0, len(pts), step):
            e = min(len(pts), s + step)
            vals = self.lam[None, :] - self._cost.eval(
                pts[s:e, None, :], self.xbar_grid[None, :, :]
            )
            out[s:e] = vals.max(axis=1)
        return out

    __call__ = value


def _op_norm_2x2(m: np.ndarray) -> float:
    return float(np.linalg.svd(np.asarray(m, dtype=float).reshape(2, 2), compute_uv=False)[0])


def _c_exp_filtered(
    cost: CostFunction, x0: np.ndarray, q: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Cost exponential over many momenta, flagging chart failures.

    Closed-form exponentials raise on momenta outside their chart instead of
    returning NaN, and a co-vector grid routinely contains such points.  The
    batch is bisected around failures so valid points keep vectorized speed.
    """
    out = np.full_like(q, np.nan, dtype=float)
    ok = np.zeros(len(q), dtype=bool)
    stack = [(0, len(q))]
    while stack:
        s, e = stack.pop()
        if s >= e:
            continue
        try:
            out[s:e] = c_exp(cost, x0[None, :], q[s:e], strict=False)
            ok[s:e] = True
        except OtlabError:
            if e - s == 1:
                continue
            m = (s + e) // 2
            stack.append((s, m))
            stack.append((m, e))
    return out, ok


def _q_sensitivity(
    cost: CostFunction, x0: np.ndarray, q: np.ndarray, pts: np.ndarray, eps: float
) -> float:
    """Worst finite-difference sensitivity, over ``pts``, of the support
    competition ``c(x0, x̄_q) − c(x, x̄_q)`` to the vertex co-vector ``q``."""

    def b_of(qv: np.ndarray):
        xbv, ok = _c_exp_filtered(cost, x0, qv[None, :])
        if not ok[0]:
            return None
        return -cost.eval(pts, xbv) + cost.eval(x0[None, :], xbv)[0]

    b0 = b_of(q)
    grads = np.zeros(2)
    for axis in range(2):
        sides = []
        for sgn in (-1.0, 1.0):
            qe = q.copy()
            qe[axis] += sgn * eps
            sides.append(b_of(qe))
        if sides[0] is not None and sides[1] is not None:
            grads[axis] = float(np.abs(sides[1] - sides[0]).max() / (2.0 * eps))
        elif b0 is not None:
            one = sides[0] if sides[0] is not None else sides[1]
            if one is not None:
                grads[axis] = float(np.abs(one - b0).max() / eps)
    return float(np.linalg.norm(grads))


def build_c_cone(
    solution: DualSolution,
    section: Section,
    co_cell: Optional[float] = None,
    max_grid: int = 96,
    tess: Optional[Tessellation] = None,
) -> CConeFn:
    """Build the cone of admissible c-affine supports over a section.

    The section should be the ``height = 0`` sublevel (the cap itself); its
    pixel set must stay strictly inside the source region — a section that
    touches the region boundary raises :class:`BoundaryTouching`, because
    the pinning argument needs the boundary values of the cap, not of the
    region.  The co-vector grid is centered on the momenta the potential
    attains over the section, padded, with spacing ``co_cell`` (default: one
    raster cell transported by the mixed cost Hessian at the base pair,
    widened if the span would exceed ``max_grid`` cells per axis).
    """
    cost = solution.cost
    region = solution.region
    raster = region.raster
    h = raster.h
    x0 = np.asarray(section.base, dtype=float).reshape(2)

    grown = ndimage.binary_dilation(section.mask, structure=np.ones((3, 3), bool))
    if bool((grown & ~region.mask).any()):
        raise BoundaryTouching("section touches the source region boundary")

    iy, ix = raster.point_to_cell(x0[None, :])
    if not bool(section.mask[int(iy[0]), int(ix[0])]):
        raise ValueError("cone vertex must lie inside the section")

    interior = ndimage.binary_erosion(
        section.mask, structure=np.ones((3, 3), bool), border_value=0
    )
    bmask = section.mask & ~interior
    bidx = np.nonzero(bmask.ravel())[0]
    z = raster.centers()[bidx]
    if len(z) == 0:
        raise DegenerateSection("section has no boundary ring")

    u_flat = _potential_image(solution, tess)
    u0 = float(solution.potential_at(x0[None, :])[0])

    # potential momenta over the section set a first co-vector span
    sec_pts = section.points
    _, sheet_idx = solution.values_top(sec_pts, k=1)
    sheets = solution.target.points[sheet_idx[:, 0]]
    p_sheet = -cost.grad_x(sec_pts, sheets)
    p0_src = -cost.grad_x(x0[None, :], section.focus[None, :])[0]
    span_pts = np.vstack([p_sheet, p0_src[None, :]])

    if co_cell is None:
        E = cost.cross_hessian(x0[None, :], section.focus[None, :])[0]
        co_cell = h * max(_op_norm_2x2(E), 1e-12)

    # the active polytope reaches out to roughly gap / sensitivity from the
    # focus momentum; probe the sensitivity there so the grid covers it
    c0_probe = _q_sensitivity(cost, x0, p0_src, z, max(co_cell, 1e-9))
    reach = 1.6 * section.gap / max(c0_probe, 1e-12) if section.gap > 0 else 0.0
    reach = min(reach, 64.0 * max_grid * co_cell)  # keep degenerate probes finite

    half = np.maximum(
        np.abs(span_pts - p0_src[None, :]).max(axis=0),
        reach,
    )
    half += 0.05 * max(float(half.max()), 1e-12) + 3.0 * co_cell
    lo = p0_src - half
    hi = p0_src + half
    span = float((hi - lo).max())
    if span / co_cell > max_grid:
        co_cell = span / max_grid
    q1 = np.arange(lo[0], hi[0] + co_cell, co_cell)
    q2 = np.arange(lo[1], hi[1] + co_cell, co_cell)
    qq = np.stack(np.meshgrid(q1, q2, indexing="ij"), axis=-1).reshape(-1, 2)

    xb, valid = _c_exp_filtered(cost, x0, qq)
    xb = np.where(valid[:, None], xb, x0[None, :])  # placeholder for invalid rows
    valid &= cost.valid_pair(x0[None, :], xb)
    # every boundary pixel must form a valid pair with the support's target
    step = max(1, 2_000_000 // max(len(z), 1))
    for s in range(0, len(qq), step):
        e = min(len(qq), s + step)
        valid[s:e] &= cost.valid_pair(z[:, None, :], xb[None, s:e, :]).all(axis=0)
    qq, xb = qq[valid], xb[valid]
    if len(qq) < 4:
        raise DegenerateSection("co-vector grid left the cost chart")

    m0_b = section.offset - cost.eval(z, section.focus[None, :])
    g0_b = cost.grad_x(z, section.focus[None, :])

    anchor = u0 + cost.eval(x0[None, :], xb)
    lam = np.empty(len(qq))
    slack = np.empty(len(qq))
    phi_ns = np.empty(len(qq))
    n1, n2 = len(q1), len(q2)
    M = np.full((len(z), n1 * n2), np.nan)
    vcol = np.nonzero(valid)[0]
    for s in range(0, len(qq), step):
        e = min(len(qq), s + step)
        cz = cost.eval(z[:, None, :], xb[None, s:e, :])
        gz = cost.grad_x(z[:, None, :], xb[None, s:e, :])
        # one raster pixel of value slack: the ring pixels sample the true
        # section boundary only to within a pixel
        slack[s:e] = h * np.linalg.norm(gz - g0_b[:, None, :], axis=-1).max(axis=0)
        min_b = (m0_b[:, None] + cz).min(axis=0)
        lam[s:e] = np.minimum(anchor[s:e], min_b + slack[s:e])
        # active marking uses the unslacked constraint, otherwise the
        # polytope inflates by slack / slope, not by one grid cell
        phi_ns[s:e] = anchor[s:e] - np.minimum(anchor[s:e], min_b)
        M[:, vcol[s:e]] = -cz + anchor[None, s:e] - u0
    # direction-worst sensitivity: the euclidean norm of the co-vector
    # gradient of the anchored family on the boundary ring (the axis
    # partials alone would understate corner-dominated sections)
    Mg = M.reshape(len(z), n1, n2)
    if n1 > 1 and n2 > 1:
        g1, g2 = np.gradient(Mg, co_cell, co_cell, axis=(1, 2))
        gn = np.nan_to_num(np.sqrt(g1 * g1 + g2 * g2), nan=0.0)
        C_sens = float(gn.max(initial=0.0))
    else:
        C_sens = 0.0

    # a grid co-vector is active when the vertex constraint binds within one
    # grid step of the slack function's own local slope: the zero set then
    # passes through that cell, so the polytope is captured to one cell
    phi = np.full(n1 * n2, np.nan)
    phi[vcol] = phi_ns
    phi_g = phi.reshape(n1, n2)
    # one-sided slopes: central differences vanish at the bottom of the
    # constraint's kink, which would discard a singleton polytope entirely
    s1 = np.zeros_like(phi_g)
    s2 = np.zeros_like(phi_g)
    if n1 > 1:
        d1 = np.abs(np.diff(phi_g, axis=0)) / co_cell
        s1[:-1] = d1
        s1[1:] = np.maximum(s1[1:], d1)
    if n2 > 1:
        d2 = np.abs(np.diff(phi_g, axis=1)) / co_cell
        s2[:, :-1] = d2
        s2[:, 1:] = np.maximum(s2[:, 1:], d2)
    slope = np.nan_to_num(np.sqrt(s1 * s1 + s2 * s2), nan=0.0)
    floor = 1e-12 * (1.0 + abs(u0)) + 1e-9 * co_cell
    phi_fin = np.nan_to_num(phi_g, nan=np.inf)
    act_g = phi_fin <= co_cell * slope + floor
    if not act_g.any():
        act_g[np.unravel_index(int(phi_fin.argmin()), act_g.shape)] = True
    core_g = ndimage.binary_erosion(act_g, structure=np.ones((3, 3), bool), border_value=0)
    if not core_g.any():
        best = np.where(act_g, phi_fin, np.inf)
        core_g = np.zeros_like(act_g)
        core_g[np.unravel_index(int(best.argmin()), act_g.shape)] = True
    active = act_g.ravel()[vcol]
    core = core_g.ravel()[vcol]
    q_act = qq[active]
    act_hull = convex_hull(q_act) if len(q_act) else np.zeros((0, 2))
    margin = signed_interior_margin(act_hull, p0_src) if len(act_hull) >= 3 else -np.inf
    gap = section.gap
    r0_pred = gap / C_sens if C_sens > 0 else 0.0

    # contact deficit of the core co-vectors: the support plane with slope q
    # must touch the potential inside the section, i.e. the minimum of
    # u + c(·, x̄_q) over the section must match its region-wide minimum
    ins_pts = raster.centers()[region.mask.ravel()]
    u_ins = u_flat[region.mask.ravel()]
    u_sec = u_flat[section.pixel_index]
    xb_core = xb[core]
    n_core = len(xb_core)
    gaps = np.empty(n_core)
    stepq = max(1, 4_000_000 // max(len(ins_pts), 1))
    for s in range(0, n_core, stepq):
        e = min(n_core, s + stepq)
        lift_sec = u_sec[:, None] + cost.eval(sec_pts[:, None, :], xb_core[None, s:e, :])
        lift_ins = u_ins[:, None] + cost.eval(ins_pts[:, None, :], xb_core[None, s:e, :])
        gaps[s:e] = lift_sec.min(axis=0) - lift_ins.min(axis=0)
    # a core co-vector sits within one grid cell of the true polytope; the
    # deficit of the exactly-included neighbor it stands in for moves at the
    # region-wide lever, plus one raster cell at the boundary lever
    C_omega = _q_sensitivity(cost, x0, p0_src, ins_pts, max(co_cell, 1e-9))
    allowance = C_omega * co_cell + C_sens * h + 1e-12 * (1.0 + abs(u0))

    return CConeFn(
        section=section,
        vertex=x0,
        u_vertex=u0,
        gap=gap,
        co_cell=float(co_cell),
        q_grid=qq,
        xbar_grid=xb,
        lam=lam,
        anchor=anchor,
        slack=slack,
        active=active,
        core=core,
        active_hull=act_hull,
        p0=p0_src,
        C_sens=C_sens,
        C_omega=C_omega,
        margin=float(margin),
        r0_pred=float(r0_pred),
        inclusion_gaps=gaps,
        inclusion_allowance=float(allowance),
        _cost=cost,
    )


# ---------------------------------------------------------------------------
# section shape ratios
# ---------------------------------------------------------------------------


def aleksandrov_check(
    solution: DualSolution,
    sections: Sequence[Section],
    delta_witness: Optional[tuple[np.ndarray, float]] = None,
) -> np.ndarray:
    """Shape ratio ``gap² · ℓ / (min(d₊, d₋) · volume²)`` per section.

    Sections whose cap touches the potential at the base (``gap = 0``) score
    exactly 0.  A section whose longest chord is below two raster cells, or
    whose base momentum does not sit strictly between the width planes,
    cannot be measured at this resolution and raises
    :class:`DegenerateSection`.  ``delta_witness`` — a co-vector with its
    clearance from the target-support boundary — is validated for positive
    clearance and recorded by callers; it does not enter the ratio.
    """
    if delta_witness is not None:
        _, delta = delta_witness
        if not delta > 0:
            raise ValueError("witness clearance must be positive")
    h = solution.region.raster.h
    ratios = []
    for sec in sections:
        if sec.gap <= 0.0:
            ratios.append(0.0)
            continue
        if sec.ell < 2.0 * h:
            raise DegenerateSection(
                f"longest chord {sec.ell:.3e} is below two raster cells"
            )
        dmin = min(sec.d_plus, sec.d_minus)
        if dmin <= 0.0:
            raise DegenerateSection("base momentum lies on or outside the width planes")
        ratios.append(sec.gap**2 * sec.ell / (dmin * sec.volume**2))
    return np.asarray(ratios, dtype=float)
