"""Singular-set analysis of solved dual potentials.

The dual potential ``u(x) = max_j (λ_j − c(x, ȳ_j))`` is piecewise smooth;
its non-differentiability locus is where two or more value sheets meet.  This
module reconstructs subdifferentials, extracts the singular set on the
raster, classifies its components by the affine dimension and strength of the
sheet crossings, and checks the isolation/propagation structure of the
components.

Scale conventions (``h`` is the raster cell size):

* a sheet pair *crosses* a pixel when the zero set of the value difference
  meets the pixel square — for difference gradient ``Δp`` this is
  ``|Δv(center)| ≤ (h/2)·‖Δp‖₁``;
* a crossing is *exposed* when some point of the crossing segment attains
  the pixel's value maximum (within a tiny slack): crossings buried below
  other sheets do not create creases of ``u``;
* a pixel's *strength* is the largest ``‖Δp‖₂`` over exposed crossings; the
  *filtered* singular set keeps strength above ``10·h`` (the same scale used
  by the affine-dimension thresholds), which removes the micro-creases of a
  finely discretized absolutely-continuous target while keeping genuine
  discontinuities of the map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .costs import CostFunction, c_exp
from .errors import NoPuncturedNeighborhood, NotSingular
from .geometry import Region
from .hull import convex_hull, diameter, hull_area
from .transport import _TOP_K, DualSolution, Tessellation, laguerre_assign

__all__ = [
    "SubdifferentialPolytope",
    "SingularComponent",
    "SingularSet",
    "IsolationEntry",
    "IsolationReport",
    "subdifferential_at",
    "singular_set",
    "isolation_report",
    "propagation_check",
]

EXPOSURE_SAMPLES = 9


# ---------------------------------------------------------------------------
# subdifferential reconstruction at a point


@dataclass
class SubdifferentialPolytope:
    """Convex polytope of limiting gradients of ``u`` at one point.

    ``vertices`` are the momenta ``−D_x c(x₀, ȳ_j)`` of the active sheets;
    for costs with invertible cross derivative these co-vectors are exactly
    the chart coordinates of the active targets, so the polytope describes
    both the local subdifferential and the target set it maps to.
    """

    base: np.ndarray
    active: np.ndarray  # indices of active sheets
    vertices: np.ndarray  # (m, 2) momenta of active sheets
    image_points: np.ndarray  # (m, 2) active targets
    hull: np.ndarray  # (k, 2) ccw hull of the vertices
    affine_dim: int
    diameter: float
    area: float

    @property
    def is_singular(self) -> bool:
        return len(self.active) >= 2


def _dual_values(solution: DualSolution, x0: np.ndarray):
    Y = solution.target.points
    v = solution.lam - solution.cost.eval(x0[None, :], Y)
    p = -solution.cost.grad_x(np.broadcast_to(x0, Y.shape), Y)
    return v, p


def subdifferential_at(
    solution: DualSolution,
    x0,
    gap_tol: Optional[float] = None,
) -> SubdifferentialPolytope:
    """Subdifferential polytope of the potential at ``x0``.

    Active sheets are selected adaptively by default: sheet ``j`` is active
    when its crease with the leading sheet passes within half a raster cell
    of ``x0`` (``v_max − v_j ≤ (h/2)·‖p_max − p_j‖₁``, plus a tiny absolute
    slack for exact ties).  An explicit ``gap_tol`` replaces the adaptive
    rule by the plain value threshold ``v_max − v_j ≤ gap_tol``; enlarging
    it never shrinks the active set, so the affine dimension is monotone in
    ``gap_tol``.

    Affine dimension thresholds (``h`` = raster cell size): dimension 2 iff
    the hull area exceeds ``(10h)²``, else 1 iff the vertex diameter exceeds
    ``10h``, else 0.
    """
    x0 = np.asarray(x0, dtype=float).reshape(2)
    h = solution.region.raster.h
    v, p = _dual_values(solution, x0)
    top = int(np.argmax(v))
    if gap_tol is None:
        lim = 0.5 * h * np.abs(p[top] - p).sum(axis=1)
        lim += 1e-9 * (1.0 + np.abs(v[top]))
    else:
        lim = float(gap_tol)
    active = np.flatnonzero(v >= v[top] - lim)
    verts = p[active]
    hull = convex_hull(verts)
    diam = diameter(verts)
    area = hull_area(verts)
    if area > (10.0 * h) ** 2:
        dim = 2
    elif diam > 10.0 * h:
        dim = 1
    else:
        dim = 0
    return SubdifferentialPolytope(
        base=x0,
        active=active,
        vertices=verts,
        image_points=solution.target.points[active],
        hull=hull,
        affine_dim=dim,
        diameter=float(diam),
        area=float(area),
    )


# ---------------------------------------------------------------------------
# singular set on the raster


@dataclass
class SingularComponent:
    """One 8-connected component of the filtered singular set."""

    label: int
    pixel_index: np.ndarray  # flat raster indices of member pixels
    points: np.ndarray  # (m, 2) member pixel centers
    size: int
    diameter: float
    representative: np.ndarray  # center of the strongest member pixel
    strength: float  # largest exposed momentum jump in the component


@dataclass
class SingularSet:
    """Raster decomposition of the non-differentiability locus.

    ``raw_mask`` marks pixels whose leading sheet is crossed by another
    sheet inside the pixel square (every near-tie, including micro-creases
    between neighboring targets of a finely discretized measure).
    ``filtered_mask`` keeps pixels with an exposed crossing stronger than
    ``strength_tol``; ``components`` are its 8-connected components.
    """

    solution: DualSolution
    strength_tol: float
    raw_mask: np.ndarray  # (ny, nx) bool
    filtered_mask: np.ndarray  # (ny, nx) bool
    strength: np.ndarray  # (ny, nx) float, exposed-crossing strength
    active_count: np.ndarray  # (ny, nx) int8-ish count of crossing sheets
    raw_labels: np.ndarray  # (ny, nx) int component labels of raw_mask
    n_raw_components: int
    labels: np.ndarray  # (ny, nx) int component labels of filtered_mask
    components: list[SingularComponent] = field(default_factory=list)

    @property
    def n_components(self) -> int:
        return len(self.components)


def _exposure_tol(cost: CostFunction, h: float, vscale: np.ndarray) -> np.ndarray:
    """Slack for 'the crossing attains the pixel maximum'.

    Quadratic and bilinear sheets have affine pairwise differences, so the
    crossing segment is exact and only rounding slack is needed; curved
    costs get an additional second-order allowance for linearizing the
    crease inside one pixel.
    """
    slack = 1e-9 * (1.0 + np.abs(vscale))
    if cost.cost_id in ("log", "sqrt_plus"):
        slack = slack + 2.0 * h * h
    return slack


def _clip_segment_to_square(foot, tdir, center, half):
    """Parameter interval of ``foot + s·tdir`` inside the axis box
    ``center ± half`` (vectorized over rows); empty intervals yield lo > hi."""
    lo = np.full(len(foot), -np.inf)
    hi = np.full(len(foot), np.inf)
    for ax in range(2):
        d = tdir[:, ax]
        f = foot[:, ax] - center[:, ax]
        moving = np.abs(d) > 1e-300
        s1 = (-half - f[moving]) / d[moving]
        s2 = (half - f[moving]) / d[moving]
        smin = np.minimum(s1, s2)
        smax = np.maximum(s1, s2)
        lo[moving] = np.maximum(lo[moving], smin)
        hi[moving] = np.minimum(hi[moving], smax)
        # parallel to this axis: inside iff the fixed coordinate fits
        flat = ~moving & (np.abs(f) > half)
        lo[flat] = 1.0
        hi[flat] = 0.0
    return lo, hi


def singular_set(
    solution: DualSolution,
    strength_tol: Optional[float] = None,
    tess: Optional[Tessellation] = None,
) -> SingularSet:
    """Extract and classify the singular set of a solved potential.

    ``strength_tol`` defaults to ``10·h`` — the affine-dimension length
    scale: exposed momentum jumps below it are treated as discretization
    texture of the target measure rather than singularities of the limit
    map.
    """
    region = solution.region
    raster = region.raster
    h = raster.h
    if strength_tol is None:
        strength_tol = 10.0 * h
    if tess is None:
        tess = laguerre_assign(solution)
    cost = solution.cost
    Y = solution.target.points
    K = tess.top_vals.shape[1]

    inside = region.mask.ravel()
    idx_in = np.flatnonzero(inside)
    centers = raster.centers()[idx_in]
    tv = tess.top_vals[idx_in]
    ti = tess.top_idx[idx_in]
    P = -cost.grad_x(centers[:, None, :], Y[ti])

    # raw detection: does any sheet cross the leading one inside the pixel?
    dv0 = tv[:, :1] - tv[:, 1:]
    dp0 = P[:, :1, :] - P[:, 1:, :]
    lim0 = 0.5 * h * np.abs(dp0).sum(axis=2) + 1e-12 * (1.0 + np.abs(tv[:, :1]))
    crosses0 = dv0 <= lim0
    raw_in = crosses0.any(axis=1)
    active_count_in = 1 + crosses0.sum(axis=1)

    # strength: largest exposed crossing among all top-K sheet pairs
    strength_in = np.zeros(len(centers))
    ridx = np.flatnonzero(raw_in)
    if len(ridx) and K >= 2:
        pairs = np.array(list(combinations(range(K), 2)))
        ii, jj = pairs[:, 0], pairs[:, 1]
        tvr, tir, Pr, cr = tv[ridx], ti[ridx], P[ridx], centers[ridx]
        dv = tvr[:, ii] - tvr[:, jj]  # (r, n_pairs)
        dp = Pr[:, ii, :] - Pr[:, jj, :]
        jump = np.linalg.norm(dp, axis=2)
        cross = np.abs(dv) <= 0.5 * h * np.abs(dp).sum(axis=2) + 1e-12 * (
            1.0 + np.abs(tvr[:, :1])
        )
        cross &= jump > 1e-15
        rloc_all, ploc_all = np.nonzero(cross)
        strength_sub = np.zeros(len(ridx))
        s = np.linspace(0.0, 1.0, EXPOSURE_SAMPLES)
        chunk = 100_000
        for cs in range(0, len(rloc_all), chunk):
            rloc = rloc_all[cs : cs + chunk]
            ploc = ploc_all[cs : cs + chunk]
            g = dp[rloc, ploc]  # gradient of the pair difference
            gn2 = (g**2).sum(axis=1)
            c0 = cr[rloc]
            foot = c0 - (dv[rloc, ploc] / gn2)[:, None] * g
            tdir = np.stack([-g[:, 1], g[:, 0]], axis=1) / np.sqrt(gn2)[:, None]
            lo, hi = _clip_segment_to_square(foot, tdir, c0, 0.5 * h)
            ok = lo <= hi
            # sample the crossing segment and test exposure on the snapshot
            svals = lo[:, None] + (hi - lo)[:, None] * s[None, :]
            xs = foot[:, None, :] + svals[..., None] * tdir[:, None, :]
            lam_s = solution.lam[tir[rloc]]  # (m, K)
            vs = lam_s[:, None, :] - cost.eval(
                xs[:, :, None, :], Y[tir[rloc]][:, None, :, :]
            )
            vmax_s = vs.max(axis=2)  # (m, S)
            take_i = ii[ploc][:, None, None].repeat(EXPOSURE_SAMPLES, 1)
            take_j = jj[ploc][:, None, None].repeat(EXPOSURE_SAMPLES, 1)
            vpair = np.maximum(
                np.take_along_axis(vs, take_i, 2)[:, :, 0],
                np.take_along_axis(vs, take_j, 2)[:, :, 0],
            )
            eta = _exposure_tol(cost, h, tvr[rloc, 0])
            exposed = ok & ((vpair - vmax_s) >= -eta[:, None]).any(axis=1)
            jmp = np.where(exposed, jump[rloc, ploc], 0.0)
            np.maximum.at(strength_sub, rloc, jmp)
        strength_in[ridx] = strength_sub

    shape = raster.shape
    raw_mask = np.zeros(shape, dtype=bool)
    raw_mask.ravel()[idx_in] = raw_in
    strength = np.zeros(shape)
    strength.ravel()[idx_in] = strength_in
    active_count = np.zeros(shape, dtype=np.int16)
    active_count.ravel()[idx_in] = active_count_in
    filtered_mask = raw_mask & (strength > strength_tol)

    eight = np.ones((3, 3), dtype=int)
    raw_labels, n_raw = ndimage.label(raw_mask, structure=eight)
    labels, n_filt = ndimage.label(filtered_mask, structure=eight)

    all_centers = raster.centers()
    components = []
    for lab in range(1, n_filt + 1):
        flat = np.flatnonzero(labels.ravel() == lab)
        pts = all_centers[flat]
        st = strength.ravel()[flat]
        best = int(np.argmax(st))
        components.append(
            SingularComponent(
                label=lab,
                pixel_index=flat,
                points=pts,
                size=len(flat),
                diameter=float(diameter(pts)) if len(pts) > 1 else 0.0,
                representative=pts[best],
                strength=float(st[best]),
            )
        )
    # strongest first: the dominant structure leads the report
    components.sort(key=lambda comp: -comp.strength)

    return SingularSet(
        solution=solution,
        strength_tol=float(strength_tol),
        raw_mask=raw_mask,
        filtered_mask=filtered_mask,
        strength=strength,
        active_count=active_count,
        raw_labels=raw_labels,
        n_raw_components=int(n_raw),
        labels=labels,
        components=components,
    )


# ---------------------------------------------------------------------------
# isolation analysis


@dataclass
class IsolationEntry:
    component: SingularComponent
    is_isolated: bool
    affine_dim: int
    verdict: str  # PROPAGATING | CONSISTENT | VIOLATION


@dataclass
class IsolationReport:
    entries: list[IsolationEntry]
    n_isolated: int
    target_holes: Optional[int]  # holes of the target support, if provided
    consistent: bool

    def lines(self) -> list[str]:
        out = []
        for k, e in enumerate(self.entries):
            out.append(
                f"component {k}: size={e.component.size} "
                f"strength={e.component.strength:.4g} "
                f"isolated={e.is_isolated} affine_dim={e.affine_dim} "
                f"-> {e.verdict}"
            )
        out.append(
            f"isolated components: {self.n_isolated}; "
            f"target holes: {self.target_holes}; "
            f"{'CONSISTENT' if self.consistent else 'VIOLATION'}"
        )
        return out


def isolation_report(
    sing: SingularSet,
    target_region: Optional[Region] = None,
) -> IsolationReport:
    """Isolation verdicts for every filtered singular component.

    A component is *isolated* when it has at most 2 pixels and no other
    filtered singular pixel lies within ``3h`` of it.  An isolated component
    must carry a 2-dimensional subdifferential, and — when the target
    support is provided — the support must have at least one hole;
    otherwise the scenario is flagged VIOLATION (an isolated singularity
    without a hole contradicts the dichotomy this laboratory probes).
    """
    solution = sing.solution
    h = solution.region.raster.h
    filt_idx = np.flatnonzero(sing.filtered_mask.ravel())
    centers = solution.region.raster.centers()
    tree = cKDTree(centers[filt_idx]) if len(filt_idx) else None

    n_holes: Optional[int] = None
    if target_region is not None:
        from .geometry import detect_holes

        n_holes = detect_holes(target_region).n_holes

    entries = []
    n_isolated = 0
    consistent = True
    for comp in sing.components:
        is_isolated = False
        if comp.size <= 2:
            near = tree.query_ball_point(comp.points, r=3.0 * h)
            near_idx = np.unique(np.concatenate([np.asarray(n, dtype=int) for n in near]))
            others = np.setdiff1d(filt_idx[near_idx], comp.pixel_index)
            is_isolated = len(others) == 0
        sub = subdifferential_at(solution, comp.representative)
        if not is_isolated:
            verdict = "PROPAGATING"
        elif sub.affine_dim == 2 and (n_holes is None or n_holes >= 1):
            verdict = "CONSISTENT"
        else:
            verdict = "VIOLATION"
            consistent = False
        if is_isolated:
            n_isolated += 1
        entries.append(
            IsolationEntry(
                component=comp,
                is_isolated=is_isolated,
                affine_dim=sub.affine_dim,
                verdict=verdict,
            )
        )
    return IsolationReport(
        entries=entries,
        n_isolated=n_isolated,
        target_holes=n_holes,
        consistent=consistent,
    )


# ---------------------------------------------------------------------------
# propagation of singularities


def propagation_check(
    solution: DualSolution,
    x0,
    radius: float,
    sing: Optional[SingularSet] = None,
) -> float:
    """How well nearby gradients attain the subdifferential's boundary.

    For each hull vertex ``p`` of the subdifferential at ``x0``, finds the
    closest potential gradient over the effectively-differentiable pixels
    (not in the filtered singular set) of the punctured ``radius``-ball and
    returns the largest of those distances.  A small value certifies that
    every extreme slope of the subdifferential is realized as a genuine
    gradient arbitrarily close to the singular point.

    Raises
    ------
    NotSingular
        If no second sheet is active at ``x0``.
    NoPuncturedNeighborhood
        If the punctured ball contains no effectively-differentiable pixel.
    """
    x0 = np.asarray(x0, dtype=float).reshape(2)
    sub = subdifferential_at(solution, x0)
    if not sub.is_singular:
        raise NotSingular(f"only one active sheet at {x0.tolist()}")
    if sing is None:
        sing = singular_set(solution)
    region = solution.region
    raster = region.raster
    centers = raster.centers()
    ok = region.mask.ravel() & ~sing.filtered_mask.ravel()
    d = np.linalg.norm(centers - x0, axis=1)
    ok &= (d > 0.0) & (d <= radius)
    pick = np.flatnonzero(ok)
    if len(pick) == 0:
        raise NoPuncturedNeighborhood(
            f"no differentiable pixels within {radius} of {x0.tolist()}"
        )
    # gradient of the potential = momentum of the leading sheet
    tv, ti = solution.values_top(centers[pick], k=1)
    grads = -solution.cost.grad_x(centers[pick], solution.target.points[ti[:, 0]])
    hull_pts = sub.hull if len(sub.hull) else sub.vertices
    gaps = [
        float(np.linalg.norm(grads - p[None, :], axis=1).min()) for p in hull_pts
    ]
    return max(gaps)
