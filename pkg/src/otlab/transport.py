"""Semi-discrete transport: dual solvers, Laguerre tessellations, maps.

A continuous source (a :class:`~otlab.geometry.Region` with a density)
is transported to finitely many weighted target points. The dual potential
is the vector ``λ`` for which the generalized Laguerre cells

    L_j = { x : λ_j − c(x, ȳ_j) >= λ_k − c(x, ȳ_k) for all k }

carry exactly the target weights. Cell masses are computed on the region's
raster with a fixed anti-aliasing ramp of width ``w`` across the top-two
value gap (a normalized-ReLU partition of unity per cell), which makes the
mass map continuous and piecewise smooth in ``λ``; plain argmax counting
would quantize masses at one raster cell and no solver could meet tight
mass tolerances honestly.

Two independent solvers are provided: a damped Newton method on the mass
residual (the production path) and an exact coordinate-ascent method with
Anderson-accelerated sweeps (the cross-checking oracle). They share only
the definition of the mass map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from .costs import CostFunction, c_exp
from .errors import SolverDiverged
from .geometry import Region

__all__ = [
    "DiscreteTarget",
    "targets_random",
    "targets_grid",
    "targets_rings",
    "rings_radial_init",
    "SourceDensity",
    "uniform_density",
    "checkerboard_density",
    "DualSolution",
    "solve_dual",
    "solve_dual_oracle",
    "Tessellation",
    "laguerre_assign",
    "TransportResult",
    "transport_map",
    "PushforwardReport",
    "pushforward_check",
]

# cap on |values| computed per chunk when scanning pixels against targets
_CHUNK_VALUES = 1_500_000
_TOP_K = 8


# ---------------------------------------------------------------------------
# targets and densities


@dataclass
class DiscreteTarget:
    """Weighted target points ``(ȳ_j, ν_j)`` with ``Σ ν_j = 1``."""

    points: np.ndarray
    weights: np.ndarray
    name: str = "target"
    ring_groups: Optional[list[np.ndarray]] = None  # index groups per ring

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("target points must be (J, 2)")
        if self.weights.shape != (len(self.points),):
            raise ValueError("weights must match points")
        if np.any(self.weights <= 0):
            raise ValueError("target weights must be positive")
        self.weights = self.weights / self.weights.sum()

    @property
    def n(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        return f"DiscreteTarget({self.name!r}, n={self.n})"


def targets_random(
    n: int,
    box: tuple = (-0.8, 0.8, -0.8, 0.8),
    seed: int = 0,
    weight_jitter: float = 0.0,
) -> DiscreteTarget:
    """``n`` seeded uniform points in a box; optional weight jitter draws
    weights from ``U(1 - jitter, 1 + jitter)`` before normalization."""
    rng = np.random.default_rng(seed)
    xmin, xmax, ymin, ymax = box
    pts = rng.random((n, 2))
    pts[:, 0] = xmin + pts[:, 0] * (xmax - xmin)
    pts[:, 1] = ymin + pts[:, 1] * (ymax - ymin)
    if weight_jitter > 0.0:
        w = rng.uniform(1.0 - weight_jitter, 1.0 + weight_jitter, n)
    else:
        w = np.ones(n)
    return DiscreteTarget(pts, w, name=f"random({n},seed={seed})")


def targets_grid(shape: tuple[int, int], box: tuple) -> DiscreteTarget:
    """A ``gx × gy`` grid of equally weighted points, cell-centered in a box."""
    gx, gy = shape
    xmin, xmax, ymin, ymax = box
    xs = xmin + (np.arange(gx) + 0.5) * (xmax - xmin) / gx
    ys = ymin + (np.arange(gy) + 0.5) * (ymax - ymin) / gy
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    return DiscreteTarget(pts, np.ones(len(pts)), name=f"grid{shape}")


def targets_rings(
    n_rings: int,
    per_ring: int,
    r_min: float,
    r_max: float,
    center=(0.0, 0.0),
    stagger: bool = True,
) -> DiscreteTarget:
    """Ring-stratified targets in an annulus: equal-area radial shells, one
    ring of ``per_ring`` uniformly spaced points at each shell's area
    midpoint, all weights equal (the stratified sampling of the uniform
    density on the annulus). ``stagger`` rotates alternate rings half a step
    so radial alignments do not persist across rings."""
    a2, b2 = r_min**2, r_max**2
    pts = []
    groups = []
    idx = 0
    for g in range(n_rings):
        s0 = a2 + (b2 - a2) * g / n_rings
        s1 = a2 + (b2 - a2) * (g + 1) / n_rings
        rho = np.sqrt(0.5 * (s0 + s1))
        off = 0.5 * (g % 2) if stagger else 0.0
        th = 2.0 * np.pi * (np.arange(per_ring) + off) / per_ring
        ring = np.stack(
            [center[0] + rho * np.cos(th), center[1] + rho * np.sin(th)], axis=1
        )
        pts.append(ring)
        groups.append(np.arange(idx, idx + per_ring))
        idx += per_ring
    pts = np.vstack(pts)
    return DiscreteTarget(
        pts,
        np.ones(len(pts)),
        name=f"rings({n_rings}x{per_ring})",
        ring_groups=groups,
    )


def rings_radial_init(
    cost: CostFunction,
    target: DiscreteTarget,
    source_radius: float,
    center=(0.0, 0.0),
) -> np.ndarray:
    """Dual lift seed for ring-stratified targets around a uniform disk.

    Ring ``k`` should receive the equal-mass radial shell of the disk whose
    cumulative area fraction matches the ring's cumulative weight; equating
    the winning sheets of consecutive rings at each shell interface fixes
    the lift differences.  Rings lying entirely outside the source start
    with near-empty cells under the generic lift and stall the damped
    Newton solve, so seed it with this instead.
    """
    if target.ring_groups is None:
        raise ValueError("target carries no ring groups")
    c0 = np.asarray(center, dtype=float)
    e = np.array([1.0, 0.0])
    lam = np.zeros(target.n)
    level = 0.0
    cum = 0.0
    rho_prev = 0.0
    for k, grp in enumerate(target.ring_groups):
        rho = float(np.linalg.norm(target.points[grp] - c0[None, :], axis=1).mean())
        if k > 0:
            s_if = source_radius * np.sqrt(cum)
            xs = (c0 + s_if * e)[None, :]
            level += float(
                cost.eval(xs, (c0 + rho * e)[None, :])[0]
                - cost.eval(xs, (c0 + rho_prev * e)[None, :])[0]
            )
        lam[grp] = level
        cum += float(target.weights[grp].sum())
        rho_prev = rho
    return lam - lam[0]


@dataclass
class SourceDensity:
    """A positive density on the source region (normalized on the raster)."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "uniform"
    ratio_bound: float = 1.0  # Λ with normalized density in [1/Λ, Λ]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.fn(np.asarray(points, dtype=float))


def uniform_density() -> SourceDensity:
    return SourceDensity(lambda p: np.ones(p.shape[:-1]), name="uniform", ratio_bound=1.0)


def checkerboard_density(lam: float, tile: float = 0.5, origin=(0.0, 0.0)) -> SourceDensity:
    """Checkerboard with tile values 1 and ``2Λ − 1``.

    On an even tiling the mean is ``Λ``, so the normalized density takes the
    values ``1/Λ`` (exactly the lower bound) and ``2 − 1/Λ ≤ Λ``: the density
    ratio stays within ``[1/Λ, Λ]`` for every ``Λ >= 1``.
    """
    if lam < 1.0:
        raise ValueError("the density ratio bound must be >= 1")
    ox, oy = origin

    def fn(p):
        ix = np.floor((p[..., 0] - ox) / tile).astype(int)
        iy = np.floor((p[..., 1] - oy) / tile).astype(int)
        hi = ((ix + iy) % 2).astype(bool)
        return np.where(hi, 2.0 * lam - 1.0, 1.0)

    return SourceDensity(fn, name=f"checkerboard({lam})", ratio_bound=float(lam))


# ---------------------------------------------------------------------------
# mass map: smoothed Laguerre cell masses on the raster


def _scan_chunks(n: int, n_targets: int):
    chunk = max(64, _CHUNK_VALUES // max(n_targets, 1))
    for s in range(0, n, chunk):
        yield s, min(s + chunk, n)


def _top_k(values: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise top-k values and indices, sorted descending."""
    J = values.shape[1]
    k = min(k, J)
    part = np.argpartition(values, J - k, axis=1)[:, J - k :]
    vals = np.take_along_axis(values, part, axis=1)
    order = np.argsort(-vals, axis=1, kind="stable")
    return np.take_along_axis(vals, order, axis=1), np.take_along_axis(part, order, axis=1)


def _ramp_partition(top_vals: np.ndarray, w: float) -> np.ndarray:
    """Normalized-ReLU weights over the top-k values of each pixel.

    ``Q = relu(v − (vmax − w)) / Σ relu``: continuous in the values, sums to
    1 per pixel, equals plain argmax once the top-two gap exceeds ``w``.
    """
    r = np.maximum(top_vals - (top_vals[:, :1] - w), 0.0)
    return r / r.sum(axis=1, keepdims=True)


def _masses(
    cost: CostFunction,
    X: np.ndarray,
    W: np.ndarray,
    Y: np.ndarray,
    lam: np.ndarray,
    w: float,
    need_jacobian: bool = False,
) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Smoothed cell masses ``m_j(λ)`` and (optionally) ``∂m/∂λ``.

    The Jacobian is supported on ramp pixels. With active set ``A`` (ramp
    values ``r``, sum ``S``, argmax ``j*`` where ``r_{j*} = w``):

        ∂Q_j/∂λ_k  = (δ_jk S − r_j)/S²            j, k ≠ j*
        ∂Q_j/∂λ_j* = (−S + r_j (|A|−1))/S²         j ≠ j*
        ∂Q_j*/∂λ_k = −w/S²                          k ≠ j*
        ∂Q_j*/∂λ_j* = w (|A|−1)/S²

    (rows sum to zero; for |A| = 2 the block is the symmetric ±w/S² pair).
    """
    J = len(Y)
    m = np.zeros(J)
    jac = np.zeros((J, J)) if need_jacobian else None
    for s, e in _scan_chunks(len(X), J):
        vals = lam[None, :] - cost.eval(X[s:e, None, :], Y[None, :, :])
        tv, ti = _top_k(vals, _TOP_K)
        r = np.maximum(tv - (tv[:, :1] - w), 0.0)
        S = r.sum(axis=1)
        Q = r / S[:, None]
        np.add.at(m, ti.ravel(), (W[s:e, None] * Q).ravel())
        if not need_jacobian:
            continue
        nact = (r > 0.0).sum(axis=1)
        ww = W[s:e]
        # two-way ramps: symmetric ±w/S² pair between argmax and runner-up
        two = nact == 2
        if np.any(two):
            coef = ww[two] * w / S[two] ** 2
            j0 = ti[two, 0]
            j1 = ti[two, 1]
            np.add.at(jac, (j0, j0), coef)
            np.add.at(jac, (j1, j1), coef)
            np.add.at(jac, (j0, j1), -coef)
            np.add.at(jac, (j1, j0), -coef)
        # wider ramps (near-triple pixels): general formula, loop is cheap
        multi = np.flatnonzero(nact >= 3)
        for i in multi:
            a = int(nact[i])
            ids = ti[i, :a]
            ri = r[i, :a]
            Si = S[i]
            dq = np.empty((a, a))
            dq[:, :] = (-ri[:, None] + Si * np.eye(a)) / Si**2
            dq[0, :] = -w / Si**2
            dq[:, 0] = (-Si + ri * (a - 1)) / Si**2
            dq[0, 0] = w * (a - 1) / Si**2
            jac[np.ix_(ids, ids)] += W[s + i] * dq
    return m, jac


# ---------------------------------------------------------------------------
# dual solution container


class DualSolution:
    """The solved dual potential of a semi-discrete transport problem.

    The scalar potential is ``u(x) = max_j (λ_j − c(x, ȳ_j))``; its smooth
    pieces are the Laguerre cells and its gradient on cell ``j`` is
    ``−D_x c(x, ȳ_j)``.
    """

    def __init__(
        self,
        cost: CostFunction,
        region: Region,
        density: SourceDensity,
        target: DiscreteTarget,
        lam: np.ndarray,
        ramp_width: float,
        X: np.ndarray,
        W: np.ndarray,
        method: str,
        iterations: int,
        residual: float,
        tie_groups: Optional[list[np.ndarray]] = None,
    ):
        self.cost = cost
        self.region = region
        self.density = density
        self.target = target
        self.lam = np.asarray(lam, dtype=float)
        self.ramp_width = float(ramp_width)
        self.X = X
        self.W = W
        self.method = method
        self.iterations = iterations
        self.residual = residual
        self.tie_groups = tie_groups

    def masses(self, lam: Optional[np.ndarray] = None) -> np.ndarray:
        """Smoothed cell masses at ``lam`` (default: the solved potential)."""
        lam = self.lam if lam is None else np.asarray(lam, dtype=float)
        m, _ = _masses(
            self.cost, self.X, self.W, self.target.points, lam, self.ramp_width
        )
        return m

    def values_top(self, points: np.ndarray, k: int = _TOP_K):
        """Top-k dual values ``λ_j − c(x, ȳ_j)`` and indices at points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        J = self.target.n
        out_v = np.empty((len(pts), min(k, J)))
        out_i = np.empty((len(pts), min(k, J)), dtype=int)
        for s, e in _scan_chunks(len(pts), J):
            vals = self.lam[None, :] - self.cost.eval(
                pts[s:e, None, :], self.target.points[None, :, :]
            )
            tv, ti = _top_k(vals, k)
            out_v[s:e] = tv
            out_i[s:e] = ti
        return out_v, out_i

    def potential_at(self, points: np.ndarray) -> np.ndarray:
        """The dual potential ``u`` at arbitrary points."""
        tv, _ = self.values_top(points, k=1)
        return tv[:, 0]

    def __repr__(self) -> str:
        return (
            f"DualSolution(cost={self.cost.cost_id!r}, J={self.target.n}, "
            f"method={self.method!r}, iters={self.iterations}, "
            f"residual={self.residual:.2e})"
        )


def _quadrature_measure(region: Region, density: SourceDensity):
    X, A = region.quadrature()
    W = A * density(X)
    total = W.sum()
    if total <= 0:
        raise ValueError("source density integrates to zero on the region")
    return X, W / total


def _default_ramp_width(cost: CostFunction, X, h: float, Y, rng_seed: int = 0) -> float:
    """Fixed anti-aliasing width in value units, one raster cell wide in space.

    The spatial width of the transition band between two cells is the value
    width divided by the *difference* of the sheet gradients, so the width is
    scaled by a typical nearest-competitor gradient gap — not by the gradient
    itself, which can be orders of magnitude larger for densely packed
    targets and would smear whole cells.
    """
    rng = np.random.default_rng(rng_seed)
    take = rng.choice(len(X), size=min(512, len(X)), replace=False)
    sub = X[take]
    if len(Y) < 2:
        return 1e-9
    d2 = ((sub[:, None, :] - Y[None, :, :]) ** 2).sum(-1)
    nn = np.argsort(d2, axis=1)[:, :2]
    y1, y2 = Y[nn[:, 0]], Y[nn[:, 1]]
    ok = cost.valid_pair(sub, y1) & cost.valid_pair(sub, y2)
    dp = np.linalg.norm(
        cost.grad_x(sub[ok], y1[ok]) - cost.grad_x(sub[ok], y2[ok]), axis=1
    )
    scale = float(np.median(dp)) if len(dp) else 1.0
    return max(scale, 1e-9) * h


def _groups_matrix(J: int, tie_groups: Optional[list[np.ndarray]]) -> np.ndarray:
    """Membership matrix B (J × G); ungrouped indices become singletons."""
    if tie_groups is None:
        return np.eye(J)
    seen = np.zeros(J, dtype=bool)
    cols = []
    for g in tie_groups:
        g = np.asarray(g, dtype=int)
        if seen[g].any():
            raise ValueError("tie groups overlap")
        seen[g] = True
        col = np.zeros(J)
        col[g] = 1.0
        cols.append(col)
    for j in np.flatnonzero(~seen):
        col = np.zeros(J)
        col[j] = 1.0
        cols.append(col)
    return np.stack(cols, axis=1)


def _initial_lift(cost: CostFunction, X, Y) -> np.ndarray:
    """λ_j = min_x c(x, ȳ_j): every dual value sheet touches its maximum 0
    somewhere, so no cell starts empty."""
    J = len(Y)
    lam = np.full(J, np.inf)
    for s, e in _scan_chunks(len(X), J):
        c = cost.eval(X[s:e, None, :], Y[None, :, :])
        lam = np.minimum(lam, c.min(axis=0))
    return lam - lam[0]


def solve_dual(
    cost: CostFunction,
    region: Region,
    density: SourceDensity,
    target: DiscreteTarget,
    tol: float = 1e-10,
    max_iter: int = 80,
    ramp_width: Optional[float] = None,
    tie_groups: Optional[list[np.ndarray]] = None,
    init: Optional[np.ndarray] = None,
    verbose: bool = False,
) -> DualSolution:
    """Damped Newton solve of the dual mass system ``m(λ) = ν``.

    The gauge is ``λ_0 = 0``. Step damping enforces a residual decrease and
    keeps every cell mass above half its initial floor (the classical
    safeguard for damped Newton on Laguerre masses). ``tie_groups``
    constrains listed index groups to share one potential value (used for
    symmetric scenarios where the raster would otherwise break an exact
    symmetry of the problem).

    Raises
    ------
    SolverDiverged
        If the residual cannot be reduced to ``tol`` within ``max_iter``.
    """
    X, W = _quadrature_measure(region, density)
    Y = target.points
    nu = target.weights
    J = len(Y)
    w = _default_ramp_width(cost, X, region.raster.h, Y) if ramp_width is None else float(ramp_width)

    B = _groups_matrix(J, tie_groups)
    lam = _initial_lift(cost, X, Y) if init is None else np.asarray(init, float).copy()
    lam = lam - lam[0]
    if tie_groups is not None:
        # make the start consistent with the ties (group means)
        group_mean = (B.T @ lam) / B.sum(axis=0)
        lam = B @ group_mean
        lam = lam - lam[0]

    nu_g = B.T @ nu

    def grouped_residual(mass):
        # with tie groups only group sums are controllable; for singleton
        # groups this is the plain per-target residual
        return float(np.abs(B.T @ mass - nu_g).max())

    m, _ = _masses(cost, X, W, Y, lam, w)
    eps0 = 0.5 * min(float(m.min()), float(nu.min()))
    res = grouped_residual(m)
    merit = float(np.linalg.norm(B.T @ m - nu_g))
    mu = 0.0  # Levenberg ridge, escalated when steps fail to decrease
    it = 0
    while res > tol and it < max_iter:
        it += 1
        m, Jm = _masses(cost, X, W, Y, lam, w, need_jacobian=True)
        F = B.T @ m - nu_g
        JG = B.T @ Jm @ B
        G = JG.shape[0]
        ridge_scale = max(np.trace(JG) / G, 1e-30)
        accepted = False
        for _ in range(10):  # ridge escalations
            A = JG[1:, 1:] + np.eye(G - 1) * ((mu + 1e-14) * ridge_scale)
            try:
                dg = np.linalg.solve(A, -F[1:])
            except np.linalg.LinAlgError as exc:
                raise SolverDiverged(
                    f"singular mass Jacobian at iteration {it}"
                ) from exc
            delta = B @ np.concatenate([[0.0], dg])
            alpha = 1.0
            for _ in range(15):
                trial = lam + alpha * delta
                m_new, _ = _masses(cost, X, W, Y, trial, w)
                merit_new = float(np.linalg.norm(B.T @ m_new - nu_g))
                if (
                    merit_new <= merit * (1.0 - 1e-4 * alpha)
                    and m_new.min() >= eps0 * 0.5
                ):
                    lam, m = trial, m_new
                    merit = merit_new
                    res = grouped_residual(m_new)
                    accepted = True
                    mu = mu / 3.0 if mu > 1e-12 else 0.0
                    break
                alpha *= 0.5
            if accepted:
                break
            # the model step failed along its whole ray: damp toward gradient
            mu = 1e-6 if mu == 0.0 else mu * 10.0
        if verbose:
            print(
                f"  newton iter {it}: residual {res:.3e} "
                f"(step {alpha:.1e}, ridge {mu:.1e})"
            )
        if not accepted:
            raise SolverDiverged(
                f"newton stalled at residual {res:.3e} (iteration {it})"
            )
    if res > tol:
        raise SolverDiverged(f"newton did not reach {tol:.1e}; residual {res:.3e}")
    return DualSolution(
        cost, region, density, target, lam - lam[0], w, X, W,
        method="newton", iterations=it, residual=res, tie_groups=tie_groups,
    )


# ---------------------------------------------------------------------------
# independent oracle: exact coordinate ascent with accelerated sweeps


def solve_dual_oracle(
    cost: CostFunction,
    region: Region,
    density: SourceDensity,
    target: DiscreteTarget,
    tol: float = 1e-10,
    max_sweeps: int = 400,
    ramp_width: Optional[float] = None,
    tie_groups: Optional[list[np.ndarray]] = None,
    anderson_depth: int = 6,
    verbose: bool = False,
) -> DualSolution:
    """Coordinate-ascent solve of ``m(λ) = ν`` (the cross-checking oracle).

    Each sweep solves, for every potential coordinate (or tie group), the
    one-dimensional problem ``m_j(t) = ν_j`` exactly with all other
    coordinates frozen at the sweep snapshot — ``m_j`` is continuous and
    strictly increasing in ``t``, so a bracketed root find is exact. Sweeps
    are Jacobi-style (all coordinates from the same snapshot) and
    extrapolated by safeguarded Anderson mixing. Shares only the mass-map
    definition with :func:`solve_dual`, not the algorithm.
    """
    X, W = _quadrature_measure(region, density)
    Y = target.points
    nu = target.weights
    J = len(Y)
    w = _default_ramp_width(cost, X, region.raster.h, Y) if ramp_width is None else float(ramp_width)
    B = _groups_matrix(J, tie_groups)
    G = B.shape[1]
    nu_g = B.T @ nu
    members = [np.flatnonzero(B[:, g]) for g in range(G)]

    lam = _initial_lift(cost, X, Y)
    group_mean = (B.T @ lam) / B.sum(axis=0)
    theta = group_mean.copy()

    def lam_of(th):
        v = B @ th
        return v - v[0]

    def sweep(th):
        """One Jacobi sweep: exact per-group 1-D solves from a shared snapshot.

        The snapshot stores each pixel's top-k dual values so the moving
        group sees every competing sheet that can enter the ramp — the same
        within-pixel information the shared mass map uses, which keeps the
        coordinate solves consistent with the convergence criterion.
        """
        lam_cur = lam_of(th)
        n = len(X)
        K = min(_TOP_K, J)
        snap_v = np.empty((n, K))
        snap_i = np.empty((n, K), dtype=int)
        for s, e in _scan_chunks(n, J):
            vals = lam_cur[None, :] - cost.eval(X[s:e, None, :], Y[None, :, :])
            tv, ti = _top_k(vals, K)
            snap_v[s:e] = tv
            snap_i[s:e] = ti

        th_new = th.copy()
        for g in range(G):
            ids = members[g]
            base = th[g]
            cols = np.stack(
                [cost.eval(X, Y[j][None, :]) for j in ids], axis=1
            )  # (n, |g|)
            own0 = lam_cur[ids][None, :] - cols  # own sheets at shift 0
            own_max0 = own0.max(axis=1)
            others = np.where(np.isin(snap_i, ids), -np.inf, snap_v)  # (n, K)
            b_other = others.max(axis=1)

            def mass_of(t):
                shift = t - base
                cand = own_max0 + shift >= b_other - 2.0 * w
                if not np.any(cand):
                    return 0.0
                vo = own0[cand] + shift
                ov = others[cand]
                vmax = np.maximum(vo.max(axis=1), b_other[cand])
                tau = vmax - w
                r_own = np.maximum(vo - tau[:, None], 0.0).sum(axis=1)
                r_oth = np.maximum(ov - tau[:, None], 0.0).sum(axis=1)
                return float((W[cand] * (r_own / (r_own + r_oth))).sum())

            def fg(t):
                return mass_of(t) - nu_g[g]

            lo = hi = base
            step = max(4.0 * w, 1e-3)
            flo = fg(lo)
            while flo > 0.0:
                lo -= step
                step *= 2.0
                flo = fg(lo)
                if lo < base - 1e6:
                    raise SolverDiverged("oracle bracket failed (low side)")
            step = max(4.0 * w, 1e-3)
            fhi = fg(hi)
            while fhi < 0.0:
                hi += step
                step *= 2.0
                fhi = fg(hi)
                if hi > base + 1e6:
                    raise SolverDiverged("oracle bracket failed (high side)")
            if lo == hi:
                th_new[g] = lo
            else:
                th_new[g] = optimize.brentq(fg, lo, hi, xtol=1e-14, rtol=8.9e-16)
        return th_new

    history_t: list[np.ndarray] = []
    history_g: list[np.ndarray] = []
    res = np.inf
    it = 0
    for it in range(1, max_sweeps + 1):
        m, _ = _masses(cost, X, W, Y, lam_of(theta), w)
        res = float(np.abs(B.T @ m - nu_g).max())  # group sums; see solve_dual
        if verbose:
            print(f"  oracle sweep {it}: residual {res:.3e}")
        if res <= tol:
            break
        th_im = sweep(theta)
        gvec = th_im - theta
        history_t.append(theta.copy())
        history_g.append(gvec.copy())
        if len(history_t) > anderson_depth + 1:
            history_t.pop(0)
            history_g.pop(0)
        if len(history_t) >= 2:
            Tm = np.stack(history_t, axis=1)
            Gm = np.stack(history_g, axis=1)
            dT = np.diff(Tm, axis=1)
            dG = np.diff(Gm, axis=1)
            gamma, *_ = np.linalg.lstsq(dG, gvec, rcond=None)
            cand = theta + gvec - (dT + dG) @ gamma
            # safeguard: reject wild extrapolations
            if np.all(np.isfinite(cand)) and np.linalg.norm(
                cand - theta
            ) <= 25.0 * np.linalg.norm(gvec) + 1e-12:
                theta = cand
            else:
                theta = theta + 0.5 * gvec  # damped plain sweep
                history_t.clear()
                history_g.clear()
        else:
            theta = theta + 0.5 * gvec  # damped until mixing has history
    if res > tol:
        raise SolverDiverged(f"oracle did not reach {tol:.1e}; residual {res:.3e}")
    return DualSolution(
        cost, region, density, target, lam_of(theta), w, X, W,
        method="coordinate", iterations=it, residual=res, tie_groups=tie_groups,
    )


# ---------------------------------------------------------------------------
# tessellation raster


@dataclass
class Tessellation:
    """Laguerre tessellation of the region raster under a dual solution.

    ``assign``/``gap``/``u`` are full-raster images (row-major ``(ny, nx)``);
    ``inside`` marks cells whose center lies in the source region. ``gap``
    is the top-two dual value gap — the raw nondifferentiability indicator;
    cells with ``gap < gap_tol`` form ``boundary``. ``masses`` uses the same
    smoothed partition as the solvers, so it reproduces the solver residual
    exactly.
    """

    solution: DualSolution
    gap_tol: float
    assign: np.ndarray
    gap: np.ndarray
    u: np.ndarray
    inside: np.ndarray
    boundary: np.ndarray
    masses: np.ndarray
    top_vals: np.ndarray  # (n_cells, K) dual values, descending
    top_idx: np.ndarray  # (n_cells, K) their target indices

    @property
    def raster(self):
        return self.solution.region.raster


def default_gap_tol(solution: DualSolution) -> float:
    """The documented default ``10 · h · max|D_x c|`` over pixel-target
    pairs — deliberately conservative; scenario presets override it."""
    X = solution.X
    rng = np.random.default_rng(0)
    take = rng.choice(len(X), size=min(1024, len(X)), replace=False)
    g = solution.cost.grad_x(
        X[take][:, None, :], solution.target.points[None, :, :]
    )
    gmax = float(np.linalg.norm(g, axis=-1).max())
    return 10.0 * solution.region.raster.h * gmax


def laguerre_assign(solution: DualSolution, gap_tol: Optional[float] = None) -> Tessellation:
    """Rasterize a dual solution into its Laguerre tessellation."""
    region = solution.region
    raster = region.raster
    centers = raster.centers()
    J = solution.target.n
    n = len(centers)
    K = min(_TOP_K, J)
    top_vals = np.empty((n, K))
    top_idx = np.empty((n, K), dtype=int)
    masses = np.zeros(J)
    # cell weights normalized identically to the solver's quadrature measure
    cov = region.coverage.ravel()
    dens = solution.density(centers)
    h2 = raster.h**2
    cellw = cov * dens * h2
    cellw = cellw / cellw.sum()

    for s, e in _scan_chunks(n, J):
        vals = solution.lam[None, :] - solution.cost.eval(
            centers[s:e, None, :], solution.target.points[None, :, :]
        )
        tv, ti = _top_k(vals, K)
        top_vals[s:e] = tv
        top_idx[s:e] = ti
        Q = _ramp_partition(tv, solution.ramp_width)
        np.add.at(masses, ti.ravel(), (cellw[s:e, None] * Q).ravel())

    gap = top_vals[:, 0] - (top_vals[:, 1] if K > 1 else -np.inf)
    if gap_tol is None:
        gap_tol = default_gap_tol(solution)
    shape = raster.shape
    return Tessellation(
        solution=solution,
        gap_tol=float(gap_tol),
        assign=top_idx[:, 0].reshape(shape),
        gap=gap.reshape(shape),
        u=top_vals[:, 0].reshape(shape),
        inside=region.mask.copy(),
        boundary=(gap < gap_tol).reshape(shape) & region.mask,
        masses=masses,
        top_vals=top_vals,
        top_idx=top_idx,
    )


# ---------------------------------------------------------------------------
# transport map and pushforward


@dataclass
class TransportResult:
    """Vector of mapped targets with tie diagnostics."""

    targets: np.ndarray
    indices: np.ndarray
    gap: np.ndarray
    tie_mask: np.ndarray


def transport_map(
    solution: DualSolution, points: np.ndarray, tie_tol: float = 1e-12
) -> TransportResult:
    """Evaluate the optimal map at source points.

    The map sends ``x`` to the target of its best dual value sheet. As an
    internal consistency assertion, the cost exponential of the potential's
    gradient on the active sheet must return the assigned target to 1e−9
    (the two routes to the map must agree). Points whose top-two gap is
    below ``tie_tol`` are flagged in ``tie_mask``: the map is not single
    valued there.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tv, ti = solution.values_top(pts, k=2)
    idx = ti[:, 0]
    targets = solution.target.points[idx]
    gap = tv[:, 0] - (tv[:, 1] if tv.shape[1] > 1 else -np.inf)
    tie = gap < tie_tol

    # dual-route agreement: through the active sheet's gradient
    grad = -solution.cost.grad_x(pts, targets)
    back = c_exp(solution.cost, pts, grad, strict=False)
    err = np.linalg.norm(back - targets, axis=1)
    if np.any(err > 1e-9 * (1.0 + np.linalg.norm(targets, axis=1))):
        raise SolverDiverged("transport map routes disagree beyond 1e-9")
    return TransportResult(targets=targets, indices=idx, gap=gap, tie_mask=tie)


@dataclass
class PushforwardReport:
    n_samples: int
    counts: np.ndarray
    expected: np.ndarray
    max_z: float
    z_tol: float
    passed: bool


def pushforward_check(
    solution: DualSolution,
    n_samples: int = 200_000,
    seed: int = 0,
    z_tol: float = 5.0,
) -> PushforwardReport:
    """Monte-Carlo check that the map pushes the source law to the weights.

    Samples the source density by rejection, maps the samples, and compares
    per-target counts with a multinomial z-score; ``max_z <= z_tol`` passes.
    """
    rng = np.random.default_rng(seed)
    region = solution.region
    f = solution.density
    fmax = float(f(solution.X).max()) * (1.0 + 1e-12)
    samples = np.empty((n_samples, 2))
    got = 0
    while got < n_samples:
        cand = region.sample_points(2 * (n_samples - got), rng)
        keep = rng.random(len(cand)) * fmax <= f(cand)
        cand = cand[keep][: n_samples - got]
        samples[got : got + len(cand)] = cand
        got += len(cand)

    res = transport_map(solution, samples)
    counts = np.bincount(res.indices, minlength=solution.target.n).astype(float)
    nu = solution.target.weights
    expected = nu * n_samples
    sd = np.sqrt(np.maximum(expected * (1.0 - nu), 1e-12))
    z = np.abs(counts - expected) / sd
    max_z = float(z.max())
    return PushforwardReport(
        n_samples=n_samples,
        counts=counts,
        expected=expected,
        max_z=max_z,
        z_tol=z_tol,
        passed=bool(max_z <= z_tol),
    )
