"""Transport cost functions on the plane and their differential structure.

Four built-in cost families are provided, each with analytic gradients,
second derivatives, validity domains, and closed-form momentum charts:

``quadratic``
    ``c(x, x̄) = |x − x̄|² / 2``
``bilinear``
    ``c(x, x̄) = −⟨x, x̄⟩``
``log``
    ``c(x, x̄) = −log |x − x̄|``, valid only for ``|x − x̄| ≥ 1e−3``
``sqrt_plus``
    ``c(x, x̄) = sqrt(1 + |x − x̄|²)``

Conventions used throughout the package:

* the momentum (co-vector) of a pair is ``p = −D_x c(x, x̄)``;
* ``cross_hessian(x, x̄)[i, j] = −∂²c/∂x_i ∂x̄_j`` (identity for the
  quadratic cost); its non-vanishing determinant is the local injectivity
  condition for the momentum map;
* the cost exponential ``c_exp(x, p)`` is the unique ``x̄`` with
  ``−D_x c(x, x̄) = p``, i.e. the inverse momentum chart.

All evaluation callables broadcast over leading axes: ``x`` and ``x̄`` are
``(..., 2)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidPair, OutOfChart, SolverDiverged

__all__ = [
    "COST_IDS",
    "LOG_MIN_SEPARATION",
    "CostFunction",
    "make_cost",
    "c_exp",
    "c_exp_bar",
    "MtwEvaluation",
    "mtw_term",
    "mtw_batch",
    "StructuralReport",
    "verify_structural",
]

COST_IDS = ("quadratic", "bilinear", "log", "sqrt_plus")

# points closer than this violate the log cost's validity domain
LOG_MIN_SEPARATION = 1e-3

_I2 = np.eye(2)


# ---------------------------------------------------------------------------
# cost definition


@dataclass(frozen=True)
class CostFunction:
    """A transport cost together with its analytic differential data.

    Attributes
    ----------
    cost_id : str
        One of :data:`COST_IDS`.
    eval, grad_x, grad_xbar, hess_x, cross_hessian : callables
        Broadcasting evaluators; see the module docstring for conventions.
        ``hess_x`` returns ``D²_x c`` as ``(..., 2, 2)``; ``cross_hessian``
        returns ``−D_x D_x̄ c``.
    valid_pair : callable
        Boolean mask of pairs inside the cost's validity domain.
    source_chart, target_chart : tuple or None
        Optional axis-aligned boxes ``(xmin, xmax, ymin, ymax)`` declaring
        where each side of the cost is trusted; exponentials that step
        outside a declared chart raise :class:`~otlab.errors.OutOfChart`.
    c_exp_closed, c_exp_bar_closed : callables or None
        Closed-form inverse momentum charts for the source and target side.
    """

    cost_id: str
    eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_x: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_xbar: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hess_x: Callable[[np.ndarray, np.ndarray], np.ndarray]
    cross_hessian: Callable[[np.ndarray, np.ndarray], np.ndarray]
    valid_pair: Callable[[np.ndarray, np.ndarray], np.ndarray]
    source_chart: Optional[tuple] = None
    target_chart: Optional[tuple] = None
    c_exp_closed: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    c_exp_bar_closed: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __repr__(self) -> str:  # keep dataclass noise out of test output
        return f"CostFunction({self.cost_id!r})"


def _pts(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape[-1] != 2:
        raise ValueError("points must have a trailing axis of length 2")
    return a


def _outer(d: np.ndarray) -> np.ndarray:
    return d[..., :, None] * d[..., None, :]


def _eye_like(d: np.ndarray) -> np.ndarray:
    return np.broadcast_to(_I2, d.shape[:-1] + (2, 2)).copy()


def in_chart(points: np.ndarray, chart: Optional[tuple]) -> np.ndarray:
    """Boolean mask of points inside an axis-aligned chart box (or all-True)."""
    points = _pts(points)
    if chart is None:
        return np.ones(points.shape[:-1], dtype=bool)
    xmin, xmax, ymin, ymax = chart
    x, y = points[..., 0], points[..., 1]
    return (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)


def _quadratic_parts():
    def ev(x, xb):
        d = _pts(x) - _pts(xb)
        return 0.5 * np.einsum("...i,...i->...", d, d)

    def gx(x, xb):
        return _pts(x) - _pts(xb)

    def gxb(x, xb):
        return _pts(xb) - _pts(x)

    def hx(x, xb):
        return _eye_like(np.broadcast_arrays(_pts(x), _pts(xb))[0])

    cross = hx

    def valid(x, xb):
        return np.ones(np.broadcast_shapes(_pts(x).shape, _pts(xb).shape)[:-1], bool)

    def cexp(x, p):
        return _pts(x) + _pts(p)

    def cexp_bar(xb, q):
        return _pts(xb) + _pts(q)

    return ev, gx, gxb, hx, cross, valid, cexp, cexp_bar


def _bilinear_parts():
    def ev(x, xb):
        return -np.einsum("...i,...i->...", _pts(x), _pts(xb))

    def gx(x, xb):
        return -np.broadcast_arrays(_pts(x), _pts(xb))[1].copy()

    def gxb(x, xb):
        return -np.broadcast_arrays(_pts(x), _pts(xb))[0].copy()

    def hx(x, xb):
        return np.zeros(np.broadcast_shapes(_pts(x).shape, _pts(xb).shape)[:-1] + (2, 2))

    def cross(x, xb):
        return _eye_like(np.broadcast_arrays(_pts(x), _pts(xb))[0])

    def valid(x, xb):
        return np.ones(np.broadcast_shapes(_pts(x).shape, _pts(xb).shape)[:-1], bool)

    def cexp(x, p):
        return np.broadcast_arrays(_pts(x), _pts(p))[1].copy()

    def cexp_bar(xb, q):
        return np.broadcast_arrays(_pts(xb), _pts(q))[1].copy()

    return ev, gx, gxb, hx, cross, valid, cexp, cexp_bar


def _log_parts():
    def _d_r2(x, xb):
        d = _pts(x) - _pts(xb)
        return d, np.einsum("...i,...i->...", d, d)

    def ev(x, xb):
        _, r2 = _d_r2(x, xb)
        return -0.5 * np.log(r2)

    def gx(x, xb):
        d, r2 = _d_r2(x, xb)
        return -d / r2[..., None]

    def gxb(x, xb):
        d, r2 = _d_r2(x, xb)
        return d / r2[..., None]

    def hx(x, xb):
        d, r2 = _d_r2(x, xb)
        r2 = r2[..., None, None]
        return (2.0 * _outer(d) - r2 * _I2) / (r2 * r2)

    cross = hx  # cost depends on x − x̄ only, so −D_x D_x̄ c = D²_x c

    def valid(x, xb):
        _, r2 = _d_r2(x, xb)
        return r2 >= LOG_MIN_SEPARATION**2

    def cexp(x, p):
        p = _pts(p)
        n2 = np.einsum("...i,...i->...", p, p)
        if np.any(n2 == 0.0):
            raise OutOfChart("log cost: zero momentum has no finite target")
        return _pts(x) - p / n2[..., None]

    def cexp_bar(xb, q):
        q = _pts(q)
        n2 = np.einsum("...i,...i->...", q, q)
        if np.any(n2 == 0.0):
            raise OutOfChart("log cost: zero momentum has no finite source")
        return _pts(xb) - q / n2[..., None]

    return ev, gx, gxb, hx, cross, valid, cexp, cexp_bar


def _sqrt_plus_parts():
    def _d_w(x, xb):
        d = _pts(x) - _pts(xb)
        w = np.sqrt(1.0 + np.einsum("...i,...i->...", d, d))
        return d, w

    def ev(x, xb):
        return _d_w(x, xb)[1]

    def gx(x, xb):
        d, w = _d_w(x, xb)
        return d / w[..., None]

    def gxb(x, xb):
        d, w = _d_w(x, xb)
        return -d / w[..., None]

    def hx(x, xb):
        d, w = _d_w(x, xb)
        w = w[..., None, None]
        return (_I2 - _outer(d) / (w * w)) / w

    cross = hx

    def valid(x, xb):
        return np.ones(np.broadcast_shapes(_pts(x).shape, _pts(xb).shape)[:-1], bool)

    def _stretch(p):
        p = _pts(p)
        n2 = np.einsum("...i,...i->...", p, p)
        if np.any(n2 >= 1.0):
            raise OutOfChart(
                "sqrt_plus cost: momentum outside the open unit ball is unreachable"
            )
        return p / np.sqrt(1.0 - n2)[..., None]

    def cexp(x, p):
        return _pts(x) + _stretch(p)

    def cexp_bar(xb, q):
        return _pts(xb) + _stretch(q)

    return ev, gx, gxb, hx, cross, valid, cexp, cexp_bar


_PART_BUILDERS = {
    "quadratic": _quadratic_parts,
    "bilinear": _bilinear_parts,
    "log": _log_parts,
    "sqrt_plus": _sqrt_plus_parts,
}


def make_cost(
    cost_id: str,
    source_chart: Optional[tuple] = None,
    target_chart: Optional[tuple] = None,
) -> CostFunction:
    """Build one of the built-in cost functions.

    Parameters
    ----------
    cost_id : str
        One of ``quadratic``, ``bilinear``, ``log``, ``sqrt_plus``.
    source_chart, target_chart : tuple, optional
        Axis-aligned boxes ``(xmin, xmax, ymin, ymax)`` restricting where
        each side of the cost is used; exponentials landing outside a
        declared chart raise :class:`~otlab.errors.OutOfChart`.
    """
    if cost_id not in _PART_BUILDERS:
        raise ValueError(f"unknown cost_id {cost_id!r}; expected one of {COST_IDS}")
    ev, gx, gxb, hx, cross, valid, cexp, cexp_bar = _PART_BUILDERS[cost_id]()
    return CostFunction(
        cost_id=cost_id,
        eval=ev,
        grad_x=gx,
        grad_xbar=gxb,
        hess_x=hx,
        cross_hessian=cross,
        valid_pair=valid,
        source_chart=source_chart,
        target_chart=target_chart,
        c_exp_closed=cexp,
        c_exp_bar_closed=cexp_bar,
    )


# ---------------------------------------------------------------------------
# cost exponentials


def _solve22(mats: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve batched 2x2 linear systems by the explicit inverse."""
    a = mats[..., 0, 0]
    b = mats[..., 0, 1]
    c = mats[..., 1, 0]
    d = mats[..., 1, 1]
    det = a * d - b * c
    out = np.empty_like(rhs)
    out[..., 0] = (d * rhs[..., 0] - b * rhs[..., 1]) / det
    out[..., 1] = (-c * rhs[..., 0] + a * rhs[..., 1]) / det
    return out


def _newton_c_exp(cost: CostFunction, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Invert the momentum map by safeguarded Newton iteration.

    Initialization scans candidate targets on the ray through the momentum
    direction (both orientations, logarithmic radii) and keeps the best
    valid residual, so no closed-form knowledge is used.
    """
    x = np.atleast_2d(_pts(x))
    p = np.atleast_2d(_pts(p))
    x, p = np.broadcast_arrays(x, p)
    x = x.astype(float, copy=True)
    p = p.astype(float, copy=True)
    n = x.shape[0]

    pnorm = np.linalg.norm(p, axis=-1)
    phat = np.where(pnorm[:, None] > 0, p / np.maximum(pnorm, 1e-300)[:, None], [1.0, 0.0])

    def residual(xb):
        return -cost.grad_x(x, xb) - p

    # candidate starts: the quadratic guess plus x ± s p̂ over log-spaced s
    best = x + p
    ok = cost.valid_pair(x, best)
    best_err = np.where(ok, np.linalg.norm(residual(best), axis=-1), np.inf)
    scales = np.concatenate([[0.0], np.logspace(-3, 3, 25)])
    for sgn in (1.0, -1.0):
        for s in scales:
            cand = x + sgn * s * phat
            ok = cost.valid_pair(x, cand)
            if not np.any(ok):
                continue
            err = np.where(ok, np.linalg.norm(residual(cand), axis=-1), np.inf)
            take = err < best_err
            best[take] = cand[take]
            best_err = np.minimum(best_err, err)
    if not np.all(np.isfinite(best_err)):
        raise SolverDiverged("no valid starting point for the momentum inversion")

    xb = best
    tol = 1e-13 * (1.0 + pnorm)
    for _ in range(80):
        F = residual(xb)
        fn = np.linalg.norm(F, axis=-1)
        active = fn > tol
        if not np.any(active):
            break
        step = _solve22(cost.cross_hessian(x, xb), -F)
        # backtracking on the residual norm, keeping pairs valid
        alpha = np.where(active, 1.0, 0.0)
        done = ~active
        for _ in range(40):
            trial = xb + alpha[:, None] * step
            ok = cost.valid_pair(x, trial)
            fn_new = np.where(ok, np.linalg.norm(residual(trial), axis=-1), np.inf)
            accept = ~done & (fn_new <= fn * (1.0 - 1e-4 * alpha))
            xb[accept] = trial[accept]
            done |= accept
            if np.all(done):
                break
            alpha = np.where(done, alpha, alpha * 0.5)
        if not np.all(done):
            # no descent even with tiny steps: treat as converged-or-stuck
            break
    F = residual(xb)
    bad = np.linalg.norm(F, axis=-1) > 1e-10 * (1.0 + pnorm)
    if np.any(bad):
        raise SolverDiverged(
            f"momentum inversion failed for {int(bad.sum())} of {n} points"
        )
    return xb


def _chart_check(points: np.ndarray, chart: Optional[tuple], side: str) -> None:
    ok = in_chart(points, chart)
    if not np.all(ok):
        raise OutOfChart(f"{int((~ok).sum())} point(s) left the declared {side} chart")


def c_exp(
    cost: CostFunction,
    x: np.ndarray,
    p: np.ndarray,
    method: str = "auto",
    strict: bool = True,
) -> np.ndarray:
    """Cost exponential: the target ``x̄`` with ``−D_x c(x, x̄) = p``.

    Parameters
    ----------
    method : {"auto", "closed", "newton"}
        ``closed`` uses the analytic inverse chart, ``newton`` a safeguarded
        iterative inversion (independent of the closed form), ``auto``
        prefers the closed form when available.
    strict : bool
        When true (default), verify the defining equation to ``1e−10``
        relative accuracy and check declared charts, raising on failure.

    Returns
    -------
    (..., 2) array of targets, broadcast like ``x`` and ``p``.
    """
    x = _pts(x)
    p = _pts(p)
    if method not in ("auto", "closed", "newton"):
        raise ValueError("method must be auto, closed, or newton")
    if method == "closed" or (method == "auto" and cost.c_exp_closed is not None):
        if cost.c_exp_closed is None:
            raise ValueError(f"cost {cost.cost_id!r} has no closed-form exponential")
        xb = cost.c_exp_closed(x, p)
    else:
        shape = np.broadcast_shapes(x.shape, p.shape)
        xb = _newton_c_exp(cost, x.reshape(-1, 2) if x.shape == shape else np.broadcast_to(x, shape).reshape(-1, 2),
                           np.broadcast_to(p, shape).reshape(-1, 2)).reshape(shape)
    if strict:
        pn = np.linalg.norm(p, axis=-1)
        res = np.linalg.norm(-cost.grad_x(x, xb) - p, axis=-1)
        if np.any(res > 1e-10 * (1.0 + pn)):
            raise SolverDiverged("cost exponential failed its defining equation")
        if not np.all(cost.valid_pair(x, xb)):
            raise InvalidPair("cost exponential produced a pair outside the validity domain")
        _chart_check(xb, cost.target_chart, "target")
    return xb


def c_exp_bar(
    cost: CostFunction,
    xbar: np.ndarray,
    q: np.ndarray,
    strict: bool = True,
) -> np.ndarray:
    """Target-side exponential: the source ``x`` with ``−D_x̄ c(x, x̄) = q``."""
    xbar = _pts(xbar)
    q = _pts(q)
    if cost.c_exp_bar_closed is None:
        raise ValueError(f"cost {cost.cost_id!r} has no closed-form target exponential")
    xs = cost.c_exp_bar_closed(xbar, q)
    if strict:
        qn = np.linalg.norm(q, axis=-1)
        res = np.linalg.norm(-cost.grad_xbar(xs, xbar) - q, axis=-1)
        if np.any(res > 1e-10 * (1.0 + qn)):
            raise SolverDiverged("target exponential failed its defining equation")
        if not np.all(cost.valid_pair(xs, xbar)):
            raise InvalidPair("target exponential produced an invalid pair")
        _chart_check(xs, cost.source_chart, "source")
    return xs


# ---------------------------------------------------------------------------
# curvature term


@dataclass(frozen=True)
class MtwEvaluation:
    """One evaluation of the transport curvature term.

    ``value`` is the second derivative at ``t = 0`` of
    ``t ↦ −D²_x c(x, x̄(t))(V, V)`` along the momentum ray
    ``x̄(t) = c_exp(x, p₀ + t·η⊥)``, where ``p₀`` is the momentum of the
    pair and ``η⊥`` is ``eta`` with its component along ``V`` removed.
    Nonnegativity of this quantity over all such configurations is the
    classical sign condition for regular transport.
    """

    x: np.ndarray
    xbar: np.ndarray
    V: np.ndarray
    eta: np.ndarray
    eta_perp: np.ndarray
    value: float
    fd_error: float


def mtw_batch(
    cost: CostFunction,
    x: np.ndarray,
    xbar: np.ndarray,
    V: np.ndarray,
    eta: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized curvature term over batched configurations.

    Returns ``(values, fd_errors, eta_perp)``; see :class:`MtwEvaluation`.
    Uses analytic second derivatives in space and Richardson-extrapolated
    central differences in the ray parameter only.
    """
    x = np.atleast_2d(_pts(x))
    xbar = np.atleast_2d(_pts(xbar))
    V = np.atleast_2d(_pts(V))
    eta = np.atleast_2d(_pts(eta))
    x, xbar, V, eta = np.broadcast_arrays(x, xbar, V, eta)
    x = x.astype(float)
    xbar = xbar.astype(float)
    n = x.shape[0]

    if not np.all(cost.valid_pair(x, xbar)):
        raise InvalidPair("curvature term requested on an invalid pair")

    p0 = -cost.grad_x(x, xbar)
    v2 = np.einsum("ij,ij->i", V, V)
    keep = v2 > 0
    coef = np.where(keep, np.einsum("ij,ij->i", eta, V) / np.where(keep, v2, 1.0), 0.0)
    eta_perp = eta - coef[:, None] * V

    en = np.linalg.norm(eta_perp, axis=-1)
    pn = np.linalg.norm(p0, axis=-1)
    live = en > 1e-14 * (1.0 + np.linalg.norm(eta, axis=-1))

    values = np.zeros(n)
    errors = np.zeros(n)
    if np.any(live):
        el = en[live]
        pl = pn[live]
        h = 0.05 * np.maximum(pl, 0.1) / el
        if cost.cost_id == "sqrt_plus":
            # stay strictly inside the unit momentum ball
            h = np.minimum(h, 0.3 * (1.0 - pl) / el)
        elif cost.cost_id == "log":
            # keep the momentum away from 0 and from the validity edge
            h = np.minimum(h, 0.45 * pl / el)
            h = np.minimum(h, 0.45 * (1.0 / LOG_MIN_SEPARATION - pl) / el)
        if np.any(h <= 0):
            raise InvalidPair("no admissible ray step for the curvature term")

        xl = x[live]
        Vl = V[live]
        p0l = p0[live]
        etal = eta_perp[live]
        m = len(xl)

        def stencil(hh, idx):
            # offsets in units of hh: 0, ±1, ±1/2, ±1/4
            offs = np.array([0.0, 1.0, -1.0, 0.5, -0.5, 0.25, -0.25])
            tt = offs[:, None] * hh[None, :]
            mom = p0l[idx][None, :, :] + tt[:, :, None] * etal[idx][None, :, :]
            xb_t = c_exp(cost, xl[idx][None, :, :], mom, method="auto", strict=False)
            H = cost.hess_x(xl[idx][None, :, :], xb_t)
            g = -np.einsum("ki,skij,kj->sk", Vl[idx], H, Vl[idx])
            d1 = (g[1] + g[2] - 2.0 * g[0]) / hh**2
            d2 = (g[3] + g[4] - 2.0 * g[0]) / (0.5 * hh) ** 2
            d3 = (g[5] + g[6] - 2.0 * g[0]) / (0.25 * hh) ** 2
            r1 = (4.0 * d2 - d1) / 3.0
            r2 = (4.0 * d3 - d2) / 3.0
            val = (16.0 * r2 - r1) / 15.0
            trunc = np.abs(r2 - r1)
            gmax = np.max(np.abs(g), axis=0)
            rounding = 16.0 * np.finfo(float).eps * gmax / (0.25 * hh) ** 2
            return val, trunc, rounding

        # halve the ray step until the truncation estimate meets the target
        # or rounding error starts to dominate
        val = np.zeros(m)
        err = np.full(m, np.inf)
        active = np.arange(m)
        for _ in range(10):
            v, trunc, rounding = stencil(h[active], active)
            val[active] = v
            err[active] = trunc + rounding
            tol = 1e-9 * np.maximum(1.0, np.abs(v))
            refine = (trunc + rounding > tol) & (trunc > rounding)
            if not np.any(refine):
                break
            active = active[refine]
            h[active] *= 0.5

        values[live] = val
        errors[live] = err
    return values, errors, eta_perp


def mtw_term(
    cost: CostFunction,
    x: np.ndarray,
    xbar: np.ndarray,
    V: np.ndarray,
    eta: np.ndarray,
) -> MtwEvaluation:
    """Curvature term for a single configuration; see :class:`MtwEvaluation`."""
    values, errors, eta_perp = mtw_batch(cost, x, xbar, V, eta)
    return MtwEvaluation(
        x=np.asarray(x, float),
        xbar=np.asarray(xbar, float),
        V=np.asarray(V, float),
        eta=np.asarray(eta, float),
        eta_perp=eta_perp[0],
        value=float(values[0]),
        fd_error=float(errors[0]),
    )


# ---------------------------------------------------------------------------
# structural verification


@dataclass
class StructuralReport:
    """PASS/FAIL summary of the structural checks for one cost function."""

    cost_id: str
    n_pairs: int
    seed: int
    twist_min_gap: float
    twist_pass: bool
    min_abs_det_cross: float
    nondegenerate_pass: bool
    roundtrip_max_err: float
    roundtrip_pass: bool
    route_max_err: float
    route_pass: bool
    mtw_min: float
    mtw_abs_max: float
    mtw_flat_family: bool
    mtw_pass: bool

    @property
    def all_pass(self) -> bool:
        return (
            self.twist_pass
            and self.nondegenerate_pass
            and self.roundtrip_pass
            and self.route_pass
            and self.mtw_pass
        )

    def lines(self) -> list[str]:
        def pf(ok: bool) -> str:
            return "PASS" if ok else "FAIL"

        out = [f"cost={self.cost_id} pairs={self.n_pairs} seed={self.seed}"]
        out.append(
            f"  momentum injectivity    {pf(self.twist_pass)}  min gap {self.twist_min_gap:.3e}"
        )
        out.append(
            f"  cross nondegeneracy     {pf(self.nondegenerate_pass)}  min |det| {self.min_abs_det_cross:.3e}"
        )
        out.append(
            f"  exponential round-trip  {pf(self.roundtrip_pass)}  max err {self.roundtrip_max_err:.3e}"
        )
        out.append(
            f"  closed-vs-newton route  {pf(self.route_pass)}  max err {self.route_max_err:.3e}"
        )
        if self.mtw_flat_family:
            out.append(
                f"  curvature term (flat)   {pf(self.mtw_pass)}  max |value| {self.mtw_abs_max:.3e}"
            )
        else:
            out.append(
                f"  curvature sign          {pf(self.mtw_pass)}  min value {self.mtw_min:.3e}"
            )
        return out

    def __str__(self) -> str:
        return "\n".join(self.lines())


def _sample_box(rng: np.random.Generator, box: tuple, n: int) -> np.ndarray:
    xmin, xmax, ymin, ymax = box
    pts = rng.random((n, 2))
    pts[:, 0] = xmin + pts[:, 0] * (xmax - xmin)
    pts[:, 1] = ymin + pts[:, 1] * (ymax - ymin)
    return pts


def verify_structural(
    cost: CostFunction,
    source_box: tuple = (-1.2, 1.2, -1.2, 1.2),
    target_box: tuple = (-1.2, 1.2, -1.2, 1.2),
    n_base: int = 8,
    n_targets: int = 25,
    seed: int = 0,
) -> StructuralReport:
    """Sample-based verification of the structural properties of a cost.

    Checks, over seeded random pairs drawn from the boxes:

    * injectivity of the momentum map ``x̄ ↦ −D_x c(x, x̄)`` at fixed ``x``
      (distinct targets must give momenta separated by more than ``1e−9``);
    * non-vanishing cross-Hessian determinant;
    * the closed-form exponential inverts the momentum map to ``1e−10``;
    * closed-form and Newton inversions agree to ``1e−9``;
    * sign of the curvature term: ``≥ −1e−8`` for the curved families,
      ``|value| ≤ 1e−9`` for the flat (quadratic/bilinear) families.
    """
    rng = np.random.default_rng(seed)
    xs = _sample_box(rng, source_box, n_base)
    xbs = np.empty((n_base, n_targets, 2))
    for k in range(n_base):
        got = 0
        while got < n_targets:
            cand = _sample_box(rng, target_box, n_targets - got)
            ok = cost.valid_pair(xs[k], cand)
            cand = cand[ok]
            xbs[k, got : got + len(cand)] = cand
            got += len(cand)

    x_flat = np.repeat(xs, n_targets, axis=0)
    xb_flat = xbs.reshape(-1, 2)
    n_pairs = len(x_flat)

    # momentum injectivity per base point
    twist_min = np.inf
    for k in range(n_base):
        p = -cost.grad_x(xs[k], xbs[k])
        dp = np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)
        dxb = np.linalg.norm(xbs[k][:, None, :] - xbs[k][None, :, :], axis=-1)
        mask = dxb > 1e-9
        if np.any(mask):
            twist_min = min(twist_min, float(dp[mask].min()))
    twist_pass = twist_min > 1e-9

    # cross-Hessian determinant
    E = cost.cross_hessian(x_flat, xb_flat)
    det = E[:, 0, 0] * E[:, 1, 1] - E[:, 0, 1] * E[:, 1, 0]
    min_det = float(np.abs(det).min())
    nd_pass = min_det > 1e-12

    # round-trip through the closed-form exponential
    p_flat = -cost.grad_x(x_flat, xb_flat)
    xb_back = c_exp(cost, x_flat, p_flat, method="closed", strict=False)
    rt = np.linalg.norm(xb_back - xb_flat, axis=-1) / (
        1.0 + np.linalg.norm(xb_flat, axis=-1)
    )
    rt_max = float(rt.max())
    rt_pass = rt_max <= 1e-10

    # closed vs newton route agreement (on a subsample to stay fast)
    idx = rng.choice(n_pairs, size=min(40, n_pairs), replace=False)
    xb_newton = c_exp(cost, x_flat[idx], p_flat[idx], method="newton", strict=False)
    route = np.linalg.norm(xb_newton - xb_back[idx], axis=-1) / (
        1.0 + np.linalg.norm(xb_back[idx], axis=-1)
    )
    route_max = float(route.max())
    route_pass = route_max <= 1e-9

    # curvature sign on random orthogonal frames
    theta = rng.random(n_pairs) * 2.0 * np.pi
    Vmag = 0.5 + rng.random(n_pairs)
    emag = 0.5 + rng.random(n_pairs)
    V = np.stack([np.cos(theta), np.sin(theta)], axis=-1) * Vmag[:, None]
    eta = np.stack([-np.sin(theta), np.cos(theta)], axis=-1) * emag[:, None]
    vals, _, _ = mtw_batch(cost, x_flat, xb_flat, V, eta)
    mtw_min = float(vals.min())
    mtw_abs_max = float(np.abs(vals).max())
    flat = cost.cost_id in ("quadratic", "bilinear")
    mtw_pass = (mtw_abs_max <= 1e-9) if flat else (mtw_min >= -1e-8)

    return StructuralReport(
        cost_id=cost.cost_id,
        n_pairs=n_pairs,
        seed=seed,
        twist_min_gap=twist_min,
        twist_pass=twist_pass,
        min_abs_det_cross=min_det,
        nondegenerate_pass=nd_pass,
        roundtrip_max_err=rt_max,
        roundtrip_pass=rt_pass,
        route_max_err=route_max,
        route_pass=route_pass,
        mtw_min=mtw_min,
        mtw_abs_max=mtw_abs_max,
        mtw_flat_family=flat,
        mtw_pass=mtw_pass,
    )
