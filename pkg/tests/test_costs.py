"""Cost-function layer: derivative oracles, exponential inverses, curvature.

Derivative checks compare every analytic callable against central finite
differences of the scalar evaluation only, so an error in any closed form
cannot hide. Curvature values are pinned against hand-derived closed forms
(see the inline derivations) and against a fully finite-difference oracle
that never touches the analytic Hessians.
"""

import numpy as np
import pytest

from otlab.costs import (
    COST_IDS,
    LOG_MIN_SEPARATION,
    c_exp,
    c_exp_bar,
    make_cost,
    mtw_batch,
    mtw_term,
    verify_structural,
)
from otlab.errors import InvalidPair, OutOfChart


def sample_pairs(cost_id, n, seed):
    """Seeded pairs inside the validity domain, spread over [-1.5, 1.5]^2."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.5, 1.5, (4 * n, 2))
    xb = rng.uniform(-1.5, 1.5, (4 * n, 2))
    if cost_id == "log":
        keep = np.linalg.norm(x - xb, axis=1) >= 0.05  # stay away from the edge
        x, xb = x[keep], xb[keep]
    return x[:n], xb[:n]


def fd_grad(f, pts, h=1e-6):
    """Central difference gradient of a scalar broadcasting function."""
    out = np.zeros_like(pts)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        out[..., j] = (f(pts + e) - f(pts - e)) / (2 * h)
    return out


@pytest.mark.parametrize("cost_id", COST_IDS)
def test_gradients_match_finite_differences(cost_id):
    cost = make_cost(cost_id)
    x, xb = sample_pairs(cost_id, 50, seed=1)
    gx = fd_grad(lambda q: cost.eval(q, xb), x)
    gxb = fd_grad(lambda q: cost.eval(x, q), xb)
    assert np.allclose(cost.grad_x(x, xb), gx, atol=5e-9, rtol=1e-6)
    assert np.allclose(cost.grad_xbar(x, xb), gxb, atol=5e-9, rtol=1e-6)


@pytest.mark.parametrize("cost_id", COST_IDS)
def test_second_derivatives_match_finite_differences(cost_id):
    cost = make_cost(cost_id)
    x, xb = sample_pairs(cost_id, 50, seed=2)
    h = 1e-6
    hess_fd = np.zeros((len(x), 2, 2))
    cross_fd = np.zeros((len(x), 2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        hess_fd[:, :, j] = (cost.grad_x(x + e, xb) - cost.grad_x(x - e, xb)) / (2 * h)
        # cross_hessian[i, j] = -d(grad_x_i)/d(xbar_j)
        cross_fd[:, :, j] = -(cost.grad_x(x, xb + e) - cost.grad_x(x, xb - e)) / (2 * h)
    assert np.allclose(cost.hess_x(x, xb), hess_fd, atol=2e-7, rtol=1e-5)
    assert np.allclose(cost.cross_hessian(x, xb), cross_fd, atol=2e-7, rtol=1e-5)


def test_cross_hessian_frozen_determinants():
    # log at separation r: eigenvalues 1/r^2 and -1/r^2, so det = -1/r^4
    log_cost = make_cost("log")
    E = log_cost.cross_hessian(np.array([0.5, 0.0]), np.array([0.0, 0.0]))
    assert np.linalg.det(E) == pytest.approx(-16.0, rel=1e-12)
    # sqrt_plus at separation r: det = 1/(1 + r^2)^2
    sq = make_cost("sqrt_plus")
    E = sq.cross_hessian(np.array([1.0, 0.0]), np.array([0.0, 0.0]))
    assert np.linalg.det(E) == pytest.approx(0.25, rel=1e-12)
    # quadratic: identity
    E = make_cost("quadratic").cross_hessian(np.zeros(2), np.ones(2))
    assert np.allclose(E, np.eye(2))


@pytest.mark.parametrize("cost_id", COST_IDS)
def test_closed_exponential_inverts_momentum_map(cost_id):
    cost = make_cost(cost_id)
    x, xb = sample_pairs(cost_id, 200, seed=3)
    p = -cost.grad_x(x, xb)
    back = c_exp(cost, x, p, method="closed")
    assert np.max(np.linalg.norm(back - xb, axis=1)) < 1e-12


@pytest.mark.parametrize("cost_id", COST_IDS)
def test_target_side_exponential_inverts(cost_id):
    cost = make_cost(cost_id)
    x, xb = sample_pairs(cost_id, 200, seed=4)
    q = -cost.grad_xbar(x, xb)
    back = c_exp_bar(cost, xb, q)
    assert np.max(np.linalg.norm(back - x, axis=1)) < 1e-12


@pytest.mark.parametrize("cost_id", COST_IDS)
def test_newton_route_matches_closed_route(cost_id):
    cost = make_cost(cost_id)
    x, xb = sample_pairs(cost_id, 40, seed=5)
    p = -cost.grad_x(x, xb)
    closed = c_exp(cost, x, p, method="closed")
    newton = c_exp(cost, x, p, method="newton")
    err = np.linalg.norm(closed - newton, axis=1) / (1 + np.linalg.norm(closed, axis=1))
    assert err.max() < 1e-9


def test_log_exponential_frozen_point():
    # p = (-1, 0) at the origin: target = x - p/|p|^2 = (1, 0)
    cost = make_cost("log")
    xb = c_exp(cost, np.array([0.0, 0.0]), np.array([-1.0, 0.0]))
    assert np.allclose(xb, [1.0, 0.0], atol=1e-14)


def test_log_validity_domain():
    cost = make_cost("log")
    ok = cost.valid_pair(np.array([0.0, 0.0]), np.array([LOG_MIN_SEPARATION, 0.0]))
    bad = cost.valid_pair(np.array([0.0, 0.0]), np.array([0.5 * LOG_MIN_SEPARATION, 0.0]))
    assert bool(ok) and not bool(bad)
    with pytest.raises(OutOfChart):
        c_exp(cost, np.zeros(2), np.zeros(2))


def test_sqrt_plus_momentum_ball():
    cost = make_cost("sqrt_plus")
    with pytest.raises(OutOfChart):
        c_exp(cost, np.zeros(2), np.array([1.0, 0.0]))
    # momenta approaching the ball boundary map far away but stay exact
    p = np.array([0.999, 0.0])
    xb = c_exp(cost, np.zeros(2), p)
    assert np.linalg.norm(-cost.grad_x(np.zeros(2), xb) - p) < 1e-12


def test_target_chart_enforced():
    cost = make_cost("quadratic", target_chart=(-1.0, 1.0, -1.0, 1.0))
    with pytest.raises(OutOfChart):
        c_exp(cost, np.zeros(2), np.array([2.0, 0.0]))
    inside = c_exp(cost, np.zeros(2), np.array([0.5, 0.0]))
    assert np.allclose(inside, [0.5, 0.0])


def test_curvature_invalid_pair_raises():
    cost = make_cost("log")
    with pytest.raises(InvalidPair):
        mtw_term(cost, np.zeros(2), np.array([1e-4, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 0.0]))


# ---------------------------------------------------------------------------
# curvature term oracles


@pytest.mark.parametrize("d", [0.5, 1.0, 2.0])
def test_log_curvature_frozen_value(d):
    # At x=0, target (d,0), V=(0,1), eta=(1,0): along the momentum ray the
    # target stays on the axis at s(t)=d/(1-dt), the (V,V) second derivative
    # of the cost is -1/s(t)^2, so g(t)=(1-dt)^2/d^2 and g''(0)=2 for all d.
    cost = make_cost("log")
    ev = mtw_term(cost, [0.0, 0.0], [d, 0.0], [0.0, 1.0], [1.0, 0.0])
    assert ev.value == pytest.approx(2.0, abs=1e-9)
    assert ev.fd_error < 1e-7


@pytest.mark.parametrize("R", [0.5, 1.0, 2.0])
def test_sqrt_plus_curvature_frozen_value(R):
    # Same axis frame: with a(t) = R/sqrt(1+R^2) + t the ray stays on the
    # axis, g(t) = -sqrt(1-a^2), and g''(0) = (1-a0^2)^(-3/2) = (1+R^2)^(3/2).
    cost = make_cost("sqrt_plus")
    ev = mtw_term(cost, [0.0, 0.0], [R, 0.0], [0.0, 1.0], [1.0, 0.0])
    assert ev.value == pytest.approx((1.0 + R * R) ** 1.5, rel=1e-8)


@pytest.mark.parametrize("cost_id", ["quadratic", "bilinear"])
def test_flat_families_have_zero_curvature(cost_id):
    cost = make_cost(cost_id)
    x, xb = sample_pairs(cost_id, 60, seed=6)
    rng = np.random.default_rng(7)
    th = rng.uniform(0, 2 * np.pi, len(x))
    V = np.stack([np.cos(th), np.sin(th)], axis=1)
    eta = np.stack([-np.sin(th), np.cos(th)], axis=1)
    vals, _, _ = mtw_batch(cost, x, xb, V, eta)
    assert np.max(np.abs(vals)) <= 1e-9


def fd_hess_vv(cost, x, xb, V, h=1e-4):
    """(V,V) second derivative of the cost in x by pure finite differences."""
    c0 = cost.eval(x, xb)
    cp = cost.eval(x + h * V, xb)
    cm = cost.eval(x - h * V, xb)
    return (cp + cm - 2 * c0) / h**2


@pytest.mark.parametrize("cost_id", ["log", "sqrt_plus"])
def test_curvature_against_pure_fd_oracle(cost_id):
    # Independent oracle: build g(t) using only cost.eval (no analytic
    # Hessians) and difference it in t. Nesting finite differences amplifies
    # the inner Hessian's rounding noise by 1/step^2, so the oracle is only
    # good to ~1% — enough to catch any sign or factor error, while the
    # frozen closed-form values above pin the precision.
    cost = make_cost(cost_id)
    x, xb = sample_pairs(cost_id, 12, seed=8)
    rng = np.random.default_rng(9)
    th = rng.uniform(0, 2 * np.pi, len(x))
    V = np.stack([np.cos(th), np.sin(th)], axis=1)
    eta = np.stack([-np.sin(th), np.cos(th)], axis=1)
    vals, _, _ = mtw_batch(cost, x, xb, V, eta)

    for k in range(len(x)):
        p0 = -cost.grad_x(x[k], xb[k])
        scale = max(np.linalg.norm(p0), 0.1)
        ht = 2e-2 * scale
        if cost_id == "sqrt_plus":
            ht = min(ht, 0.3 * (1 - np.linalg.norm(p0)))

        def g(t):
            xbt = c_exp(cost, x[k], p0 + t * eta[k])
            return -fd_hess_vv(cost, x[k], xbt, V[k])

        def second_diff(step):
            return (g(step) + g(-step) - 2 * g(0.0)) / step**2

        oracle = (4 * second_diff(ht / 2) - second_diff(ht)) / 3
        assert vals[k] == pytest.approx(oracle, rel=2e-2, abs=2e-2)


def test_eta_projected_onto_orthogonal_complement():
    cost = make_cost("log")
    # eta with a component along V must give the same value as its
    # projection, and eta parallel to V must give exactly zero
    base = mtw_term(cost, [0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0])
    skew = mtw_term(cost, [0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.7])
    assert skew.value == pytest.approx(base.value, rel=1e-9)
    assert np.allclose(skew.eta_perp, [1.0, 0.0], atol=1e-15)
    parallel = mtw_term(cost, [0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 3.0])
    assert parallel.value == 0.0


# ---------------------------------------------------------------------------
# structural verification


@pytest.mark.parametrize("cost_id", COST_IDS)
def test_verify_structural_passes(cost_id):
    report = verify_structural(make_cost(cost_id), seed=11)
    assert report.all_pass, str(report)
    assert report.n_pairs == 200


def test_verify_structural_report_lines():
    report = verify_structural(make_cost("quadratic"), seed=12)
    text = str(report)
    assert "PASS" in text and "FAIL" not in text
