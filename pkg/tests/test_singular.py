"""Tests for subdifferentials, singular-set extraction and isolation logic.

Independent oracles:

* the two-target problem: the potential creases exactly on the bisector, the
  subdifferential there is the segment between the two momenta;
* a fine grid approximating a convex continuum target: every crease strength
  equals a target spacing, all below the 10h threshold;
* ring targets with tied potentials per ring: at the region center all inner
  ring sheets tie exactly, producing a genuinely 2-dimensional
  subdifferential at a single pixel (the discrete isolated singularity).
"""

from functools import lru_cache

import numpy as np
import pytest

from otlab import errors, geometry
from otlab.costs import c_exp, make_cost
from otlab.singular import (
    SingularComponent,
    SingularSet,
    isolation_report,
    propagation_check,
    singular_set,
    subdifferential_at,
)
from otlab.transport import (
    DiscreteTarget,
    solve_dual,
    targets_grid,
    targets_rings,
    uniform_density,
)

QUAD = make_cost("quadratic")


@lru_cache(maxsize=None)
def solve_two_point(resolution=256):
    region = geometry.square(1.0, resolution=resolution)
    target = DiscreteTarget(
        points=np.array([[-1.0, 0.0], [1.0, 0.0]]),
        weights=np.array([0.5, 0.5]),
    )
    return solve_dual(QUAD, region, uniform_density(), target, tol=1e-10)


@lru_cache(maxsize=None)
def solve_mini_rings(resolution=128):
    """Disk source, 4 tied rings of 48 targets: a hole-type target measure."""
    region = geometry.disk(1.0, resolution=resolution, align=(0.0, 0.0))
    target = targets_rings(4, 48, 0.45, 0.7)
    sol = solve_dual(
        QUAD, region, uniform_density(), target, tol=1e-10,
        tie_groups=target.ring_groups,
    )
    return region, target, sol


# ---------------------------------------------------------------------------
# subdifferential_at


def test_subdifferential_on_bisector_is_segment():
    sol = solve_two_point()
    h = sol.region.raster.h
    sub = subdifferential_at(sol, (0.0, 0.3))
    assert sub.is_singular
    assert len(sub.active) == 2
    # momenta are target - base for the quadratic cost
    want = np.array([[-1.0, -0.3], [1.0, -0.3]])
    got = sub.vertices[np.argsort(sub.vertices[:, 0])]
    assert np.abs(got - want).max() <= 2e-3  # potential offset is O(h)-exact
    assert sub.affine_dim == 1
    assert sub.diameter > 10 * h and sub.area <= (10 * h) ** 2
    # image consistency: the cost exponential returns the active targets
    back = c_exp(sol.cost, np.broadcast_to(sub.base, (2, 2)), sub.vertices)
    assert np.abs(back - sub.image_points).max() <= 1e-9


def test_subdifferential_in_cell_interior_is_point():
    sol = solve_two_point()
    sub = subdifferential_at(sol, (0.5, 0.2))
    assert not sub.is_singular
    assert sub.affine_dim == 0
    assert len(sub.active) == 1
    assert np.allclose(sub.vertices[0], [0.5, -0.2], atol=1e-12)


def test_affine_dim_monotone_in_gap_tol():
    sol = solve_two_point()
    dims = [
        subdifferential_at(sol, (0.0, 0.3), gap_tol=g).affine_dim
        for g in (1e-9, 1e-3, 0.3, 1.0, 5.0)
    ]
    assert dims == sorted(dims)
    # huge tolerance activates both sheets from anywhere
    sub = subdifferential_at(sol, (0.5, 0.2), gap_tol=10.0)
    assert len(sub.active) == 2


# ---------------------------------------------------------------------------
# singular_set: creases, micro-texture filtering, ring center


def test_two_point_singular_set_is_bisector():
    sol = solve_two_point()
    h = sol.region.raster.h
    sing = singular_set(sol)
    assert sing.raw_mask.any()
    assert sing.n_components == 1
    comp = sing.components[0]
    # jump across the crease is |y1 - y0| = 2
    assert abs(comp.strength - 2.0) <= 1e-6
    # the component spans the square vertically and hugs {x = 0}
    assert np.ptp(comp.points[:, 1]) >= 2.0 - 4 * h
    assert np.abs(comp.points[:, 0]).max() <= 1.5 * h
    rep = isolation_report(sing)
    assert rep.n_isolated == 0
    assert rep.entries[0].verdict == "PROPAGATING"
    assert rep.consistent


def test_fine_grid_has_no_filtered_singularities():
    # spacing 0.03125 (diagonal 0.0442) stays below the 10h = 0.11 threshold
    region = geometry.square(1.0, resolution=256)
    target = targets_grid((16, 16), box=(-0.25, 0.25, -0.25, 0.25))
    sol = solve_dual(QUAD, region, uniform_density(), target, tol=1e-10)
    sing = singular_set(sol)
    assert sing.raw_mask.any()  # micro-creases exist ...
    assert sing.n_components == 0  # ... but none above threshold
    assert not sing.filtered_mask.any()
    rep = isolation_report(sing)
    assert rep.n_isolated == 0 and rep.consistent


def test_single_target_has_empty_singular_set():
    region = geometry.square(1.0, resolution=96)
    target = DiscreteTarget(points=np.array([[0.2, 0.1]]), weights=np.array([1.0]))
    sol = solve_dual(QUAD, region, uniform_density(), target, tol=1e-10)
    sing = singular_set(sol)
    assert not sing.raw_mask.any()
    assert sing.n_components == 0 and sing.n_raw_components == 0
    sub = subdifferential_at(sol, (0.0, 0.0))
    assert sub.affine_dim == 0 and not sub.is_singular


def test_ring_center_is_isolated_dim2_singularity():
    region, target, sol = solve_mini_rings()
    h = region.raster.h
    sing = singular_set(sol)
    assert sing.n_components == 1
    comp = sing.components[0]
    assert comp.size <= 2
    assert np.linalg.norm(comp.representative) <= h  # at the center pixel
    # subdifferential at the center: all 48 inner-ring sheets active
    sub = subdifferential_at(sol, (0.0, 0.0))
    assert sub.affine_dim == 2
    assert len(sub.active) == 48
    rho0 = np.linalg.norm(target.points[target.ring_groups[0][0]])
    assert np.abs(np.linalg.norm(sub.vertices, axis=1) - rho0).max() <= 1e-9
    # isolation: consistent with the hole in the target support
    holes_region = geometry.annulus(0.4, 0.75, resolution=256)
    rep = isolation_report(sing, target_region=holes_region)
    assert rep.n_isolated == 1
    assert rep.target_holes == 1
    assert rep.entries[0].verdict == "CONSISTENT"
    assert rep.consistent


def test_split_target_dominant_component_spans():
    region = geometry.square(1.0, resolution=160)
    left = targets_grid((5, 5), box=(-1.0, -0.6, -0.2, 0.2))
    right = targets_grid((5, 5), box=(0.6, 1.0, -0.2, 0.2))
    target = DiscreteTarget(
        points=np.vstack([left.points, right.points]),
        weights=np.full(50, 1.0 / 50.0),
    )
    sol = solve_dual(QUAD, region, uniform_density(), target, tol=1e-10)
    sing = singular_set(sol)
    assert sing.n_components >= 1
    comp = sing.components[0]  # strongest = the left/right separation
    assert comp.strength >= 1.0
    assert np.ptp(comp.points[:, 1]) >= 2.0 - 6 * region.raster.h
    rep = isolation_report(sing, target_region=geometry.split_pair(1.2, 0.25))
    assert rep.n_isolated == 0
    assert rep.target_holes == 0
    assert rep.consistent


# ---------------------------------------------------------------------------
# isolation verdict logic on a synthetic singular set


def _fake_singular_set(sol, pixel_point, strength=1.0):
    raster = sol.region.raster
    iy, ix = raster.point_to_cell(pixel_point)
    shape = raster.shape
    filt = np.zeros(shape, dtype=bool)
    filt[iy, ix] = True
    flat = np.flatnonzero(filt.ravel())
    comp = SingularComponent(
        label=1,
        pixel_index=flat,
        points=raster.centers()[flat],
        size=1,
        diameter=0.0,
        representative=raster.centers()[flat][0],
        strength=strength,
    )
    labels = filt.astype(int)
    return SingularSet(
        solution=sol,
        strength_tol=10 * raster.h,
        raw_mask=filt.copy(),
        filtered_mask=filt,
        strength=np.where(filt, strength, 0.0),
        active_count=np.where(filt, 2, 1).astype(np.int16),
        raw_labels=labels,
        n_raw_components=1,
        labels=labels,
        components=[comp],
    )


def test_isolated_low_dim_component_is_flagged():
    sol = solve_two_point()
    # a lone pixel on the bisector: isolated but only a 1-dim subdifferential
    sing = _fake_singular_set(sol, np.array([0.0, 0.3]))
    rep = isolation_report(sing)
    assert rep.n_isolated == 1
    assert rep.entries[0].affine_dim == 1
    assert rep.entries[0].verdict == "VIOLATION"
    assert not rep.consistent


def test_isolated_dim2_without_hole_is_flagged():
    region, target, sol = solve_mini_rings()
    sing = singular_set(sol)
    # hole-free claimed support contradicts the isolated dim-2 singularity
    rep = isolation_report(sing, target_region=geometry.square(0.8))
    assert rep.n_isolated == 1
    assert rep.target_holes == 0
    assert rep.entries[0].verdict == "VIOLATION"
    assert not rep.consistent
    # without a declared target support the hole check is skipped
    rep2 = isolation_report(sing)
    assert rep2.entries[0].verdict == "CONSISTENT"


# ---------------------------------------------------------------------------
# propagation_check


def test_propagation_two_point_bisector():
    sol = solve_two_point()
    h = sol.region.raster.h
    gap = propagation_check(sol, (0.0, 0.3), radius=0.1)
    # gradients on either side attain the two vertices within a pixel scale
    assert gap <= 2.0 * h


def test_propagation_rejects_smooth_points():
    sol = solve_two_point()
    with pytest.raises(errors.NotSingular):
        propagation_check(sol, (0.5, 0.2), radius=0.1)


def test_propagation_needs_a_punctured_neighborhood():
    sol = solve_two_point()
    with pytest.raises(errors.NoPuncturedNeighborhood):
        propagation_check(sol, (0.0, 0.3), radius=1e-9)


def test_propagation_at_ring_center():
    region, target, sol = solve_mini_rings()
    sing = singular_set(sol)
    gap = propagation_check(sol, (0.0, 0.0), radius=0.1, sing=sing)
    # every extreme slope is realized nearby: angular spacing of the inner
    # ring plus a few pixels of radial offset
    rho0 = np.linalg.norm(target.points[target.ring_groups[0][0]])
    bound = rho0 * (2 * np.pi / 48) + 4 * region.raster.h
    assert gap <= bound
