"""Convex-hull helpers, cross-checked against scipy.spatial and brute force."""

import numpy as np
import pytest
from scipy.spatial import ConvexHull

from otlab.hull import (
    chord_through,
    convex_hull,
    diameter,
    hull_area,
    longest_chord,
    min_width,
    polygon_area,
    signed_interior_margin,
)


@pytest.mark.parametrize("seed", range(6))
def test_hull_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((rng.integers(5, 60), 2))
    ours = convex_hull(pts)
    ref = ConvexHull(pts)
    ref_vertices = pts[ref.vertices]  # scipy returns ccw order as well
    assert len(ours) == len(ref_vertices)
    # same vertex set (cyclic order may start anywhere)
    start = np.argmin(np.linalg.norm(ref_vertices - ours[0], axis=1))
    rolled = np.roll(ref_vertices, -start, axis=0)
    assert np.allclose(rolled, ours, atol=1e-12)
    assert hull_area(pts) == pytest.approx(ref.volume, abs=1e-12)


def test_hull_degenerate_inputs():
    assert len(convex_hull(np.array([[1.0, 2.0]] * 5))) == 1
    seg = convex_hull(np.array([[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]]))
    assert len(seg) == 2
    assert hull_area(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])) == 0.0


def test_polygon_area_square():
    square = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])
    assert polygon_area(square) == pytest.approx(4.0)
    assert polygon_area(square[::-1]) == pytest.approx(-4.0)


@pytest.mark.parametrize("seed", range(4))
def test_diameter_brute_force(seed):
    rng = np.random.default_rng(100 + seed)
    pts = rng.standard_normal((30, 2))
    brute = max(
        np.linalg.norm(a - b) for i, a in enumerate(pts) for b in pts[i + 1 :]
    )
    assert diameter(pts) == pytest.approx(brute, abs=1e-12)


def test_min_width_rectangle():
    rect = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 1.0], [0.0, 1.0]])
    w, n = min_width(rect)
    assert w == pytest.approx(1.0)
    assert abs(n @ [0.0, 1.0]) == pytest.approx(1.0)


def test_min_width_rotated_rectangle():
    theta = 0.37
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    rect = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 1.5], [0.0, 1.5]]) @ R.T
    w, n = min_width(rect)
    assert w == pytest.approx(1.5, abs=1e-12)
    assert abs(n @ R[:, 1]) == pytest.approx(1.0, abs=1e-12)


def test_chords_on_rectangle():
    rect = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 1.0], [0.0, 1.0]])
    hull = convex_hull(rect)
    assert chord_through(hull, np.array([2.0, 0.5]), np.array([1.0, 0.0])) == pytest.approx(4.0)
    assert chord_through(hull, np.array([2.0, 0.5]), np.array([0.0, 2.0])) == pytest.approx(1.0)
    assert chord_through(hull, np.array([9.0, 0.5]), np.array([0.0, 1.0])) == 0.0
    assert longest_chord(rect, np.array([1.0, 0.0])) == pytest.approx(4.0)
    diag = np.array([4.0, 1.0])
    assert longest_chord(rect, diag) == pytest.approx(np.linalg.norm(diag))


def test_signed_interior_margin():
    square = convex_hull(np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]))
    assert signed_interior_margin(square, np.array([1.0, 1.0])) == pytest.approx(1.0)
    assert signed_interior_margin(square, np.array([0.2, 1.0])) == pytest.approx(0.2)
    assert signed_interior_margin(square, np.array([-1.0, 1.0])) == pytest.approx(-1.0)
