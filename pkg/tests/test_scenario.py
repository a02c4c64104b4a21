"""Tests for the scenario config grammar, validation, and packaged presets.

Every validation failure must raise ConfigError with an ``origin:line``
prefix pointing at the offending line, so most tests here assert both the
exception and the reported location.
"""

import numpy as np
import pytest

from otlab.errors import ConfigError
from otlab.scenario import (
    ANALYSES,
    RegionSpec,
    available_presets,
    load_scenario,
    parse_scenario,
    preset_path,
)

MINIMAL = "cost = quadratic\nsource.region = square(1.0)\ntarget.points = (0.3, 0.0); (-0.3, 0.0)\n"


def parse(extra="", base=MINIMAL, origin="<config>"):
    return parse_scenario(base + extra, origin=origin)


def fail_line(text, origin="cfg.txt"):
    """Parse expecting ConfigError; return (line_number, message)."""
    with pytest.raises(ConfigError) as exc:
        parse_scenario(text, origin=origin)
    msg = str(exc.value)
    assert msg.startswith(origin), msg
    rest = msg[len(origin):]
    if rest.startswith(":") and rest[1:].split(":")[0].isdigit():
        return int(rest[1:].split(":")[0]), msg
    return 0, msg


# ---------------------------------------------------------------------------
# happy-path grammar


def test_minimal_defaults():
    scn = parse()
    assert scn.cost_id == "quadratic"
    assert scn.source_region == RegionSpec("square", (1.0,))
    assert scn.source_align is None
    assert scn.density_kind == "uniform" and scn.density_args == ()
    assert scn.target_kind == "points"
    assert scn.target_args == ((0.3, 0.0), (-0.3, 0.0))
    assert scn.target_weights is None
    assert scn.target_region is None
    assert scn.resolution == 256
    assert scn.tol == 1e-7
    assert scn.max_iter == 80
    assert scn.analyses == ()
    assert scn.seed == 0
    assert scn.section_lift == 1.0
    assert scn.section_heights == (0.1, 0.05, 0.025)
    assert scn.loeper_samples == 20000
    assert scn.monotonicity_pairs == 100
    assert scn.name == "scenario"  # no file origin to take a stem from


def test_every_key_parses():
    text = """
    # full-file comment
    name = full example
    cost = log
    source.region = annulus(0.5, 1.5)   # trailing comment
    source.align = (0.25, -0.5)
    source.density = checkerboard(3.0, 0.2)
    target.points = (0.9, 0.0); (0.0, 0.9); (-0.9, 0.0)
    target.weights = 1.0; 2.0; 3.0
    target.region = auto
    mesh.resolution = 128
    solver.tol = 1e-9
    solver.max_iter = 40
    analyses = structural, loeper, holes
    seed = 42
    section.base = (0.1, 0.2)
    section.focus = (0.9, 0.0)
    section.lift = 2.0
    section.heights = 0.2, 0.1
    loeper.samples = 500
    monotonicity.pairs = 10
    """
    scn = parse_scenario(text)
    assert scn.name == "full example"
    assert scn.cost_id == "log"
    assert scn.source_region == RegionSpec("annulus", (0.5, 1.5))
    assert scn.source_align == (0.25, -0.5)
    assert scn.density_kind == "checkerboard"
    assert scn.density_args == (3.0, 0.2)
    assert scn.target_weights == (1.0, 2.0, 3.0)
    assert scn.target_region == "auto"
    assert scn.resolution == 128
    assert scn.tol == 1e-9
    assert scn.max_iter == 40
    assert scn.analyses == ("structural", "loeper", "holes")
    assert scn.seed == 42
    assert scn.section_base == (0.1, 0.2)
    assert scn.section_focus == (0.9, 0.0)
    assert scn.section_lift == 2.0
    assert scn.section_heights == (0.2, 0.1)
    assert scn.loeper_samples == 500
    assert scn.monotonicity_pairs == 10


def test_analyses_stored_in_dependency_order():
    scn = parse("analyses = cone, loeper, structural\n"
                "section.base = (0.0, 0.0)\nsection.focus = (0.3, 0.0)\n")
    assert scn.analyses == ("structural", "loeper", "cone")
    assert all(a in ANALYSES for a in scn.analyses)


def test_target_grid_accumulates():
    text = (
        "cost = quadratic\nsource.region = square(1.0)\n"
        "target.grid = 2, 3, -1.0, -0.5, 0.0, 1.0\n"
        "target.grid = 4, 5, 0.5, 1.0, 0.0, 1.0\n"
    )
    scn = parse_scenario(text)
    assert scn.target_kind == "grid"
    assert scn.target_args == (
        (2, 3, -1.0, -0.5, 0.0, 1.0),
        (4, 5, 0.5, 1.0, 0.0, 1.0),
    )
    target = scn.build_target()
    assert len(target.points) == 2 * 3 + 4 * 5
    # equal weights, normalized to a probability vector
    assert np.allclose(target.weights, 1.0 / len(target.points))


def test_region_literals():
    for lit, kind, args in [
        ("square", "square", ()),
        ("SQUARE(2.5)", "square", (2.5,)),
        ("disk(1.5)", "disk", (1.5,)),
        ("annulus(0.5, 1.0)", "annulus", (0.5, 1.0)),
        ("split_pair(1.2, 0.25)", "split_pair", (1.2, 0.25)),
        ("l_shape", "l_shape", ()),
        ("polygon((0,0); (1,0); (0,1))", "polygon",
         ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))),
    ]:
        scn = parse_scenario(
            f"cost = quadratic\nsource.region = {lit}\n"
            "target.points = (0.1, 0.0); (-0.1, 0.0)\n"
        )
        assert scn.source_region == RegionSpec(kind, args), lit


def test_polygon_region_builds():
    spec = RegionSpec("polygon", ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0),
                                  (0.0, 1.0)))
    region = spec.build(resolution=64)
    assert abs(region.area() - 1.0) < 0.05


def test_name_defaults_to_origin_stem(tmp_path):
    p = tmp_path / "my_case.cfg"
    p.write_text(MINIMAL, encoding="utf-8")
    assert load_scenario(p).name == "my_case"


def test_load_scenario_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_scenario(tmp_path / "absent.cfg")


# ---------------------------------------------------------------------------
# validation failures, with line numbers


def test_syntax_error_line():
    line, msg = fail_line("cost = quadratic\nnot a key value line\n")
    assert line == 2 and "key = value" in msg


def test_empty_value():
    line, msg = fail_line("cost =\n")
    assert line == 1 and "empty value" in msg


def test_duplicate_key_reports_both_lines():
    line, msg = fail_line("cost = quadratic\nseed = 1\n\nseed = 2\n")
    assert line == 4 and "duplicate" in msg and "line 2" in msg


def test_unknown_key():
    line, msg = fail_line(MINIMAL + "solver.damping = 0.5\n")
    assert line == 4 and "unknown key" in msg


def test_missing_cost_is_file_level():
    line, msg = fail_line("source.region = square(1.0)\n"
                          "target.points = (0, 0); (1, 0)\n")
    assert line == 0 and "cost" in msg
    # file-level errors carry no dangling ":0"
    assert ":0:" not in msg


def test_unknown_cost():
    line, msg = fail_line("cost = cubic\nsource.region = square(1.0)\n"
                          "target.points = (0, 0); (1, 0)\n")
    assert line == 1 and "unknown cost" in msg


def test_missing_source_region():
    line, msg = fail_line("cost = quadratic\ntarget.points = (0, 0); (1, 0)\n")
    assert line == 0 and "source.region" in msg


@pytest.mark.parametrize("literal,fragment", [
    ("blob(1.0)", "unknown region preset"),
    ("square(1.0, 2.0)", "takes 0..1 arguments"),
    ("annulus(0.5)", "takes 2..2 arguments"),
    ("polygon((0,0); (1,0))", "at least 3 vertices"),
    ("polygon", "needs a vertex list"),
    ("square(abc)", "not a number"),
    ("== nonsense", "bad region literal"),
])
def test_bad_region_literals(literal, fragment):
    line, msg = fail_line(
        f"cost = quadratic\nsource.region = {literal}\n"
        "target.points = (0, 0); (1, 0)\n"
    )
    assert line == 2 and fragment in msg


@pytest.mark.parametrize("density,fragment", [
    ("checkerboard(0.5)", "contrast must be >= 1"),
    ("checkerboard(2.0, 0.0)", "tile must be positive"),
    ("checkerboard(1, 2, 3)", "takes (contrast[, tile])"),
    ("gaussian(1.0)", "source.density must be"),
])
def test_bad_density(density, fragment):
    line, msg = fail_line(MINIMAL + f"source.density = {density}\n")
    assert line == 4 and fragment in msg


@pytest.mark.parametrize("target,fragment", [
    ("target.rings = 3, 8, 0.5", "n_rings, per_ring"),
    ("target.rings = 0, 8, 0.2, 0.5", "positive integers"),
    ("target.rings = 2.5, 8, 0.2, 0.5", "positive integers"),
    ("target.rings = 3, 8, 0.5, 0.2", "0 <= r_min < r_max"),
    ("target.grid = 2, 2, 0.0, 1.0", "nx, ny, xmin"),
    ("target.grid = 0, 2, 0.0, 1.0, 0.0, 1.0", "positive integers"),
    ("target.grid = 2, 2, 1.0, 0.0, 0.0, 1.0", "box is empty"),
    ("target.random = 10, 0.0, 1.0, 0.0", "count, xmin"),
    ("target.random = 0, 0.0, 1.0, 0.0, 1.0", "positive"),
    ("target.random = 5, 1.0, 0.0, 0.0, 1.0", "box is empty"),
])
def test_bad_target_constructors(target, fragment):
    line, msg = fail_line(
        f"cost = quadratic\nsource.region = square(1.0)\n{target}\n"
    )
    assert line == 3 and fragment in msg


def test_missing_target():
    line, msg = fail_line("cost = quadratic\nsource.region = square(1.0)\n")
    assert line == 0 and "missing target" in msg


def test_conflicting_targets_name_both_lines():
    line, msg = fail_line(
        "cost = quadratic\nsource.region = square(1.0)\n"
        "target.points = (0, 0); (1, 0)\n"
        "target.rings = 2, 8, 0.2, 0.5\n"
    )
    assert "conflicting" in msg
    assert "target.rings" in msg and "target.points" in msg


@pytest.mark.parametrize("extra,lineno,fragment", [
    ("target.weights = 1.0\n", 4, "2 points"),
    ("target.weights = 1.0; 0.0\n", 4, "must be positive"),
])
def test_bad_weights(extra, lineno, fragment):
    line, msg = fail_line(MINIMAL + extra)
    assert line == lineno and fragment in msg


def test_weights_need_points_target():
    line, msg = fail_line(
        "cost = quadratic\nsource.region = square(1.0)\n"
        "target.rings = 2, 8, 0.2, 0.5\ntarget.weights = 1.0\n"
    )
    assert line == 4 and "only valid with target.points" in msg


@pytest.mark.parametrize("extra,fragment", [
    ("mesh.resolution = 32\n", "must be >= 64"),
    ("mesh.resolution = 128.5\n", "not an integer"),
    ("solver.tol = 0.0\n", "must be positive"),
    ("solver.tol = -1e-7\n", "must be positive"),
    ("solver.max_iter = 0\n", "must be >= 1"),
    ("seed = 1.5\n", "not an integer"),
    ("analyses = structural, warp\n", "unknown analysis"),
    ("analyses = loeper, loeper\n", "duplicate analysis"),
    ("section.lift = -1.0\n", "must be >= 0"),
    ("section.heights = 0.1, 0.0\n", "must be positive"),
    ("loeper.samples = 0\n", "must be positive"),
    ("monotonicity.pairs = 1\n", "must be >= 2"),
])
def test_scalar_validation(extra, fragment):
    line, msg = fail_line(MINIMAL + extra)
    assert line == 4 and fragment in msg


def test_section_analyses_need_base_and_focus():
    line, msg = fail_line(MINIMAL + "analyses = sections\n")
    assert line == 4 and "section.base" in msg


def test_holes_needs_target_region():
    line, msg = fail_line(MINIMAL + "analyses = holes\n")
    assert line == 4 and "target.region" in msg


# ---------------------------------------------------------------------------
# overrides and derived builders


def test_with_overrides():
    scn = parse()
    out = scn.with_overrides(resolution=512, seed=9)
    assert (out.resolution, out.seed) == (512, 9)
    assert (scn.resolution, scn.seed) == (256, 0)  # original untouched
    assert scn.with_overrides() is scn
    with pytest.raises(ConfigError, match="below the minimum"):
        scn.with_overrides(resolution=32)


def test_build_target_random_uses_seed():
    base = ("cost = quadratic\nsource.region = square(1.0)\n"
            "target.random = 7, -0.5, 0.5, -0.5, 0.5\n")
    a = parse_scenario(base + "seed = 3\n").build_target()
    b = parse_scenario(base + "seed = 3\n").build_target()
    c = parse_scenario(base + "seed = 4\n").build_target()
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)
    assert len(a.points) == 7


def test_target_region_auto_rings_gives_annulus():
    scn = parse_scenario(
        "cost = quadratic\nsource.region = disk(1.0)\n"
        "target.rings = 3, 16, 0.4, 0.8\ntarget.region = auto\n"
    )
    region = scn.build_target_region()
    target = scn.build_target()
    radii = np.linalg.norm(target.points, axis=1)
    # the derived annulus runs through the first and last ring radii
    assert abs(region.area() - np.pi * (radii.max() ** 2 - radii.min() ** 2)) \
        < 0.1
    assert not region.contains(np.array([[0.0, 0.0]]))[0]


def test_target_region_auto_points_gives_hull():
    scn = parse_scenario(
        "cost = quadratic\nsource.region = square(1.0)\n"
        "target.points = (0, 0); (1, 0); (0, 1); (0.2, 0.2)\n"
        "target.region = auto\n"
    )
    region = scn.build_target_region()
    assert abs(region.area() - 0.5) < 0.02  # hull is the right triangle


def test_target_region_auto_collinear_fails():
    scn = parse_scenario(
        "cost = quadratic\nsource.region = square(1.0)\n"
        "target.points = (0, 0); (0.5, 0); (1, 0)\ntarget.region = auto\n"
    )
    with pytest.raises(ConfigError, match="non-collinear"):
        scn.build_target_region()


# ---------------------------------------------------------------------------
# packaged presets


def test_available_presets():
    names = available_presets()
    assert names == sorted(names)
    for expected in (
        "costs/log_pair",
        "costs/two_point",
        "estimates/annulus_sections",
        "estimates/pyramid_sections",
        "theorem/annulus",
        "theorem/convex_square",
        "theorem/split_pair",
    ):
        assert expected in names


def test_preset_path_resolution():
    p = preset_path("theorem/annulus")
    assert p.is_file() and p.suffix == ".cfg"
    assert preset_path("theorem/annulus.cfg") == p
    with pytest.raises(ConfigError, match="bad preset name"):
        preset_path("../secrets")
    with pytest.raises(ConfigError, match="unknown preset"):
        preset_path("theorem/nonexistent")


def test_all_presets_parse_and_build():
    for name in available_presets():
        scn = load_scenario(preset_path(name))
        assert scn.name == name
        target = scn.build_target()
        assert len(target.points) >= 2
        assert scn.build_cost().cost_id == scn.cost_id
