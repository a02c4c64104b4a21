"""Scenario configuration: the experiment runner's flat key=value grammar.

A scenario file is plain text, one ``key = value`` pair per line:

* ``#`` starts a comment (whole line or trailing); blank lines are skipped.
* Keys are lowercase words joined by dots (``solver.tol``).
* Every key appears at most once, except ``target.grid``, which may repeat —
  the listed grids accumulate into one equal-weight target set.

Recognized keys and value forms::

    name                 free text               (default: config file stem)
    cost                 quadratic | bilinear | log | sqrt_plus    [required]
    source.region        region literal                            [required]
    source.align         center | (x, y)     pin a point to a cell center
    source.density       uniform | checkerboard(contrast[, tile])
    target.rings         n_rings, per_ring, r_min, r_max   \\
    target.grid          nx, ny, xmin, xmax, ymin, ymax     | exactly one
    target.random        count, xmin, xmax, ymin, ymax      | constructor
    target.points        (x, y); (x, y); ...               /
    target.weights       w; w; ...           (with target.points only)
    target.region        region literal | auto             (support of the
                         target measure, used by hole analyses; ``auto``
                         derives an annulus through the first/last ring for
                         ring targets and the convex hull otherwise)
    mesh.resolution      integer >= 64                     (default 256)
    solver.tol           positive float                    (default 1e-7)
    solver.max_iter      positive integer                  (default 80)
    analyses             comma list from {structural, holes, singular,
                         isolation, loeper, monotonicity, sections,
                         aleksandrov, cone}                (default: none)
    seed                 integer                           (default 0)
    section.base         (x, y)      source base point of the section family
    section.focus        (x, y)      target-side focus of the cap
    section.lift         float >= 0                        (default 1.0)
    section.heights      comma-separated positive floats
                                                (default 0.1, 0.05, 0.025)
    loeper.samples       positive integer                  (default 20000)
    monotonicity.pairs   positive integer                  (default 100)

Region literals are either a vertex list ``polygon((x, y); (x, y); ...)`` or
a named preset call: ``square(half_width)``, ``disk(radius)``,
``annulus(r_in, r_out)``, ``split_pair(gap[, half_width])``,
``l_shape(size)``.  Arguments with defaults may be omitted (bare ``l_shape``
is allowed); preset names are case-insensitive.

All validation failures raise :class:`~otlab.errors.ConfigError` whose
message starts with ``path:line``.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import geometry
from .costs import COST_IDS, make_cost
from .errors import ConfigError
from .hull import convex_hull
from .transport import (
    DiscreteTarget,
    SourceDensity,
    checkerboard_density,
    targets_grid,
    targets_random,
    targets_rings,
    uniform_density,
)

__all__ = [
    "ANALYSES",
    "RegionSpec",
    "Scenario",
    "parse_scenario",
    "load_scenario",
    "preset_path",
    "available_presets",
]

#: Analyses the runner knows how to execute, in dependency order.
ANALYSES = (
    "structural",
    "loeper",
    "monotonicity",
    "singular",
    "isolation",
    "holes",
    "sections",
    "aleksandrov",
    "cone",
)

_REGION_ARITY = {
    # kind -> (min args, max args)
    "square": (0, 1),
    "disk": (0, 1),
    "annulus": (2, 2),
    "split_pair": (1, 2),
    "l_shape": (0, 1),
}

_SECTION_ANALYSES = {"sections", "aleksandrov", "cone"}

_MIN_RESOLUTION = 64


@dataclass(frozen=True)
class RegionSpec:
    """A parsed region literal: a named preset call or explicit polygon."""

    kind: str  # one of _REGION_ARITY keys, or "polygon"
    args: tuple  # floats for presets; ((x, y), ...) vertices for polygon

    def build(self, resolution: int, align=None) -> geometry.Region:
        kw = {"resolution": int(resolution)}
        if align is not None:
            kw["align"] = align
        if self.kind == "polygon":
            return geometry.Region([np.asarray(self.args, dtype=float)],
                                   name="polygon", **kw)
        fn = {
            "square": geometry.square,
            "disk": geometry.disk,
            "annulus": geometry.annulus,
            "split_pair": geometry.split_pair,
            "l_shape": geometry.l_shape,
        }[self.kind]
        return fn(*self.args, **kw)


@dataclass(frozen=True)
class Scenario:
    """A validated experiment description (see the module grammar)."""

    name: str
    cost_id: str
    source_region: RegionSpec
    source_align: Optional[object]  # None | "center" | (x, y)
    density_kind: str  # "uniform" | "checkerboard"
    density_args: tuple  # () | (contrast,) | (contrast, tile)
    target_kind: str  # "rings" | "grid" | "random" | "points"
    target_args: tuple  # see build_target
    target_weights: Optional[tuple]
    target_region: Optional[object]  # None | "auto" | RegionSpec
    resolution: int
    tol: float
    max_iter: int
    analyses: tuple
    seed: int
    section_base: Optional[tuple]
    section_focus: Optional[tuple]
    section_lift: float
    section_heights: tuple
    loeper_samples: int
    monotonicity_pairs: int
    origin: str = "<config>"

    # -- builders -----------------------------------------------------------

    def with_overrides(self, resolution: Optional[int] = None,
                       seed: Optional[int] = None) -> "Scenario":
        """Copy with the CLI-level resolution/seed overrides applied."""
        out = self
        if resolution is not None:
            if resolution < _MIN_RESOLUTION:
                raise ConfigError(
                    f"{self.origin}: resolution override {resolution} is "
                    f"below the minimum {_MIN_RESOLUTION}"
                )
            out = dataclasses.replace(out, resolution=int(resolution))
        if seed is not None:
            out = dataclasses.replace(out, seed=int(seed))
        return out

    def build_cost(self):
        return make_cost(self.cost_id)

    def build_region(self) -> geometry.Region:
        return self.source_region.build(self.resolution, self.source_align)

    def build_density(self) -> SourceDensity:
        if self.density_kind == "uniform":
            return uniform_density()
        return checkerboard_density(*self.density_args)

    def build_target(self) -> DiscreteTarget:
        if self.target_kind == "rings":
            n, per, r0, r1 = self.target_args
            return targets_rings(int(n), int(per), float(r0), float(r1))
        if self.target_kind == "grid":
            parts = [
                targets_grid((int(nx), int(ny)), (x0, x1, y0, y1))
                for nx, ny, x0, x1, y0, y1 in self.target_args
            ]
            if len(parts) == 1:
                return parts[0]
            pts = np.vstack([p.points for p in parts])
            return DiscreteTarget(pts, np.ones(len(pts)),
                                  name=f"grids(x{len(parts)})")
        if self.target_kind == "random":
            count, x0, x1, y0, y1 = self.target_args
            return targets_random(int(count), (x0, x1, y0, y1),
                                  seed=self.seed)
        pts = np.asarray(self.target_args, dtype=float)
        w = (np.ones(len(pts)) if self.target_weights is None
             else np.asarray(self.target_weights, dtype=float))
        return DiscreteTarget(pts, w, name="points")

    def build_target_region(
        self, target: Optional[DiscreteTarget] = None
    ) -> Optional[geometry.Region]:
        """Region of the target measure's support, or None when unset.

        ``auto`` derives the support from the target itself: ring targets
        give the annulus through the first and last ring; any other target
        gives the convex hull of its points.
        """
        spec = self.target_region
        if spec is None:
            return None
        if isinstance(spec, RegionSpec):
            return spec.build(self.resolution)
        # "auto"
        if target is None:
            target = self.build_target()
        if target.ring_groups is not None and len(target.ring_groups) >= 2:
            radii = [
                float(np.linalg.norm(target.points[g], axis=1).mean())
                for g in target.ring_groups
            ]
            return geometry.annulus(min(radii), max(radii),
                                    resolution=self.resolution)
        hull = convex_hull(target.points)
        if len(hull) < 3:
            raise ConfigError(
                f"{self.origin}: target.region = auto needs non-collinear "
                f"target points (hull has {len(hull)} vertices)"
            )
        return geometry.Region([hull], resolution=self.resolution,
                               name="target_hull")


# ---------------------------------------------------------------------------
# parsing


_LINE_RE = re.compile(r"^([a-zA-Z_][\w.]*)\s*=\s*(.*)$")
_CALL_RE = re.compile(r"^([A-Za-z_]\w*)\s*(?:\((.*)\))?$", re.DOTALL)
_POINT_RE = re.compile(
    r"^\(\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*\)$"
)


def _fail(origin: str, lineno: int, msg: str):
    where = f"{origin}:{lineno}" if lineno else origin
    raise ConfigError(f"{where}: {msg}")


def _float(tok: str, origin: str, lineno: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        _fail(origin, lineno, f"{what}: {tok!r} is not a number")


def _int(tok: str, origin: str, lineno: int, what: str) -> int:
    v = _float(tok, origin, lineno, what)
    if v != int(v):
        _fail(origin, lineno, f"{what}: {tok!r} is not an integer")
    return int(v)


def _float_list(body: str, origin: str, lineno: int, what: str) -> tuple:
    toks = [t.strip() for t in body.split(",")]
    if any(not t for t in toks):
        _fail(origin, lineno, f"{what}: empty entry in {body!r}")
    return tuple(_float(t, origin, lineno, what) for t in toks)


def _point(tok: str, origin: str, lineno: int, what: str) -> tuple:
    m = _POINT_RE.match(tok.strip())
    if not m:
        _fail(origin, lineno, f"{what}: expected '(x, y)', got {tok!r}")
    return (
        _float(m.group(1), origin, lineno, what),
        _float(m.group(2), origin, lineno, what),
    )


def _point_list(body: str, origin: str, lineno: int, what: str) -> tuple:
    toks = [t.strip() for t in body.split(";")]
    toks = [t for t in toks if t]
    if not toks:
        _fail(origin, lineno, f"{what}: no points given")
    return tuple(_point(t, origin, lineno, what) for t in toks)


def _parse_region(value: str, origin: str, lineno: int) -> RegionSpec:
    m = _CALL_RE.match(value.strip())
    if not m:
        _fail(origin, lineno, f"bad region literal {value!r}")
    kind = m.group(1).lower()
    body = m.group(2)
    if kind == "polygon":
        if not body:
            _fail(origin, lineno, "polygon(...) needs a vertex list")
        pts = _point_list(body, origin, lineno, "polygon vertex")
        if len(pts) < 3:
            _fail(origin, lineno,
                  f"polygon needs at least 3 vertices, got {len(pts)}")
        return RegionSpec("polygon", pts)
    if kind not in _REGION_ARITY:
        known = ", ".join(sorted(_REGION_ARITY) + ["polygon"])
        _fail(origin, lineno,
              f"unknown region preset {m.group(1)!r} (known: {known})")
    lo, hi = _REGION_ARITY[kind]
    args = () if body in (None, "") else _float_list(
        body, origin, lineno, f"{kind} argument")
    if not (lo <= len(args) <= hi):
        _fail(origin, lineno,
              f"{kind} takes {lo}..{hi} arguments, got {len(args)}")
    return RegionSpec(kind, args)


def parse_scenario(text: str, origin: str = "<config>") -> Scenario:
    """Parse and validate a scenario config (grammar in the module docstring).

    Raises :class:`~otlab.errors.ConfigError` with ``origin:line`` prefixes
    on every syntax or validation failure.
    """
    entries: dict = {}
    grids: list = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        cut = raw.find("#")
        line = (raw if cut < 0 else raw[:cut]).strip()
        if not line:
            continue
        m = _LINE_RE.match(line)
        if not m:
            _fail(origin, lineno, f"expected 'key = value', got {line!r}")
        key, value = m.group(1).lower(), m.group(2).strip()
        if not value:
            _fail(origin, lineno, f"empty value for key {key!r}")
        if key == "target.grid":
            grids.append((value, lineno))
        elif key in entries:
            _fail(origin, lineno,
                  f"duplicate key {key!r} (first given on line "
                  f"{entries[key][1]})")
        else:
            entries[key] = (value, lineno)

    known_keys = {
        "name", "cost", "source.region", "source.align", "source.density",
        "target.rings", "target.random", "target.points", "target.weights",
        "target.region", "mesh.resolution", "solver.tol", "solver.max_iter",
        "analyses", "seed", "section.base", "section.focus", "section.lift",
        "section.heights", "loeper.samples", "monotonicity.pairs",
    }
    for key, (_, lineno) in entries.items():
        if key not in known_keys:
            _fail(origin, lineno, f"unknown key {key!r}")

    def take(key):
        return entries.pop(key, None)

    # --- cost --------------------------------------------------------------
    item = take("cost")
    if item is None:
        _fail(origin, 0, "missing required key 'cost'")
    cost_id = item[0]
    if cost_id not in COST_IDS:
        _fail(origin, item[1],
              f"unknown cost {cost_id!r} (known: {', '.join(COST_IDS)})")

    # --- source ------------------------------------------------------------
    item = take("source.region")
    if item is None:
        _fail(origin, 0, "missing required key 'source.region'")
    source_region = _parse_region(item[0], origin, item[1])

    source_align = None
    item = take("source.align")
    if item is not None:
        if item[0].lower() == "center":
            source_align = "center"
        else:
            source_align = _point(item[0], origin, item[1], "source.align")

    density_kind, density_args = "uniform", ()
    item = take("source.density")
    if item is not None:
        m = _CALL_RE.match(item[0])
        kind = m.group(1).lower() if m else ""
        if kind == "uniform" and not m.group(2):
            pass
        elif kind == "checkerboard":
            args = _float_list(m.group(2) or "", origin, item[1],
                               "checkerboard argument")
            if not (1 <= len(args) <= 2):
                _fail(origin, item[1],
                      "checkerboard takes (contrast[, tile])")
            if args[0] < 1.0:
                _fail(origin, item[1],
                      f"checkerboard contrast must be >= 1, got {args[0]}")
            if len(args) == 2 and args[1] <= 0.0:
                _fail(origin, item[1],
                      f"checkerboard tile must be positive, got {args[1]}")
            density_kind, density_args = "checkerboard", args
        else:
            _fail(origin, item[1],
                  f"source.density must be 'uniform' or "
                  f"'checkerboard(contrast[, tile])', got {item[0]!r}")

    # --- target ------------------------------------------------------------
    constructors = []
    target_kind = target_args = None
    item = take("target.rings")
    if item is not None:
        constructors.append(("rings", item[1]))
        args = _float_list(item[0], origin, item[1], "target.rings")
        if len(args) != 4:
            _fail(origin, item[1],
                  "target.rings takes n_rings, per_ring, r_min, r_max")
        n, per = int(args[0]), int(args[1])
        if n < 1 or per < 1 or args[0] != n or args[1] != per:
            _fail(origin, item[1],
                  "target.rings counts must be positive integers")
        if not (0.0 <= args[2] < args[3]):
            _fail(origin, item[1],
                  "target.rings needs 0 <= r_min < r_max")
        target_kind, target_args = "rings", (n, per, args[2], args[3])
    if grids:
        constructors.append(("grid", grids[0][1]))
        parsed = []
        for value, lineno in grids:
            args = _float_list(value, origin, lineno, "target.grid")
            if len(args) != 6:
                _fail(origin, lineno,
                      "target.grid takes nx, ny, xmin, xmax, ymin, ymax")
            nx, ny = int(args[0]), int(args[1])
            if nx < 1 or ny < 1 or args[0] != nx or args[1] != ny:
                _fail(origin, lineno,
                      "target.grid counts must be positive integers")
            if args[2] >= args[3] or args[4] >= args[5]:
                _fail(origin, lineno, "target.grid box is empty")
            parsed.append((nx, ny, args[2], args[3], args[4], args[5]))
        target_kind, target_args = "grid", tuple(parsed)
    item = take("target.random")
    if item is not None:
        constructors.append(("random", item[1]))
        args = _float_list(item[0], origin, item[1], "target.random")
        if len(args) != 5:
            _fail(origin, item[1],
                  "target.random takes count, xmin, xmax, ymin, ymax")
        count = int(args[0])
        if count < 1 or args[0] != count:
            _fail(origin, item[1], "target.random count must be a positive "
                                   "integer")
        if args[1] >= args[2] or args[3] >= args[4]:
            _fail(origin, item[1], "target.random box is empty")
        target_kind, target_args = "random", (count, *args[1:])
    item = take("target.points")
    if item is not None:
        constructors.append(("points", item[1]))
        target_kind = "points"
        target_args = _point_list(item[0], origin, item[1], "target point")

    if len(constructors) == 0:
        _fail(origin, 0,
              "missing target: give one of target.rings / target.grid / "
              "target.random / target.points")
    if len(constructors) > 1:
        names = ", ".join(f"target.{k} (line {ln})" for k, ln in constructors)
        _fail(origin, constructors[1][1],
              f"conflicting target constructors: {names}")

    target_weights = None
    item = take("target.weights")
    if item is not None:
        if target_kind != "points":
            _fail(origin, item[1],
                  "target.weights is only valid with target.points")
        toks = [t for t in (s.strip() for s in item[0].split(";")) if t]
        target_weights = tuple(
            _float(t, origin, item[1], "target weight") for t in toks
        )
        if len(target_weights) != len(target_args):
            _fail(origin, item[1],
                  f"{len(target_weights)} weights for "
                  f"{len(target_args)} points")
        if min(target_weights) <= 0.0:
            _fail(origin, item[1], "target weights must be positive")

    target_region = None
    item = take("target.region")
    if item is not None:
        if item[0].lower() == "auto":
            target_region = "auto"
        else:
            target_region = _parse_region(item[0], origin, item[1])

    # --- mesh / solver ------------------------------------------------------
    resolution = 256
    item = take("mesh.resolution")
    if item is not None:
        resolution = _int(item[0], origin, item[1], "mesh.resolution")
        if resolution < _MIN_RESOLUTION:
            _fail(origin, item[1],
                  f"mesh.resolution must be >= {_MIN_RESOLUTION}, "
                  f"got {resolution}")

    tol = 1e-7
    item = take("solver.tol")
    if item is not None:
        tol = _float(item[0], origin, item[1], "solver.tol")
        if not (tol > 0.0):
            _fail(origin, item[1], f"solver.tol must be positive, got {tol}")

    max_iter = 80
    item = take("solver.max_iter")
    if item is not None:
        max_iter = _int(item[0], origin, item[1], "solver.max_iter")
        if max_iter < 1:
            _fail(origin, item[1],
                  f"solver.max_iter must be >= 1, got {max_iter}")

    # --- analyses -----------------------------------------------------------
    analyses = ()
    analyses_line = 0
    item = take("analyses")
    if item is not None:
        analyses_line = item[1]
        names = [t for t in (s.strip().lower() for s in item[0].split(","))
                 if t]
        for nm in names:
            if nm not in ANALYSES:
                _fail(origin, item[1],
                      f"unknown analysis {nm!r} "
                      f"(known: {', '.join(ANALYSES)})")
        if len(set(names)) != len(names):
            _fail(origin, item[1], "duplicate analysis name")
        # store in canonical dependency order
        analyses = tuple(a for a in ANALYSES if a in names)

    seed = 0
    item = take("seed")
    if item is not None:
        seed = _int(item[0], origin, item[1], "seed")

    # --- section family ------------------------------------------------------
    section_base = section_focus = None
    item = take("section.base")
    if item is not None:
        section_base = _point(item[0], origin, item[1], "section.base")
    item = take("section.focus")
    if item is not None:
        section_focus = _point(item[0], origin, item[1], "section.focus")

    section_lift = 1.0
    item = take("section.lift")
    if item is not None:
        section_lift = _float(item[0], origin, item[1], "section.lift")
        if section_lift < 0.0:
            _fail(origin, item[1],
                  f"section.lift must be >= 0, got {section_lift}")

    section_heights = (0.1, 0.05, 0.025)
    item = take("section.heights")
    if item is not None:
        section_heights = _float_list(item[0], origin, item[1],
                                      "section height")
        if min(section_heights) <= 0.0:
            _fail(origin, item[1], "section heights must be positive")

    needs_section = _SECTION_ANALYSES & set(analyses)
    if needs_section and (section_base is None or section_focus is None):
        _fail(origin, analyses_line,
              f"analyses {sorted(needs_section)} need section.base and "
              f"section.focus")
    if "holes" in analyses and target_region is None:
        _fail(origin, analyses_line,
              "analysis 'holes' needs target.region (a literal or 'auto')")

    loeper_samples = 20000
    item = take("loeper.samples")
    if item is not None:
        loeper_samples = _int(item[0], origin, item[1], "loeper.samples")
        if loeper_samples < 1:
            _fail(origin, item[1], "loeper.samples must be positive")

    monotonicity_pairs = 100
    item = take("monotonicity.pairs")
    if item is not None:
        monotonicity_pairs = _int(item[0], origin, item[1],
                                  "monotonicity.pairs")
        if monotonicity_pairs < 2:
            _fail(origin, item[1], "monotonicity.pairs must be >= 2")

    name_item = take("name")
    if name_item is not None:
        name = name_item[0]
    elif origin not in ("<config>", "<string>"):
        name = Path(origin).stem
    else:
        name = "scenario"

    return Scenario(
        name=name,
        cost_id=cost_id,
        source_region=source_region,
        source_align=source_align,
        density_kind=density_kind,
        density_args=tuple(density_args),
        target_kind=target_kind,
        target_args=target_args,
        target_weights=target_weights,
        target_region=target_region,
        resolution=resolution,
        tol=tol,
        max_iter=max_iter,
        analyses=analyses,
        seed=seed,
        section_base=section_base,
        section_focus=section_focus,
        section_lift=section_lift,
        section_heights=tuple(section_heights),
        loeper_samples=loeper_samples,
        monotonicity_pairs=monotonicity_pairs,
        origin=origin,
    )


def load_scenario(path) -> Scenario:
    """Load and validate a scenario config file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{p}: cannot read scenario file ({exc})") from exc
    return parse_scenario(text, origin=str(p))


# ---------------------------------------------------------------------------
# packaged presets


def _presets_root() -> Path:
    return Path(__file__).resolve().parent / "presets"


def preset_path(name: str) -> Path:
    """Resolve a preset name like ``theorem/annulus`` to its packaged file."""
    stem = name[:-4] if name.endswith(".cfg") else name
    parts = [p for p in stem.replace("\\", "/").split("/") if p]
    if not parts or any(p in (".", "..") for p in parts):
        raise ConfigError(f"bad preset name {name!r}")
    path = _presets_root().joinpath(*parts).with_suffix(".cfg")
    if not path.is_file():
        known = ", ".join(available_presets()) or "(none)"
        raise ConfigError(f"unknown preset {name!r} (known: {known})")
    return path


def available_presets() -> list:
    """Sorted names of all packaged presets (``family/name`` form)."""
    root = _presets_root()
    if not root.is_dir():
        return []
    return sorted(
        str(p.relative_to(root)).removesuffix(".cfg").replace("\\", "/")
        for p in root.rglob("*.cfg")
    )
