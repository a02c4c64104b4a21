"""Scenario runner: solve, analyze, and write machine-readable artifacts.

:func:`run_scenario` executes a :class:`~otlab.scenario.Scenario` — solve
first, then the requested analyses in dependency order — and returns a
:class:`RunReport` holding per-analysis verdicts and CSV-ready tables.
Artifacts (CSV files, a plain-text report, SVG layers) are byte-deterministic
for a fixed (scenario, seed) pair: numbers are printed with 12 significant
digits and nothing time- or path-dependent enters the outputs.

Every failed verdict carries the violated inequality and its measured slack.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from . import geometry
from .costs import c_exp, verify_structural
from .errors import MissingLayer, OtlabError, SolverDiverged
from .estimates import (
    aleksandrov_check,
    build_c_cone,
    build_section,
    c_monotonicity_check,
    loeper_check,
    loeper_preset_samples,
)
from .hull import convex_hull, polygon_area
from .scenario import Scenario
from .singular import isolation_report, singular_set, subdifferential_at
from .transport import (
    laguerre_assign,
    rings_radial_init,
    solve_dual,
    transport_map,
)

__all__ = [
    "Verdict",
    "RunReport",
    "run_scenario",
    "export_csv",
    "render_svg",
    "write_artifacts",
    "SVG_LAYERS",
    "LOEPER_TOLERANCES",
]

#: Acceptance tolerance of the maximum-principle sweep per cost family.
LOEPER_TOLERANCES = {
    "quadratic": 1e-12,
    "bilinear": 1e-12,
    "log": 1e-8,
    "sqrt_plus": 1e-8,
}

SVG_LAYERS = ("cells", "singular", "subdiff", "section")

#: Per-analysis RNG stream keys, so adding or removing one analysis never
#: shifts the random draws of another.
_STREAM = {"loeper": 101, "monotonicity": 102, "structural": 103}


def _g12(v) -> str:
    """12-significant-digit decimal formatting shared by all artifacts."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    x = float(v)
    if x != x:
        return "nan"
    if x == 0.0:  # normalize -0.0
        x = 0.0
    return "%.12g" % x


@dataclass(frozen=True)
class Verdict:
    """One acceptance check: ``measured <op> bound``."""

    analysis: str
    name: str
    passed: bool
    measured: float
    bound: float
    op: str  # "<=", ">=", ">", "=="
    detail: str = ""  # what was measured, in words

    @property
    def slack(self) -> float:
        """Distance to the bound; negative values quantify the violation."""
        if self.op in ("<=", "<"):
            return self.bound - self.measured
        if self.op == "==":
            return -abs(self.measured - self.bound)
        return self.measured - self.bound

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        what = self.detail or "measured"
        return (
            f"{status} {self.analysis}.{self.name}: {what} = "
            f"{_g12(self.measured)} {self.op} {_g12(self.bound)} "
            f"(slack = {_g12(self.slack)})"
        )


@dataclass
class RunReport:
    """Everything one scenario run produced (see the module docstring)."""

    scenario: Scenario
    resolution: int
    seed: int
    solution: Optional[object]
    tessellation: Optional[object]
    residual: float
    iterations: int
    verdicts: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # csv name -> (header, rows)
    extras: dict = field(default_factory=dict)  # analysis objects for SVG
    artifacts: list = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def verdict_lines(self) -> list:
        return [v.line() for v in self.verdicts]

    def text(self) -> str:
        """The deterministic plain-text report."""
        s = self.scenario

        def call(kind, args):
            if not args:
                return kind
            return f"{kind}({', '.join(_g12(a) for a in args)})"

        src = call(s.source_region.kind, s.source_region.args
                   if s.source_region.kind != "polygon" else ())
        dens = call(s.density_kind, s.density_args)
        lines = [
            f"scenario: {s.name}",
            f"cost: {s.cost_id}",
            f"source: {src} density={dens}",
            f"target: {s.target_kind}",
            f"resolution: {self.resolution}",
            f"seed: {self.seed}",
            f"solver: tol={_g12(s.tol)} max_iter={s.max_iter}",
            f"analyses: {', '.join(s.analyses) or '(none)'}",
            "",
            f"solver residual: {_g12(self.residual)}",
            f"solver iterations: {self.iterations}",
            "",
        ]
        lines += self.verdict_lines()
        overall = "PASS" if self.all_pass else "FAIL"
        lines += ["", f"overall: {overall}"]
        if self.artifacts:
            lines += ["", "artifacts:"] + [f"  {a}" for a in self.artifacts]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# the run


def run_scenario(
    scn: Scenario,
    out_dir=None,
    resolution: Optional[int] = None,
    seed: Optional[int] = None,
) -> RunReport:
    """Execute a scenario: solve, run its analyses, optionally write artifacts.

    Solver non-convergence becomes a FAIL verdict (analyses needing the
    solution are then skipped), not an exception.  With ``out_dir`` given,
    all CSV tables, the plain-text report, and every available SVG layer
    are written there and recorded in ``report.artifacts``.
    """
    scn = scn.with_overrides(resolution=resolution, seed=seed)
    cost = scn.build_cost()
    region = scn.build_region()
    density = scn.build_density()
    target = scn.build_target()

    init = None
    if (
        target.ring_groups is not None
        and scn.source_region.kind == "disk"
        and scn.density_kind == "uniform"
    ):
        radius = scn.source_region.args[0] if scn.source_region.args else 1.0
        init = rings_radial_init(cost, target, radius)

    report = RunReport(
        scenario=scn,
        resolution=scn.resolution,
        seed=scn.seed,
        solution=None,
        tessellation=None,
        residual=float("nan"),
        iterations=0,
    )

    try:
        solution = solve_dual(
            cost,
            region,
            density,
            target,
            tol=scn.tol,
            max_iter=scn.max_iter,
            tie_groups=target.ring_groups,
            init=init,
        )
    except SolverDiverged as exc:
        report.verdicts.append(
            Verdict(
                "solver", "converged", False, float("inf"), scn.tol, "<=",
                detail=f"grouped mass residual ({exc})",
            )
        )
        _finish(report, out_dir)
        return report

    report.solution = solution
    report.residual = float(solution.residual)
    report.iterations = int(solution.iterations)
    report.verdicts.append(
        Verdict(
            "solver", "converged", solution.residual <= scn.tol,
            float(solution.residual), scn.tol, "<=",
            detail="grouped mass residual",
        )
    )
    report.tessellation = laguerre_assign(solution)

    target_region = None
    if scn.target_region is not None:
        target_region = scn.build_target_region(target)
        report.extras["target_region"] = target_region

    runners = {
        "structural": _run_structural,
        "loeper": _run_loeper,
        "monotonicity": _run_monotonicity,
        "singular": _run_singular,
        "isolation": _run_isolation,
        "holes": _run_holes,
        "sections": _run_sections,
        "aleksandrov": _run_aleksandrov,
        "cone": _run_cone,
    }
    for name in scn.analyses:  # already in canonical dependency order
        try:
            runners[name](report)
        except OtlabError as exc:
            report.verdicts.append(
                Verdict(
                    name, "completed", False, float("inf"), 0.0, "<=",
                    detail=f"analysis aborted: {exc}",
                )
            )

    _finish(report, out_dir)
    return report


def _finish(report: RunReport, out_dir):
    _assemble_tables(report)
    if out_dir is not None:
        write_artifacts(report, out_dir)


def _rng(report: RunReport, analysis: str) -> np.random.Generator:
    return np.random.default_rng((report.seed, _STREAM[analysis]))


# ---------------------------------------------------------------------------
# analyses


def _run_structural(report: RunReport):
    scn = report.scenario
    rep = verify_structural(scn.build_cost(), seed=scn.seed)
    v = []
    v.append(Verdict("structural", "twist", rep.twist_pass,
                     rep.twist_min_gap, 1e-9, ">",
                     detail="min momentum separation"))
    v.append(Verdict("structural", "nondegenerate", rep.nondegenerate_pass,
                     rep.min_abs_det_cross, 1e-12, ">",
                     detail="min |det cross-derivative|"))
    v.append(Verdict("structural", "exp_roundtrip", rep.roundtrip_pass,
                     rep.roundtrip_max_err, 1e-10, "<=",
                     detail="max momentum-chart roundtrip error"))
    v.append(Verdict("structural", "exp_routes_agree", rep.route_pass,
                     rep.route_max_err, 1e-9, "<=",
                     detail="max closed-vs-newton inversion gap"))
    if rep.mtw_flat_family:
        v.append(Verdict("structural", "curvature_flat", rep.mtw_pass,
                         rep.mtw_abs_max, 1e-9, "<=",
                         detail="max |curvature term|"))
    else:
        v.append(Verdict("structural", "curvature_sign", rep.mtw_pass,
                         rep.mtw_min, -1e-8, ">=",
                         detail="min curvature term"))
    report.verdicts += v
    report.extras["structural"] = rep


def _run_loeper(report: RunReport):
    scn = report.scenario
    cost = scn.build_cost()
    rng = _rng(report, "loeper")
    tol = LOEPER_TOLERANCES[scn.cost_id]
    samples = loeper_preset_samples(cost, scn.loeper_samples, rng)
    viol = loeper_check(cost, *samples)
    report.extras["loeper_max_violation"] = viol
    report.extras["loeper_samples"] = scn.loeper_samples
    report.verdicts.append(
        Verdict("loeper", "max_principle", viol <= tol, viol, tol, "<=",
                detail=f"max segment excess over {scn.loeper_samples} tuples")
    )


def _run_monotonicity(report: RunReport):
    scn = report.scenario
    sol = report.solution
    if sol is None:
        return
    cost = sol.cost
    rng = _rng(report, "monotonicity")
    pts = sol.region.sample_points(scn.monotonicity_pairs, rng)
    tmap = transport_map(sol, pts)
    viol = c_monotonicity_check(cost, (pts, tmap.targets))
    report.extras["monotonicity_max_violation"] = viol
    report.extras["monotonicity_pairs"] = len(pts)
    report.verdicts.append(
        Verdict("monotonicity", "optimal_pairs", viol <= 1e-12,
                viol, 1e-12, "<=",
                detail=f"max couple-swap gain over {len(pts)}^2 couples")
    )
    if len(np.unique(tmap.indices)) >= 2:
        swapped = c_monotonicity_check(
            cost, (pts, np.roll(tmap.targets, 1, axis=0))
        )
        report.extras["monotonicity_swapped_gain"] = swapped
        report.verdicts.append(
            Verdict("monotonicity", "swapped_control", swapped > 0.0,
                    swapped, 0.0, ">",
                    detail="max swap gain of the deliberately rolled pairing")
        )


def _run_singular(report: RunReport):
    sol = report.solution
    if sol is None:
        return
    sing = singular_set(sol, tess=report.tessellation)
    report.extras["singular"] = sing
    dims = [
        subdifferential_at(sol, comp.representative).affine_dim
        for comp in sing.components
    ]
    report.extras["singular_affine_dims"] = dims
    if sing.components:
        report.extras["subdiff"] = subdifferential_at(
            sol, sing.components[0].representative
        )


def _run_isolation(report: RunReport):
    sing = report.extras.get("singular")
    if sing is None:
        _run_singular(report)
        sing = report.extras.get("singular")
        if sing is None:
            return
    rep = isolation_report(
        sing, target_region=report.extras.get("target_region")
    )
    report.extras["isolation"] = rep
    report.verdicts.append(
        Verdict("isolation", "consistent", rep.consistent,
                1.0 if rep.consistent else 0.0, 1.0, "==",
                detail="isolated components coexist with target holes "
                       "(1 = consistent)")
    )


def _run_holes(report: RunReport):
    tregion = report.extras.get("target_region")
    if tregion is None:
        report.verdicts.append(
            Verdict("holes", "target_region", False, 0.0, 1.0, "==",
                    detail="target.region must be set for hole analysis")
        )
        return
    hrep = geometry.detect_holes(tregion)
    report.extras["holes"] = hrep

    sol = report.solution
    sing = report.extras.get("singular")
    dims = report.extras.get("singular_affine_dims", [])
    iso = report.extras.get("isolation")
    # the dichotomy checks: when an isolated full-dimensional singularity
    # exists, every hole must be convex in its momentum chart and the
    # subdifferential image must trace the hole boundary
    x0 = None
    if sing is not None and iso is not None:
        for entry, dim in zip(iso.entries, dims):
            if entry.is_isolated and dim == 2:
                x0 = entry.component.representative
                break
    if x0 is not None and hrep.n_holes > 0 and sol is not None:
        cost = sol.cost
        tr = tregion.raster
        conv_reports = []
        for k, hole in enumerate(hrep.holes):
            pts = tr.centers()[hole.mask.ravel()]
            wts = np.full(len(pts), tr.h**2)
            conv = geometry.c_convex_wrt((pts, wts), cost, x0,
                                         focus_side="source")
            conv_reports.append(conv)
            report.verdicts.append(
                Verdict("holes", f"hole{k}_c_convex", conv.is_convex,
                        conv.ratio, 1.0 + conv.tol, "<=",
                        detail="hull area over covered area in the "
                               "singular point's momentum chart")
            )
        report.extras["holes_convexity"] = conv_reports

        sub = subdifferential_at(sol, x0)
        haus = _hull_to_hole_hausdorff(sol, sub, hrep.holes[0],
                                       tregion.raster)
        bound = 3.0 * sol.region.raster.h
        report.verdicts.append(
            Verdict("holes", "subdiff_fills_hole", haus <= bound,
                    haus, bound, "<=",
                    detail="Hausdorff distance, mapped subdifferential "
                           "boundary vs hole boundary")
        )
        report.extras["holes_fill_hausdorff"] = haus


def _hull_to_hole_hausdorff(solution, sub, hole, raster) -> float:
    """Hausdorff distance between the mapped subdifferential hull boundary
    and a hole's raster boundary (the hole mask lives on ``raster``)."""
    hull = sub.hull
    if len(hull) < 2:
        return float("inf")
    # densify the hull boundary in momentum coordinates, then map it
    segs = []
    t = np.linspace(0.0, 1.0, 64, endpoint=False)[:, None]
    for a, b in zip(hull, np.roll(hull, -1, axis=0)):
        segs.append(a[None, :] * (1.0 - t) + b[None, :] * t)
    P = np.vstack(segs)
    A = c_exp(solution.cost, np.broadcast_to(sub.base, P.shape), P)

    interior = ndimage.binary_erosion(hole.mask, border_value=0)
    edge = hole.mask & ~interior
    if not edge.any():
        edge = hole.mask
    B = raster.centers()[edge.ravel()]
    d = cdist(A, B)
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def _run_sections(report: RunReport):
    scn = report.scenario
    sol = report.solution
    if sol is None:
        return
    focus = np.asarray(scn.section_focus, dtype=float)
    base = np.asarray(scn.section_base, dtype=float)
    heights = tuple(sorted(scn.section_heights, reverse=True))
    sections = []
    for h in heights:
        sec = build_section(
            sol, focus, base, height=h, lift=scn.section_lift,
            tess=report.tessellation,
        )
        sections.append(sec)
        report.verdicts.append(
            Verdict("sections", f"c_convex_h{_g12(h)}",
                    sec.convexity.is_convex,
                    sec.convexity.ratio, 1.0 + sec.convexity.tol, "<=",
                    detail="hull area over covered area of the section "
                           "image")
        )
    report.extras["sections"] = sections
    report.extras["section_heights"] = heights
    if "subdiff" not in report.extras:
        report.extras["subdiff"] = subdifferential_at(sol, base)


def _run_aleksandrov(report: RunReport):
    sol = report.solution
    sections = report.extras.get("sections")
    if sol is None or not sections:
        return
    ratios = aleksandrov_check(sol, sections)
    report.extras["ratios"] = ratios
    r0 = float(ratios[0])  # coarsest level (largest height)
    dev = 1.0
    if r0 > 0.0:
        dev = float(max(max(r / r0, r0 / r) for r in ratios))
    report.verdicts.append(
        Verdict("aleksandrov", "family_stable", dev <= 1.5, dev, 1.5, "<=",
                detail="worst shape-ratio factor against the coarsest level")
    )


def _run_cone(report: RunReport):
    scn = report.scenario
    sol = report.solution
    if sol is None:
        return
    focus = np.asarray(scn.section_focus, dtype=float)
    base = np.asarray(scn.section_base, dtype=float)
    cap = build_section(
        sol, focus, base, height=0.0, lift=scn.section_lift,
        tess=report.tessellation,
    )
    cone = build_c_cone(sol, cap, tess=report.tessellation)
    report.extras["cone"] = cone
    report.verdicts.append(
        Verdict("cone", "support_inclusion", cone.inclusion_ok,
                cone.inclusion_max_abs, cone.inclusion_allowance, "<=",
                detail="worst contact deficit over core co-vectors")
    )
    if cap.gap > 0.0 and _interior_to_target_hull(sol, focus):
        report.verdicts.append(
            Verdict("cone", "interior_margin", cone.margin > 0.0,
                    cone.margin, 0.0, ">",
                    detail="focus momentum clearance inside the active "
                           "co-vector hull")
        )


def _interior_to_target_hull(solution, focus) -> bool:
    """True when the focus lies inside the convex hull of the target points
    with at least one raster cell of clearance."""
    hull = convex_hull(solution.target.points)
    if len(hull) < 3:
        return False
    if polygon_area(hull) < 0.0:  # orient counterclockwise
        hull = hull[::-1]
    h = solution.region.raster.h
    e = np.roll(hull, -1, axis=0) - hull
    nrm = np.stack([-e[:, 1], e[:, 0]], axis=1)  # inward for ccw polygons
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    signed = np.einsum("kj,kj->k", np.asarray(focus)[None, :] - hull, nrm)
    return bool(signed.min() >= h)


# ---------------------------------------------------------------------------
# CSV tables


def _assemble_tables(report: RunReport):
    """Build every CSV table this run can emit (header, list of rows)."""
    tables = report.tables
    scn = report.scenario
    sol = report.solution
    tess = report.tessellation

    if sol is not None and tess is not None:
        Y, nu, lam = sol.target.points, sol.target.weights, sol.lam
        m = tess.masses
        tables["masses.csv"] = (
            ["index", "x", "y", "weight", "mass", "abs_error"],
            [
                [str(j), _g12(Y[j, 0]), _g12(Y[j, 1]), _g12(nu[j]),
                 _g12(m[j]), _g12(abs(m[j] - nu[j]))]
                for j in range(len(Y))
            ],
        )
        tables["potential.csv"] = (
            ["index", "lambda"],
            [[str(j), _g12(lam[j])] for j in range(len(lam))],
        )
        nx = sol.region.raster.nx
        inside_flat = np.flatnonzero(tess.inside.ravel())
        assign_flat = tess.assign.ravel()
        tables["tessellation.csv"] = (
            ["iy", "ix", "target_index"],
            [
                [str(f // nx), str(f % nx), str(int(assign_flat[f]))]
                for f in inside_flat
            ],
        )

    rep = report.extras.get("structural")
    if rep is not None:
        tables["structural.csv"] = (
            ["cost", "n_pairs", "seed", "twist_min_gap", "min_abs_det_cross",
             "roundtrip_max_err", "route_max_err", "mtw_min", "mtw_abs_max",
             "all_pass"],
            [[rep.cost_id, str(rep.n_pairs), str(rep.seed),
              _g12(rep.twist_min_gap), _g12(rep.min_abs_det_cross),
              _g12(rep.roundtrip_max_err), _g12(rep.route_max_err),
              _g12(rep.mtw_min), _g12(rep.mtw_abs_max), _g12(rep.all_pass)]],
        )

    if "loeper_max_violation" in report.extras:
        tables["loeper.csv"] = (
            ["cost", "samples", "max_violation"],
            [[scn.cost_id, str(report.extras["loeper_samples"]),
              _g12(report.extras["loeper_max_violation"])]],
        )

    if "monotonicity_max_violation" in report.extras:
        row = [str(report.extras["monotonicity_pairs"]),
               _g12(report.extras["monotonicity_max_violation"]),
               _g12(report.extras.get("monotonicity_swapped_gain",
                                      float("nan")))]
        tables["monotonicity.csv"] = (
            ["pairs", "max_violation", "swapped_gain"], [row],
        )

    sing = report.extras.get("singular")
    if sing is not None:
        dims = report.extras.get("singular_affine_dims", [])
        nx = sing.solution.region.raster.nx
        rows = []
        for k, comp in enumerate(sing.components):
            dim = dims[k] if k < len(dims) else ""
            for f in comp.pixel_index:
                rows.append([str(int(f) // nx), str(int(f) % nx), str(k),
                             str(dim)])
        tables["singular.csv"] = (
            ["iy", "ix", "component", "affine_dim"], rows,
        )

    iso = report.extras.get("isolation")
    if iso is not None:
        dims = report.extras.get("singular_affine_dims", [])
        rows = []
        for k, e in enumerate(iso.entries):
            rows.append([
                str(k), str(e.component.size), _g12(e.component.strength),
                str(e.affine_dim), _g12(e.is_isolated), e.verdict,
            ])
        tables["isolation.csv"] = (
            ["component", "size", "strength", "affine_dim", "isolated",
             "verdict"],
            rows,
        )

    hrep = report.extras.get("holes")
    if hrep is not None:
        convs = report.extras.get("holes_convexity", [])
        rows = []
        for k, hole in enumerate(hrep.holes):
            conv = convs[k] if k < len(convs) else None
            rows.append([
                str(k), str(hole.n_pixels), _g12(hole.area),
                _g12(hole.centroid[0]), _g12(hole.centroid[1]),
                _g12(conv.ratio) if conv is not None else "",
                _g12(conv.is_convex) if conv is not None else "",
            ])
        tables["holes.csv"] = (
            ["hole", "n_pixels", "area", "centroid_x", "centroid_y",
             "convex_ratio", "is_convex"],
            rows,
        )

    sections = report.extras.get("sections")
    if sections:
        ratios = report.extras.get("ratios")
        lo = report.extras.get("loeper_max_violation")
        mono = report.extras.get("monotonicity_max_violation")
        rows = []
        for k, sec in enumerate(sections):
            rows.append([
                scn.name, _g12(sec.height), _g12(sec.gap), _g12(sec.volume),
                _g12(sec.ell), _g12(sec.d_plus), _g12(sec.d_minus),
                _g12(ratios[k]) if ratios is not None else "",
                _g12(lo) if lo is not None else "",
                _g12(mono) if mono is not None else "",
            ])
        tables["estimates.csv"] = (
            ["scenario", "height", "gap", "volume", "ell", "d_plus",
             "d_minus", "ratio", "loeper_max_violation",
             "monotonicity_max_violation"],
            rows,
        )

    cone = report.extras.get("cone")
    if cone is not None:
        tables["cone.csv"] = (
            ["gap", "co_cell", "c_sens", "c_omega", "margin", "r0_pred",
             "active_count", "core_count", "inclusion_max_abs",
             "inclusion_allowance", "inclusion_ok"],
            [[_g12(cone.gap), _g12(cone.co_cell), _g12(cone.C_sens),
              _g12(cone.C_omega), _g12(cone.margin), _g12(cone.r0_pred),
              str(int(cone.active.sum())), str(int(cone.core.sum())),
              _g12(cone.inclusion_max_abs), _g12(cone.inclusion_allowance),
              _g12(cone.inclusion_ok)]],
        )

    tables["verdicts.csv"] = (
        ["analysis", "name", "status", "measured", "op", "bound", "slack"],
        [
            [v.analysis, v.name, "PASS" if v.passed else "FAIL",
             _g12(v.measured), v.op, _g12(v.bound), _g12(v.slack)]
            for v in report.verdicts
        ],
    )


def _csv_bytes(header, rows) -> bytes:
    lines = [",".join(header)]
    lines += [",".join(r) for r in rows]
    return ("\n".join(lines) + "\n").encode("utf-8")


def export_csv(report: RunReport, out_dir) -> list:
    """Write every table of the report as a CSV file; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(report.tables):
        header, rows = report.tables[name]
        path = out / name
        path.write_bytes(_csv_bytes(header, rows))
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# SVG rendering


def _fmt(v: float) -> str:
    s = "%.6g" % (float(v) + 0.0)
    return "0" if s == "-0" else s


def _palette(n: int) -> list:
    """n visually spread colors, deterministic (golden-angle hues)."""
    out = []
    for k in range(max(n, 1)):
        hue = (0.12 + k * 0.6180339887498949) % 1.0
        r, g, b = colorsys.hsv_to_rgb(hue, 0.55, 0.93)
        out.append("#%02x%02x%02x" % (round(r * 255), round(g * 255),
                                      round(b * 255)))
    return out


class _SvgCanvas:
    """Minimal deterministic SVG 1.1 writer in world coordinates (y up)."""

    def __init__(self, xmin, xmax, ymin, ymax, width_px=720.0):
        pad = 0.04 * max(xmax - xmin, ymax - ymin)
        self.x0, self.x1 = xmin - pad, xmax + pad
        self.y0, self.y1 = ymin - pad, ymax + pad
        self.w = self.x1 - self.x0
        self.h = self.y1 - self.y0
        self.scale = width_px / self.w
        self.parts = []

    def _x(self, x) -> str:
        return _fmt((x - self.x0) * self.scale)

    def _y(self, y) -> str:
        return _fmt((self.y1 - y) * self.scale)

    def rect(self, x, y, w, h, fill, opacity=None):
        op = f' fill-opacity="{_fmt(opacity)}"' if opacity is not None else ""
        self.parts.append(
            f'<rect x="{self._x(x)}" y="{self._y(y + h)}" '
            f'width="{_fmt(w * self.scale)}" height="{_fmt(h * self.scale)}" '
            f'fill="{fill}"{op}/>'
        )

    def polygon(self, pts, fill="none", stroke="#000000", width=1.5,
                opacity=None, dashed=False):
        body = " ".join(f"{self._x(p[0])},{self._y(p[1])}" for p in pts)
        op = f' fill-opacity="{_fmt(opacity)}"' if opacity is not None else ""
        dash = ' stroke-dasharray="6 4"' if dashed else ""
        self.parts.append(
            f'<polygon points="{body}" fill="{fill}"{op} stroke="{stroke}" '
            f'stroke-width="{_fmt(width)}"{dash}/>'
        )

    def circle(self, x, y, r_px, fill, stroke="none"):
        self.parts.append(
            f'<circle cx="{self._x(x)}" cy="{self._y(y)}" r="{_fmt(r_px)}" '
            f'fill="{fill}" stroke="{stroke}"/>'
        )

    def text(self, x, y, s, size_px=14):
        self.parts.append(
            f'<text x="{self._x(x)}" y="{self._y(y)}" '
            f'font-family="monospace" font-size="{_fmt(size_px)}" '
            f'fill="#333333">{s}</text>'
        )

    def tobytes(self) -> bytes:
        wpx, hpx = _fmt(self.w * self.scale), _fmt(self.h * self.scale)
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{wpx}" height="{hpx}" viewBox="0 0 {wpx} {hpx}">\n'
            f'<rect x="0" y="0" width="{wpx}" height="{hpx}" '
            'fill="#ffffff"/>\n'
        )
        return (head + "\n".join(self.parts) + "\n</svg>\n").encode("utf-8")


def _mask_runs(mask: np.ndarray):
    """Row-wise run-length encoding of a boolean raster mask."""
    ny, nx = mask.shape
    for iy in range(ny):
        row = mask[iy]
        if not row.any():
            continue
        diff = np.diff(row.astype(np.int8))
        starts = list(np.flatnonzero(diff == 1) + 1)
        ends = list(np.flatnonzero(diff == -1) + 1)
        if row[0]:
            starts = [0] + starts
        if row[-1]:
            ends = ends + [nx]
        for s, e in zip(starts, ends):
            yield iy, s, e


def _assignment_runs(assign: np.ndarray, inside: np.ndarray):
    """Row-wise runs of constant assignment over the inside cells."""
    ny, nx = assign.shape
    coded = np.where(inside, assign, -1)
    for iy in range(ny):
        row = coded[iy]
        if (row < 0).all():
            continue
        change = np.flatnonzero(np.diff(row) != 0) + 1
        bounds = [0] + list(change) + [nx]
        for s, e in zip(bounds[:-1], bounds[1:]):
            j = int(row[s])
            if j >= 0:
                yield iy, s, e, j


def _canvas_for(report: RunReport, include_targets: bool) -> _SvgCanvas:
    sol = report.solution
    r = sol.region.raster
    xs = [r.x0, r.x0 + r.nx * r.h]
    ys = [r.y0, r.y0 + r.ny * r.h]
    if include_targets:
        Y = sol.target.points
        xs += [float(Y[:, 0].min()), float(Y[:, 0].max())]
        ys += [float(Y[:, 1].min()), float(Y[:, 1].max())]
    return _SvgCanvas(min(xs), max(xs), min(ys), max(ys))


def _draw_region_outline(cv: _SvgCanvas, region, stroke="#000000"):
    for ring in region.polygons:
        cv.polygon(ring, fill="none", stroke=stroke, width=1.5)


def _render_cells(report: RunReport) -> bytes:
    tess = report.tessellation
    if tess is None:
        raise MissingLayer("cells layer needs a solved scenario")
    sol = report.solution
    r = sol.region.raster
    cv = _canvas_for(report, include_targets=True)
    colors = _palette(len(sol.target.points))
    for iy, s, e, j in _assignment_runs(tess.assign, tess.inside):
        cv.rect(r.x0 + s * r.h, r.y0 + iy * r.h, (e - s) * r.h, r.h,
                colors[j])
    _draw_region_outline(cv, sol.region)
    for y in sol.target.points:
        cv.circle(y[0], y[1], 2.5, "#000000")
    return cv.tobytes()


def _render_singular(report: RunReport) -> bytes:
    sing = report.extras.get("singular")
    if sing is None:
        raise MissingLayer("singular layer needs the 'singular' analysis")
    sol = report.solution
    r = sol.region.raster
    cv = _canvas_for(report, include_targets=False)
    inside = report.tessellation.inside
    for iy, s, e in _mask_runs(inside):
        cv.rect(r.x0 + s * r.h, r.y0 + iy * r.h, (e - s) * r.h, r.h,
                "#eeeeee")
    for iy, s, e in _mask_runs(sing.raw_mask & inside):
        cv.rect(r.x0 + s * r.h, r.y0 + iy * r.h, (e - s) * r.h, r.h,
                "#ffc9c9")
    for iy, s, e in _mask_runs(sing.filtered_mask):
        cv.rect(r.x0 + s * r.h, r.y0 + iy * r.h, (e - s) * r.h, r.h,
                "#d40000")
    for comp in sing.components:
        cv.circle(comp.representative[0], comp.representative[1], 5.0,
                  "none", stroke="#0044cc")
    _draw_region_outline(cv, sol.region)
    return cv.tobytes()


def _render_subdiff(report: RunReport) -> bytes:
    sub = report.extras.get("subdiff")
    if sub is None:
        raise MissingLayer(
            "subdiff layer needs the 'singular' or 'sections' analysis"
        )
    sol = report.solution
    cv = _canvas_for(report, include_targets=True)
    _draw_region_outline(cv, sol.region)
    hrep = report.extras.get("holes")
    if hrep is not None:
        tregion = report.extras["target_region"]
        tr = tregion.raster
        for hole in hrep.holes:
            for iy, s, e in _mask_runs(hole.mask):
                cv.rect(tr.x0 + s * tr.h, tr.y0 + iy * tr.h,
                        (e - s) * tr.h, tr.h, "#c9e8c9")
    for y in sol.target.points:
        cv.circle(y[0], y[1], 1.5, "#888888")
    if len(sub.hull) >= 2:
        t = np.linspace(0.0, 1.0, 32, endpoint=False)[:, None]
        segs = []
        for a, b in zip(sub.hull, np.roll(sub.hull, -1, axis=0)):
            segs.append(a[None, :] * (1.0 - t) + b[None, :] * t)
        P = np.vstack(segs)
        img = c_exp(sol.cost, np.broadcast_to(sub.base, P.shape), P)
        cv.polygon(img, fill="#3366cc", opacity=0.25, stroke="#0044cc",
                   width=2.0)
    for y in sub.image_points:
        cv.circle(y[0], y[1], 2.5, "#0044cc")
    cv.circle(sub.base[0], sub.base[1], 4.0, "#d40000")
    return cv.tobytes()


def _render_section(report: RunReport) -> bytes:
    sections = report.extras.get("sections")
    if not sections:
        raise MissingLayer("section layer needs the 'sections' analysis")
    sol = report.solution
    r = sol.region.raster
    cv = _canvas_for(report, include_targets=False)
    fills = ["#ffd27f", "#ff9f4d", "#e05c00"]
    for k, sec in enumerate(sections):  # largest height first
        fill = fills[min(k, len(fills) - 1)]
        for iy, s, e in _mask_runs(sec.mask):
            cv.rect(r.x0 + s * r.h, r.y0 + iy * r.h, (e - s) * r.h, r.h,
                    fill)
    _draw_region_outline(cv, sol.region)
    base = sections[0].base
    cv.circle(base[0], base[1], 4.0, "#d40000")
    return cv.tobytes()


_LAYER_RENDERERS = {
    "cells": _render_cells,
    "singular": _render_singular,
    "subdiff": _render_subdiff,
    "section": _render_section,
}


def render_svg(report: RunReport, layer: str) -> bytes:
    """Render one SVG 1.1 layer of a run; bytes are deterministic.

    Raises :class:`~otlab.errors.MissingLayer` when the analysis backing the
    requested layer did not run.
    """
    if layer not in _LAYER_RENDERERS:
        raise MissingLayer(
            f"unknown layer {layer!r} (known: {', '.join(SVG_LAYERS)})"
        )
    if report.solution is None:
        raise MissingLayer(f"{layer} layer needs a solved scenario")
    return _LAYER_RENDERERS[layer](report)


def write_artifacts(report: RunReport, out_dir) -> list:
    """Write CSVs, available SVG layers, and the text report; returns names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for p in export_csv(report, out):
        names.append(p.name)
    for layer in SVG_LAYERS:
        try:
            data = render_svg(report, layer)
        except MissingLayer:
            continue
        name = f"{layer}.svg"
        (out / name).write_bytes(data)
        names.append(name)
    report.artifacts = names + ["report.txt"]
    (out / "report.txt").write_text(report.text(), encoding="utf-8")
    return report.artifacts
