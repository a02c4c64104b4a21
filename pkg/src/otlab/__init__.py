"""otlab: a 2-D numerical laboratory for semi-discrete optimal transport.

The package builds Laguerre tessellations of continuous sources against
discrete targets for several cost functions, solves the dual problem, and
provides raster tools for studying where the induced transport potential
fails to be differentiable (creases, cone points, their isolation and
propagation) together with quantitative section estimates.
"""

from .errors import (
    BoundaryTouching,
    ConfigError,
    DegenerateSection,
    EmptySection,
    InvalidPair,
    MissingLayer,
    NoPuncturedNeighborhood,
    NotSingular,
    OtlabError,
    OutOfChart,
    ResolutionTooCoarse,
    SolverDiverged,
)
from .costs import (
    COST_IDS,
    LOG_MIN_SEPARATION,
    CostFunction,
    MtwEvaluation,
    StructuralReport,
    c_exp,
    c_exp_bar,
    make_cost,
    mtw_batch,
    mtw_term,
    verify_structural,
)
from .geometry import (
    CConvexityReport,
    Hole,
    HoleReport,
    Raster,
    Region,
    annulus,
    c_convex_wrt,
    c_segment,
    detect_holes,
    disk,
    l_shape,
    split_pair,
    square,
)
from .transport import (
    DiscreteTarget,
    DualSolution,
    PushforwardReport,
    SourceDensity,
    Tessellation,
    TransportResult,
    checkerboard_density,
    laguerre_assign,
    pushforward_check,
    rings_radial_init,
    solve_dual,
    solve_dual_oracle,
    targets_grid,
    targets_random,
    targets_rings,
    transport_map,
    uniform_density,
)
from .singular import (
    IsolationEntry,
    IsolationReport,
    SingularComponent,
    SingularSet,
    SubdifferentialPolytope,
    isolation_report,
    propagation_check,
    singular_set,
    subdifferential_at,
)
from .estimates import (
    CConeFn,
    ContactSet,
    Section,
    aleksandrov_check,
    build_c_cone,
    build_section,
    c_monotonicity_check,
    contact_set,
    loeper_check,
    loeper_preset_samples,
    section_from_mask,
)
from .scenario import (
    ANALYSES,
    RegionSpec,
    Scenario,
    available_presets,
    load_scenario,
    parse_scenario,
    preset_path,
)
from .runner import (
    LOEPER_TOLERANCES,
    SVG_LAYERS,
    RunReport,
    Verdict,
    export_csv,
    render_svg,
    run_scenario,
    write_artifacts,
)

__version__ = "0.1.0"

__all__ = [
    # costs
    "COST_IDS",
    "LOG_MIN_SEPARATION",
    "CostFunction",
    "MtwEvaluation",
    "StructuralReport",
    "c_exp",
    "c_exp_bar",
    "make_cost",
    "mtw_batch",
    "mtw_term",
    "verify_structural",
    # geometry
    "Raster",
    "Region",
    "square",
    "disk",
    "annulus",
    "split_pair",
    "l_shape",
    "Hole",
    "HoleReport",
    "detect_holes",
    "CConvexityReport",
    "c_convex_wrt",
    "c_segment",
    # transport
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
    # singular
    "SubdifferentialPolytope",
    "SingularComponent",
    "SingularSet",
    "IsolationEntry",
    "IsolationReport",
    "subdifferential_at",
    "singular_set",
    "isolation_report",
    "propagation_check",
    # estimates
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
    # scenario / runner
    "ANALYSES",
    "RegionSpec",
    "Scenario",
    "parse_scenario",
    "load_scenario",
    "preset_path",
    "available_presets",
    "Verdict",
    "RunReport",
    "run_scenario",
    "export_csv",
    "render_svg",
    "write_artifacts",
    "SVG_LAYERS",
    "LOEPER_TOLERANCES",
    # errors
    "OtlabError",
    "OutOfChart",
    "InvalidPair",
    "SolverDiverged",
    "ResolutionTooCoarse",
    "NotSingular",
    "NoPuncturedNeighborhood",
    "DegenerateSection",
    "EmptySection",
    "BoundaryTouching",
    "ConfigError",
    "MissingLayer",
    "__version__",
]
