"""Coupled bulk-surface reaction-diffusion on the unit ball.

Linear stability analysis (Routh-Hurwitz conditions, dispersion relations
over spherical-harmonic modes, critical diffusion ratios, regime
classification) and a bulk-surface finite element solver with a
fractional-step theta time integrator, reproducing the four
diffusion-regime experiments.
"""

from .kinetics import (
    CouplingParams,
    DiffusionParams,
    JacobianBlocks,
    KineticParams,
    ModelParams,
    SteadyState,
    compatibility_residual,
    eval_coupling,
    eval_kinetics,
    jacobian_at,
    steady_state,
    steady_state_residual,
)
from .stability import (
    DispersionTable,
    Regime,
    RegimeAnalysis,
    StabilityReport,
    classify_regime,
    critical_diffusion,
    dispersion_scan,
    quartic_coeffs,
    quartic_factors,
    routh_hurwitz,
)
from .mesh import (
    BulkSurfaceMesh,
    MeshError,
    extract_surface,
    generate_ball_mesh,
    load_mesh_text,
    mesh_stats,
    save_mesh_text,
)
from .fem import (
    CoupledSystemOperators,
    MonolithicSystem,
    apply_coupling,
    assemble_operators,
    coupling_matrix,
)
from .timestep import (
    LinearSolveError,
    NewtonError,
    SchemeConfig,
    SolverError,
    SystemState,
    ThetaStepper,
    solve_linear,
)
from .driver import (
    ConfigError,
    PatternMetrics,
    SimConfig,
    compute_metrics,
    linear_growth_rate,
    make_initial_condition,
    parameter_scan,
    read_config,
    run,
    write_config,
)

__version__ = "0.1.0"

__all__ = [
    "BulkSurfaceMesh", "ConfigError", "CoupledSystemOperators",
    "CouplingParams", "DiffusionParams", "DispersionTable", "JacobianBlocks",
    "KineticParams", "LinearSolveError", "MeshError", "ModelParams",
    "MonolithicSystem", "NewtonError", "PatternMetrics", "Regime",
    "RegimeAnalysis", "SchemeConfig", "SimConfig", "SolverError",
    "StabilityReport", "SteadyState", "SystemState", "ThetaStepper",
    "apply_coupling", "assemble_operators", "classify_regime",
    "compatibility_residual", "compute_metrics", "coupling_matrix",
    "critical_diffusion", "dispersion_scan", "eval_coupling", "eval_kinetics",
    "extract_surface", "generate_ball_mesh", "jacobian_at",
    "linear_growth_rate", "load_mesh_text", "make_initial_condition",
    "mesh_stats", "parameter_scan", "quartic_coeffs", "quartic_factors",
    "read_config", "routh_hurwitz", "run", "save_mesh_text", "solve_linear",
    "steady_state", "steady_state_residual", "write_config",
]
