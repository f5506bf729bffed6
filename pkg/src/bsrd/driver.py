"""End-to-end simulation orchestration.

Reads plain-text configs, builds the discrete system, advances it with the
fractional-step scheme (halving dt on Newton failure, up to ten times),
writes VTK snapshots and a CSV time series, and reduces the final state to
pattern metrics with a regime verdict.  A parameter scan couples the
analytical classifier with optional simulations over a diffusion grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .fem import MonolithicSystem, assemble_operators
from .kinetics import (
    CouplingParams,
    DiffusionParams,
    KineticParams,
    ModelParams,
    SteadyState,
    compatibility_residual,
    steady_state,
    steady_state_residual,
)
from .mesh import MAX_REFINEMENT_LEVEL, BulkSurfaceMesh, generate_ball_mesh
from .stability import Regime, classify_regime, dispersion_scan
from .kinetics import jacobian_at
from .timestep import NewtonError, SchemeConfig, SystemState, ThetaStepper
from .vtkio import write_bulk_snapshot, write_surface_snapshot

#: Relative L2 deviation above which a field counts as patterned.
PATTERN_THRESHOLD = 0.05

#: Outer/inner shell amplitude ratio that marks a surface-localized bulk
#: response (shells at ||x|| > 0.8 and ||x|| < 0.5).
SHELL_FACTOR = 5.0

SHELL_OUTER_RADIUS = 0.8
SHELL_INNER_RADIUS = 0.5

#: The surface analogue of the shell test: when the bulk carries a genuine
#: pattern, the surface counts as independently patterned only if its
#: relative deviation reaches 1/RESPONSE_FACTOR of the bulk's.  A surface
#: field slaved to the bulk boundary trace responds at roughly a fifth of
#: the bulk amplitude; an independent surface pattern matches it.
RESPONSE_FACTOR = 3.0

#: Early stop once the relative change of both deviation metrics over this
#: many steps drops below EARLY_STOP_RTOL (checked after MIN_STEPS steps),
#: or once both metrics fall below EARLY_STOP_FLOOR (converged to the
#: uniform state).
EARLY_STOP_WINDOW = 100
EARLY_STOP_RTOL = 1e-6
EARLY_STOP_FLOOR = 1e-7
EARLY_STOP_MIN_STEPS = 200

MAX_DT_HALVINGS = 10


class ConfigError(ValueError):
    """Invalid configuration file, override, or parameter combination."""


@dataclass(frozen=True)
class SimConfig:
    """Everything needed to reproduce one simulation."""

    params: ModelParams
    refinement_level: int = 3
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    t_end: float = 2.0
    snapshot_interval: float = 0.1
    seed: int = 42
    ic_amplitude: float = 0.01
    output_dir: str = "out"


#: key -> (section, python type); the flat key = value config mirrors this.
CONFIG_KEYS: dict[str, type] = {
    "a": float, "b": float, "gamma_bulk": float, "gamma_surf": float,
    "alpha1": float, "alpha2": float, "beta1": float, "beta2": float,
    "kappa1": float, "kappa2": float,
    "d_bulk": float, "d_surf": float,
    "refinement_level": int,
    "dt": float, "theta": float, "alpha": float,
    "newton_tol": float, "newton_max": int, "linear_tol": float,
    "t_end": float, "snapshot_interval": float, "seed": int,
    "ic_amplitude": float, "output_dir": str,
}


def _parse_scalar(text: str, target: type, where: str):
    text = text.strip()
    if target is str:
        if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
            return text[1:-1]
        return text
    if target is int:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {text!r}") from None
    # float: accept decimals and exact rationals like 5/12
    try:
        if "/" in text:
            return float(Fraction(text))
        return float(text)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"{where}: expected a number, got {text!r}") from None


def _strip_comment(line: str) -> str:
    out = []
    quote = None
    for ch in line:
        if quote:
            if ch == quote:
                quote = None
        elif ch in "'\"":
            quote = ch
        elif ch == "#":
            break
        out.append(ch)
    return "".join(out)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse the flat key = value format; values may be integers, decimals,
    exact rationals (5/12), or strings.  Unknown keys are rejected with the
    offending line number."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', "
                              f"got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _parse_scalar(value, CONFIG_KEYS[key],
                                    f"{source}:{lineno} ({key})")
    return values


def read_config(path, overrides: dict | None = None) -> SimConfig:
    """Load a config file, apply overrides, and validate."""
    text = Path(path).read_text()
    values = parse_config_text(text, source=str(path))
    if overrides:
        values.update(overrides)
    return config_from_values(values)


def parse_overrides(pairs) -> dict:
    """Parse repeatable KEY=VALUE command-line overrides."""
    values: dict = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"override {pair!r} is not of the form KEY=VALUE")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"override: unknown key {key!r}")
        values[key] = _parse_scalar(value, CONFIG_KEYS[key], f"override ({key})")
    return values


def default_values() -> dict:
    """Config values of the reference parameter point with equal unit
    diffusion ratios."""
    return {
        "a": 0.1, "b": 0.9, "gamma_bulk": 500.0, "gamma_surf": 500.0,
        "alpha1": 5.0 / 12.0, "alpha2": 5.0, "beta1": 5.0 / 12.0,
        "beta2": 0.0, "kappa1": 0.0, "kappa2": 5.0,
        "d_bulk": 1.0, "d_surf": 1.0,
        "refinement_level": 3,
        "dt": 1e-4, "theta": 1.0 - 1.0 / math.sqrt(2.0),
        "alpha": 2.0 - math.sqrt(2.0),
        "newton_tol": 1e-8, "newton_max": 12, "linear_tol": 1e-10,
        "t_end": 2.0, "snapshot_interval": 0.1, "seed": 42,
        "ic_amplitude": 0.01, "output_dir": "out",
    }


def config_from_values(values: dict) -> SimConfig:
    """Build and validate a SimConfig from a (partial) value mapping."""
    merged = default_values()
    for key in values:
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}")
    merged.update(values)

    if merged["gamma_bulk"] <= 0 or merged["gamma_surf"] <= 0:
        raise ConfigError("degenerate parameters: scale factors must be > 0")
    if merged["a"] < 0 or merged["b"] < 0 or merged["a"] + merged["b"] <= 0:
        raise ConfigError("degenerate parameters: need a, b >= 0 and a + b > 0")
    try:
        kinetics = KineticParams(merged["a"], merged["b"],
                                 merged["gamma_bulk"], merged["gamma_surf"])
        coupling = CouplingParams(merged["alpha1"], merged["alpha2"],
                                  merged["beta1"], merged["beta2"],
                                  merged["kappa1"], merged["kappa2"])
        diffusion = DiffusionParams(merged["d_bulk"], merged["d_surf"])
        scheme = SchemeConfig(dt=merged["dt"], theta=merged["theta"],
                              alpha=merged["alpha"],
                              newton_tol=merged["newton_tol"],
                              newton_max=merged["newton_max"],
                              linear_tol=merged["linear_tol"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    level = merged["refinement_level"]
    if not (0 <= level <= MAX_REFINEMENT_LEVEL):
        raise ConfigError(f"refinement_level must be in [0, {MAX_REFINEMENT_LEVEL}], "
                          f"got {level}")
    if merged["t_end"] <= 0:
        raise ConfigError("t_end must be > 0")
    if merged["snapshot_interval"] < 0:
        raise ConfigError("snapshot_interval must be >= 0 (0 disables snapshots)")
    if merged["ic_amplitude"] < 0:
        raise ConfigError("ic_amplitude must be >= 0")

    check_compatibility(kinetics, coupling)
    return SimConfig(
        params=ModelParams(kinetics=kinetics, coupling=coupling, diffusion=diffusion),
        refinement_level=level, scheme=scheme, t_end=merged["t_end"],
        snapshot_interval=merged["snapshot_interval"], seed=merged["seed"],
        ic_amplitude=merged["ic_amplitude"], output_dir=merged["output_dir"],
    )


def check_compatibility(kinetics: KineticParams, coupling: CouplingParams) -> None:
    """Reject couplings whose uniform steady state violates the boundary
    conditions.

    Checks both the determinant constraint and the sharper requirement that
    the exchange functions vanish at the steady state (the latter implies
    the former; perturbing a single coefficient typically breaks it first).
    """
    ss = steady_state(kinetics)
    h1, h2 = steady_state_residual(kinetics, coupling)
    scale = max(1.0, abs(ss.u_star), abs(ss.v_star))
    if max(abs(h1), abs(h2)) > 1e-12 * scale:
        raise ConfigError(
            "incompatible coupling: the uniform steady state violates the "
            f"boundary conditions (h1 = {h1:.3e}, h2 = {h2:.3e})")
    res = compatibility_residual(coupling)
    if abs(res) > 1e-12 * scale:
        raise ConfigError(
            f"incompatible coupling: determinant constraint residual {res:.3e}")


def write_config(cfg: SimConfig, path) -> None:
    """Serialize a SimConfig back to the plain-text format."""
    k = cfg.params.kinetics
    c = cfg.params.coupling
    d = cfg.params.diffusion
    s = cfg.scheme
    pairs = [
        ("a", k.a), ("b", k.b),
        ("gamma_bulk", k.gamma_bulk), ("gamma_surf", k.gamma_surf),
        ("alpha1", c.alpha1), ("alpha2", c.alpha2),
        ("beta1", c.beta1), ("beta2", c.beta2),
        ("kappa1", c.kappa1), ("kappa2", c.kappa2),
        ("d_bulk", d.d_bulk), ("d_surf", d.d_surf),
        ("refinement_level", cfg.refinement_level),
        ("dt", s.dt), ("theta", s.theta), ("alpha", s.alpha),
        ("newton_tol", s.newton_tol), ("newton_max", s.newton_max),
        ("linear_tol", s.linear_tol),
        ("t_end", cfg.t_end), ("snapshot_interval", cfg.snapshot_interval),
        ("seed", cfg.seed), ("ic_amplitude", cfg.ic_amplitude),
        ("output_dir", f'"{cfg.output_dir}"'),
    ]
    with open(path, "w") as fh:
        fh.write("# coupled bulk-surface simulation config\n")
        for key, value in pairs:
            fh.write(f"{key} = {value!r}\n" if isinstance(value, float)
                     else f"{key} = {value}\n")


@dataclass(frozen=True)
class PatternMetrics:
    """Deviation of the final state from the uniform steady state."""

    rel_dev_bulk: float
    rel_dev_surf: float
    amp_shell_outer: float
    amp_shell_inner: float
    verdict: Regime
    boundary_layer: bool


def compute_metrics(mesh: BulkSurfaceMesh, ops, state: SystemState,
                    steady: SteadyState) -> PatternMetrics:
    """Relative L2 deviations, shell amplitudes, and the regime verdict.

    The verdict is a pure function of the metrics: a field is patterned
    when its relative deviation reaches PATTERN_THRESHOLD.  A patterned
    bulk confined to the outer shell (outer RMS at least SHELL_FACTOR times
    the inner RMS) counts as a boundary layer of a surface pattern rather
    than bulk patterning; symmetrically, when the bulk carries a genuine
    pattern the surface counts as co-patterned only if its deviation is
    within a factor RESPONSE_FACTOR of the bulk's (a weaker surface field
    is a slaved response to the bulk boundary trace).
    """
    du = state.u - steady.u_star
    dr = state.r - steady.r_star
    volume = ops.M_bulk.sum()
    area = ops.M_surf.sum()
    rel_bulk = math.sqrt(max(du @ (ops.M_bulk @ du), 0.0)) / (
        abs(steady.u_star) * math.sqrt(volume))
    rel_surf = math.sqrt(max(dr @ (ops.M_surf @ dr), 0.0)) / (
        abs(steady.r_star) * math.sqrt(area))

    radii = np.linalg.norm(mesh.vertices, axis=1)
    outer = radii > SHELL_OUTER_RADIUS
    inner = radii < SHELL_INNER_RADIUS
    amp_outer = float(np.sqrt(np.mean(du[outer] ** 2))) if outer.any() else 0.0
    amp_inner = float(np.sqrt(np.mean(du[inner] ** 2))) if inner.any() else 0.0

    bulk_patterned = rel_bulk >= PATTERN_THRESHOLD
    surf_patterned = rel_surf >= PATTERN_THRESHOLD
    localized = amp_outer >= SHELL_FACTOR * amp_inner and amp_outer > 0.0
    surf_secondary = rel_surf < rel_bulk / RESPONSE_FACTOR

    layer = False
    if bulk_patterned and not localized:
        if surf_patterned and not surf_secondary:
            verdict = Regime.BOTH
        else:
            verdict = Regime.BULK_ONLY
    elif surf_patterned:
        verdict = Regime.SURFACE_ONLY
        layer = bulk_patterned and localized
    elif bulk_patterned:
        verdict = Regime.BULK_ONLY
    else:
        verdict = Regime.NO_PATTERN
    return PatternMetrics(rel_dev_bulk=rel_bulk, rel_dev_surf=rel_surf,
                          amp_shell_outer=amp_outer, amp_shell_inner=amp_inner,
                          verdict=verdict, boundary_layer=layer)


def make_initial_condition(cfg: SimConfig, steady: SteadyState,
                           mesh: BulkSurfaceMesh) -> SystemState:
    """Multiplicative uniform perturbation around the steady state.

    Each nodal value is steady * (1 + amplitude * xi) with xi drawn
    uniformly from [-1, 1], independently per node and field, from a
    generator seeded with cfg.seed.
    """
    rng = np.random.default_rng(cfg.seed)
    nb = mesh.n_vertices
    ns = mesh.n_surface_vertices
    eps = cfg.ic_amplitude

    def perturb(value, n):
        return value * (1.0 + eps * rng.uniform(-1.0, 1.0, n))

    return SystemState(t=0.0,
                       u=perturb(steady.u_star, nb),
                       v=perturb(steady.v_star, nb),
                       r=perturb(steady.r_star, ns),
                       s=perturb(steady.s_star, ns))


@dataclass
class RunResult:
    state: SystemState
    metrics: PatternMetrics
    n_steps: int
    dt_final: float
    stopped_early: bool
    output_dir: Path


def run(cfg: SimConfig, mesh: BulkSurfaceMesh | None = None,
        quiet: bool = True) -> RunResult:
    """Simulate from t = 0 to cfg.t_end and write all artifacts.

    Writes bulk_NNNN.vtk / surface_NNNN.vtk snapshot pairs, a
    timeseries.csv of metrics, and metrics.csv with the final values.
    Stops early once the metrics settle (see EARLY_STOP_*).  Newton
    failures halve dt, at most MAX_DT_HALVINGS times, before propagating.
    """
    if mesh is None:
        mesh = generate_ball_mesh(cfg.refinement_level)
    ops = assemble_operators(mesh)
    system = MonolithicSystem(ops, cfg.params)
    steady = steady_state(cfg.params.kinetics)
    state = make_initial_condition(cfg, steady, mesh)

    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    scheme = cfg.scheme
    stepper = ThetaStepper(system, scheme)
    halvings = 0
    snap_index = 0
    next_snap = cfg.snapshot_interval if cfg.snapshot_interval > 0 else math.inf

    def snapshot(st: SystemState) -> None:
        nonlocal snap_index
        write_bulk_snapshot(outdir / f"bulk_{snap_index:04d}.vtk", mesh, st.u, st.v,
                            title=f"t = {st.t:.6g}")
        write_surface_snapshot(outdir / f"surface_{snap_index:04d}.vtk", mesh,
                               st.r, st.s, title=f"t = {st.t:.6g}")
        snap_index += 1

    history: list[tuple[float, float]] = []
    stopped_early = False
    n_steps = 0
    metrics = compute_metrics(mesh, ops, state, steady)

    ts_path = outdir / "timeseries.csv"
    with open(ts_path, "w", newline="") as ts_file:
        writer = csv.writer(ts_file)
        writer.writerow(["t", "rel_dev_bulk", "rel_dev_surf",
                         "amp_shell_outer", "amp_shell_inner"])
        writer.writerow([state.t, metrics.rel_dev_bulk, metrics.rel_dev_surf,
                         metrics.amp_shell_outer, metrics.amp_shell_inner])
        snapshot(state)

        while state.t < cfg.t_end - 1e-12:
            try:
                state = stepper.step(state)
            except NewtonError:
                if halvings >= MAX_DT_HALVINGS:
                    raise
                halvings += 1
                scheme = replace(scheme, dt=scheme.dt / 2.0)
                stepper = ThetaStepper(system, scheme)
                continue
            n_steps += 1
            metrics = compute_metrics(mesh, ops, state, steady)
            history.append((metrics.rel_dev_bulk, metrics.rel_dev_surf))
            writer.writerow([state.t, metrics.rel_dev_bulk, metrics.rel_dev_surf,
                             metrics.amp_shell_outer, metrics.amp_shell_inner])
            if state.t >= next_snap - 1e-12:
                snapshot(state)
                next_snap += cfg.snapshot_interval
            if not quiet and n_steps % 500 == 0:
                print(f"  t = {state.t:.4f}  dev_bulk = {metrics.rel_dev_bulk:.3e}  "
                      f"dev_surf = {metrics.rel_dev_surf:.3e}")
            if n_steps >= EARLY_STOP_MIN_STEPS:
                if (metrics.rel_dev_bulk < EARLY_STOP_FLOOR
                        and metrics.rel_dev_surf < EARLY_STOP_FLOOR):
                    stopped_early = True
                    break
                old = history[-1 - EARLY_STOP_WINDOW]
                new = history[-1]
                rel_changes = [abs(n - o) / max(abs(o), 1e-12)
                               for n, o in zip(new, old)]
                if max(rel_changes) < EARLY_STOP_RTOL:
                    stopped_early = True
                    break
        snapshot(state)

    with open(outdir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_final", "rel_dev_bulk", "rel_dev_surf",
                         "amp_shell_outer", "amp_shell_inner", "verdict",
                         "boundary_layer", "n_steps", "dt_final"])
        writer.writerow([state.t, metrics.rel_dev_bulk, metrics.rel_dev_surf,
                         metrics.amp_shell_outer, metrics.amp_shell_inner,
                         metrics.verdict.value, metrics.boundary_layer,
                         n_steps, scheme.dt])

    return RunResult(state=state, metrics=metrics, n_steps=n_steps,
                     dt_final=scheme.dt, stopped_early=stopped_early,
                     output_dir=outdir)


@dataclass(frozen=True)
class ScanRow:
    gamma: float
    d_bulk: float
    d_surf: float
    predicted: Regime
    coupled_regime: Regime
    verdict: Regime | None
    agreement: bool | None


@dataclass
class ScanTable:
    rows: list[ScanRow] = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["gamma", "d_bulk", "d_surf", "predicted",
                             "coupled_regime", "verdict", "agreement"])
            for row in self.rows:
                writer.writerow([
                    row.gamma, row.d_bulk, row.d_surf, row.predicted.value,
                    row.coupled_regime.value,
                    "" if row.verdict is None else row.verdict.value,
                    "" if row.agreement is None else row.agreement,
                ])


def parameter_scan(cfg: SimConfig, d_bulk_values, d_surf_values,
                   gamma_values=None, simulate: bool = False,
                   quiet: bool = True) -> ScanTable:
    """Stability classification (and optionally simulation) over a grid.

    The predicted regime comes from the pattern prediction built on the
    uncoupled kinetics; the coupled classification is reported alongside.
    With ``simulate=True`` each grid point is also run to cfg.t_end and the
    observed verdict and its agreement with the prediction recorded.
    """
    if gamma_values is None:
        gamma_values = [cfg.params.kinetics.gamma_bulk]
    mesh = generate_ball_mesh(cfg.refinement_level) if simulate else None
    table = ScanTable()
    base_kin = cfg.params.kinetics
    for gamma in gamma_values:
        kinetics = KineticParams(base_kin.a, base_kin.b, gamma, gamma)
        for db in d_bulk_values:
            for ds in d_surf_values:
                diffusion = DiffusionParams(d_bulk=db, d_surf=ds)
                analysis = classify_regime(kinetics, cfg.params.coupling, diffusion)
                verdict = None
                agreement = None
                if simulate:
                    params = ModelParams(kinetics=kinetics,
                                         coupling=cfg.params.coupling,
                                         diffusion=diffusion)
                    sub = replace(
                        cfg, params=params,
                        output_dir=str(Path(cfg.output_dir)
                                       / f"scan_g{gamma:g}_db{db:g}_ds{ds:g}"))
                    result = run(sub, mesh=mesh, quiet=quiet)
                    verdict = result.metrics.verdict
                    agreement = verdict == analysis.predicted_pattern_regime
                table.rows.append(ScanRow(
                    gamma=gamma, d_bulk=db, d_surf=ds,
                    predicted=analysis.predicted_pattern_regime,
                    coupled_regime=analysis.regime,
                    verdict=verdict, agreement=agreement))
    return table


@dataclass(frozen=True)
class GrowthRateResult:
    measured_rate: float
    predicted_rate: float
    mode_l: int
    mode_eigenvalue: float


def linear_growth_rate(params: ModelParams, mesh: BulkSurfaceMesh,
                       dt: float = 5e-4, t_end: float = 0.4,
                       fit_start: float = 0.25,
                       amplitude: float = 1e-3) -> GrowthRateResult:
    """Measure the dominant growth rate of the linearized coupled system.

    Seeds the discrete surface eigenmode closest to the fastest-growing
    spherical-harmonic mode of the (uncoupled-kinetics) dispersion table,
    evolves the system linearized at the steady state, and fits the log
    amplitude of the surface deviation over [fit_start, t_end].  Returns
    the fitted rate together with the dispersion table's maximum.
    """
    import scipy.sparse.linalg as spla

    kin = params.kinetics
    ss = steady_state(kin)
    unit = KineticParams(kin.a, kin.b, 1.0, 1.0)
    blocks = jacobian_at(unit, CouplingParams.zero(), ss.as_tuple())
    table = dispersion_scan(blocks, params.diffusion, kin, l_max=50)
    l_star, rate_star = table.max_growth_surf()
    if rate_star <= 0.0:
        raise ValueError("no unstable surface mode at these parameters")
    target = float(l_star * (l_star + 1))

    ops = assemble_operators(mesh)
    vals, vecs = spla.eigsh(ops.K_surf.tocsc(), k=6, M=ops.M_surf.tocsc(),
                            sigma=target, which="LM")
    pick = int(np.argmin(np.abs(vals - target)))
    mu = float(vals[pick])
    phi = vecs[:, pick]
    phi = phi / math.sqrt(phi @ (ops.M_surf @ phi))

    # Eigenvector of the surface branch at the discrete modal eigenvalue.
    g = kin.gamma_surf
    fr, fs_, gr, gs_ = blocks.j_surf[0, 0], blocks.j_surf[0, 1], \
        blocks.j_surf[1, 0], blocks.j_surf[1, 1]
    a_mode = np.array([[-mu + g * fr, g * fs_],
                       [g * gr, -params.diffusion.d_surf * mu + g * gs_]])
    eigvals, eigvecs = np.linalg.eig(a_mode)
    lead = int(np.argmax(eigvals.real))
    e_r, e_s = eigvecs[:, lead].real
    norm = math.hypot(e_r, e_s)
    e_r, e_s = e_r / norm, e_s / norm

    system = MonolithicSystem(ops, params, linearize_at=ss)
    stepper = ThetaStepper(system, SchemeConfig(dt=dt))
    nb = ops.n_bulk
    state = SystemState(t=0.0,
                        u=np.full(nb, ss.u_star), v=np.full(nb, ss.v_star),
                        r=ss.r_star + amplitude * e_r * phi,
                        s=ss.s_star + amplitude * e_s * phi)

    times = []
    logamps = []
    while state.t < t_end - 1e-12:
        state = stepper.step(state)
        dr = state.r - ss.r_star
        ds_ = state.s - ss.s_star
        amp = math.sqrt(dr @ (ops.M_surf @ dr) + ds_ @ (ops.M_surf @ ds_))
        if state.t >= fit_start and amp > 0.0:
            times.append(state.t)
            logamps.append(math.log(amp))
    slope = float(np.polyfit(times, logamps, 1)[0])
    return GrowthRateResult(measured_rate=slope, predicted_rate=rate_star,
                            mode_l=l_star, mode_eigenvalue=mu)
