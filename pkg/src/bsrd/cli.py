"""Command-line frontend: analyze, dispersion, mesh, simulate, scan.

Exit codes: 0 on success, 2 for configuration problems, 3 for solver
failures.  Every subcommand accepts --config and repeatable --set KEY=VALUE
overrides, which take precedence over file values and are applied before
validation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import driver
from .driver import CONFIG_KEYS, ConfigError, SimConfig
from .kinetics import CouplingParams, KineticParams, jacobian_at, steady_state
from .mesh import MeshError, generate_ball_mesh, mesh_stats, save_mesh_text
from .stability import classify_regime, dispersion_scan, report_to_csv, report_to_text
from .timestep import SolverError
from .vtkio import write_mesh_vtk

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _config_key_help() -> str:
    keys = ", ".join(sorted(CONFIG_KEYS))
    return ("configuration keys (file format: one 'key = value' per line, "
            "'#' comments, rationals like 5/12 accepted): " + keys)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="path to a plain-text config file")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key "
                        "(repeatable, applied before validation)")
    parser.add_argument("--out", type=Path, default=None,
                        help="output directory (overrides output_dir)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the RNG seed")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress progress output")


def _load_config(args) -> SimConfig:
    values = {}
    if args.config is not None:
        values = driver.parse_config_text(args.config.read_text(),
                                          source=str(args.config))
    values.update(driver.parse_overrides(args.overrides))
    if args.seed is not None:
        values["seed"] = args.seed
    if args.out is not None:
        values["output_dir"] = str(args.out)
    return driver.config_from_values(values)


def _outdir(cfg: SimConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_analyze(args) -> int:
    cfg = _load_config(args)
    analysis = classify_regime(cfg.params.kinetics, cfg.params.coupling,
                               cfg.params.diffusion)
    text = report_to_text(analysis)
    if not args.quiet:
        print(text)
    out = _outdir(cfg)
    report_to_csv(analysis, out / "stability.csv")
    (out / "stability.txt").write_text(text + "\n")
    if not args.quiet:
        print(f"wrote {out / 'stability.csv'}")
    return EXIT_OK


def cmd_dispersion(args) -> int:
    cfg = _load_config(args)
    kin = cfg.params.kinetics
    ss = steady_state(kin)
    coupling = cfg.params.coupling if args.coupled else CouplingParams.zero()
    blocks = jacobian_at(KineticParams(kin.a, kin.b, 1.0, 1.0), coupling,
                         ss.as_tuple())
    table = dispersion_scan(blocks, cfg.params.diffusion, kin, args.lmax)
    out = _outdir(cfg)
    table.write_csv(out / "dispersion.csv")
    if not args.quiet:
        variant = "coupled" if args.coupled else "uncoupled"
        print(f"dispersion over l = 0..{args.lmax} ({variant} surface kinetics)")
        print(f"  unstable bulk modes   : {table.unstable_bulk_modes()}")
        print(f"  unstable surface modes: {table.unstable_surface_modes()}")
        lb, gb = table.max_growth_bulk()
        ls, gs = table.max_growth_surf()
        print(f"  max growth bulk       : {gb:.4f} at l = {lb}")
        print(f"  max growth surface    : {gs:.4f} at l = {ls}")
        print(f"wrote {out / 'dispersion.csv'}")
    return EXIT_OK


def cmd_mesh(args) -> int:
    cfg = _load_config(args)
    level = args.level if args.level is not None else cfg.refinement_level
    mesh = generate_ball_mesh(level)
    stats = mesh_stats(mesh)
    if not args.quiet:
        print(f"level {level}: {stats}")
    out = _outdir(cfg)
    if args.format in ("txt", "both"):
        save_mesh_text(mesh, out / f"ball_level{level}.txt")
    if args.format in ("vtk", "both"):
        write_mesh_vtk(out / f"ball_level{level}_bulk.vtk",
                       out / f"ball_level{level}_surface.vtk", mesh)
    if not args.quiet:
        print(f"wrote mesh files to {out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    result = driver.run(cfg, quiet=args.quiet)
    m = result.metrics
    if not args.quiet:
        print(f"finished at t = {result.state.t:.6g} after {result.n_steps} steps"
              + (" (early stop)" if result.stopped_early else ""))
        print(f"  rel_dev_bulk = {m.rel_dev_bulk:.4e}")
        print(f"  rel_dev_surf = {m.rel_dev_surf:.4e}")
        print(f"  shell RMS (outer/inner) = {m.amp_shell_outer:.4e} / "
              f"{m.amp_shell_inner:.4e}")
        print(f"  verdict = {m.verdict.value}"
              + (" [boundary layer]" if m.boundary_layer else ""))
        print(f"artifacts in {result.output_dir}")
    return EXIT_OK


def _parse_grid(text: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"invalid grid {text!r}; expected comma-separated "
                          "numbers") from None
    if not values:
        raise ConfigError("empty grid")
    return values


def cmd_scan(args) -> int:
    cfg = _load_config(args)
    d_bulk = _parse_grid(args.d_bulk)
    d_surf = _parse_grid(args.d_surf)
    gammas = _parse_grid(args.gamma) if args.gamma else None
    table = driver.parameter_scan(cfg, d_bulk, d_surf, gamma_values=gammas,
                                  simulate=args.simulate, quiet=args.quiet)
    out = _outdir(cfg)
    table.write_csv(out / "scan.csv")
    if not args.quiet:
        print(f"{'gamma':>8} {'d_bulk':>8} {'d_surf':>8} {'predicted':>14} "
              f"{'coupled':>20} {'verdict':>14} {'agree':>6}")
        for row in table.rows:
            verdict = row.verdict.value if row.verdict else "-"
            agree = "" if row.agreement is None else str(row.agreement)
            print(f"{row.gamma:8g} {row.d_bulk:8g} {row.d_surf:8g} "
                  f"{row.predicted.value:>14} {row.coupled_regime.value:>20} "
                  f"{verdict:>14} {agree:>6}")
        print(f"wrote {out / 'scan.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsrd",
        description="Turing stability analysis and bulk-surface finite "
                    "element simulation of a coupled reaction-diffusion "
                    "system on the unit ball.",
        epilog=_config_key_help())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="evaluate every stability condition "
                       "and classify the regime", epilog=_config_key_help())
    _add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("dispersion", help="tabulate the dispersion relations "
                       "over spherical-harmonic modes", epilog=_config_key_help())
    _add_common(p)
    p.add_argument("--lmax", type=int, default=50, help="largest mode index")
    p.add_argument("--coupled", action="store_true",
                   help="use the coupled surface Jacobian instead of the "
                        "plain reaction kinetics")
    p.set_defaults(func=cmd_dispersion)

    p = sub.add_parser("mesh", help="generate a ball mesh and export it",
                       epilog=_config_key_help())
    _add_common(p)
    p.add_argument("--level", type=int, default=None,
                   help="refinement level (defaults to the config value)")
    p.add_argument("--format", choices=("vtk", "txt", "both"), default="both")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("simulate", help="run one simulation and report the "
                       "pattern verdict", epilog=_config_key_help())
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("scan", help="classify (and optionally simulate) over "
                       "a diffusion-ratio grid", epilog=_config_key_help())
    _add_common(p)
    p.add_argument("--d-bulk", default="1,20", help="comma-separated values")
    p.add_argument("--d-surf", default="1,20", help="comma-separated values")
    p.add_argument("--gamma", default=None, help="comma-separated values")
    p.add_argument("--simulate", action="store_true",
                   help="also run a simulation per grid point")
    p.set_defaults(func=cmd_scan)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, MeshError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
