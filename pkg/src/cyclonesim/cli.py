"""Command-line runner.

    cyclonesim run       --preset cy2 --t-end 3600 --out results/
    cyclonesim steady    --scenario my.yaml
    cyclonesim calibrate --preset cy1 --out calibrated/
    cyclonesim compare   --preset cy3 --tolerance "eta=0.5,rho_s=5%"

Exit status: 0 success, 2 configuration error, 3 solver failure,
4 comparison outside tolerance.
"""
import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .calibration import CalibrationError, CalibrationTarget, calibrate
from .dae import SolverError, simulate, steady_state
from .geometry import GeometryError
from .report import (compare_report, load_reference, load_summary, parse_tolerance, steady_summary,
                     write_plot_data, write_summary, write_timeseries)
from .scenario import PRESETS, ScenarioError, build_system, load_scenario, preset_scenario, write_scenario
from .thermo import PropertyDomainError
from .units import UnitError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_TOLERANCE = 0, 2, 3, 4

log = logging.getLogger("cyclonesim")


class ConfigError(Exception):
    pass


# scenario, unit and geometry errors are ValueErrors too; so are the
# validation errors of the model dataclasses
CONFIG_ERRORS = (ScenarioError, UnitError, GeometryError, ConfigError, ValueError, OSError)


def _scenarios(args):
    if args.scenario:
        return [load_scenario(p) for p in args.scenario]
    if args.preset:
        return [preset_scenario(p) for p in args.preset]
    raise ConfigError("give --scenario or --preset")


def _outdir(args, cfg, many):
    out = Path(args.out)
    if many and cfg is not None:
        out = out / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _steady(cfg):
    system = build_system(cfg)
    ss = steady_state(system)
    return system, ss, steady_summary(cfg.name, system, ss.x, ss.y)


def cmd_run(cfg, args, out):
    system = build_system(cfg)
    t_end = cfg.output.t_end if args.t_end is None else args.t_end
    if t_end < 0:
        raise ConfigError("--t-end must be non-negative")
    try:
        result = simulate(system, t_end, cfg.output.grid(t_end))
    except SolverError as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None:
            write_timeseries(system, partial, out / "timeseries.csv")
            write_plot_data(system, partial, out / "profiles_long.csv")
            log.error("%s: partial output up to t=%.6g s written to %s", cfg.name, partial.t[-1], out)
        raise
    write_timeseries(system, result, out / "timeseries.csv")
    write_plot_data(system, result, out / "profiles_long.csv")
    write_summary(steady_summary(cfg.name, system, result.x[-1], result.y[-1]), out)
    print(f"{cfg.name}: {len(result.t)} samples to t={result.t[-1]:.6g} s "
          f"({result.stats['accepted']} steps) -> {out}")
    return EXIT_OK


def cmd_steady(cfg, args, out):
    _, ss, summary = _steady(cfg)
    write_summary(summary, out)
    print(f"{cfg.name}: P={summary['pressure']['P']:.5f} bar T_m={summary['temperature']['T_m']:.2f} degC "
          f"eta={summary['efficiency']['eta']:.2f}% rho_s={summary['efficiency']['rho_s']:.4g} kg/m^3 "
          f"({ss.method}, {ss.iterations} iterations)")
    return EXIT_OK


def cmd_calibrate(cfg, args, out):
    t = cfg.targets
    if t.efficiency is None or t.solid_density is None:
        raise ConfigError(f"{cfg.name}: calibration needs targets.efficiency and targets.solid_density")
    system = build_system(cfg)
    res = calibrate(system, CalibrationTarget(t.efficiency, t.solid_density, t.pressure))
    calibrated = cfg.with_flow(f_N=res.f_N, f_c=res.f_c, f_D_scale=res.f_D_scale)
    write_scenario(calibrated, out / f"{cfg.name}_calibrated.yaml")
    print(f"{cfg.name}: f_N^-1={1 / res.f_N:.4g} f_c={res.f_c:.4g} f_D_scale={res.f_D_scale:.4g} "
          f"(eta={res.outputs['eta']:.4f}, rho_s={res.outputs['rho_s']:.4g} kg/m^3, {res.rounds} rounds)")
    return EXIT_OK


def cmd_compare(cfg, args, out):
    try:
        tol = parse_tolerance(args.tolerance)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    reference = load_reference(args.reference)
    if args.summary:
        summary = load_summary(args.summary)
    else:
        summary = _steady(cfg)[2]
        write_summary(summary, out)
    name = summary.get("name")
    if name not in reference:
        raise ConfigError(f"no reference row for {name!r}; rows are {', '.join(reference)}")
    cmp = compare_report(summary, reference[name], tol)
    text = cmp.format()
    (out / f"compare_{name}.txt").write_text(text)
    print(text, end="")
    return EXIT_OK if cmp.passed else EXIT_TOLERANCE


COMMANDS = {"run": cmd_run, "steady": cmd_steady, "calibrate": cmd_calibrate, "compare": cmd_compare}


def _execute(verb, cfg, args, many):
    """One scenario; returns an exit code, never raises for expected failures."""
    try:
        out = _outdir(args, cfg, many)
        return COMMANDS[verb](cfg, args, out)
    except (SolverError, CalibrationError, PropertyDomainError) as exc:
        print(f"solver failure ({cfg.name if cfg else '?'}): {exc}", file=sys.stderr)
        residual = getattr(exc, "residual", None)
        if residual is not None:
            print(f"  last residual norm: {residual}", file=sys.stderr)
        return EXIT_SOLVER
    except CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def build_parser():
    ap = argparse.ArgumentParser(prog="cyclonesim", description="Dynamic preheater-cyclone simulator.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb, help_ in (("run", "simulate in time"), ("steady", "solve for the steady state"),
                        ("calibrate", "fit f_N, f_c and the Darcy scaling to the scenario targets"),
                        ("compare", "compare a steady summary against the reference tables")):
        p = sub.add_parser(verb, help=help_)
        src = p.add_mutually_exclusive_group(required=verb != "compare")
        src.add_argument("--scenario", nargs="+", metavar="PATH", help="scenario file(s)")
        src.add_argument("--preset", nargs="+", choices=PRESETS, help="bundled preset(s)")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--jobs", type=int, default=1, help="scenarios run in parallel")
        if verb == "run":
            p.add_argument("--t-end", type=float, help="end time in seconds (default: scenario)")
        if verb == "compare":
            src.add_argument("--summary", metavar="PATH", help="existing summary.yaml instead of a steady solve")
            p.add_argument("--tolerance", help='e.g. "P=0.002,T_m=5,eta=0.5,rho_s=5%%,eta_sal=0.05"')
            p.add_argument("--reference", metavar="PATH", help="reference tables (default: bundled)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "summary", None):
        return _execute(args.verb, None, args, False)
    try:
        configs = _scenarios(args)
    except CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    many = len(configs) > 1
    if args.jobs > 1 and many:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_execute, [args.verb] * len(configs), configs,
                                  [args] * len(configs), [many] * len(configs)))
    else:
        codes = [_execute(args.verb, cfg, args, many) for cfg in configs]
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
