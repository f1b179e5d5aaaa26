"""Command line front end: ``pardiff {check-sk,decay-rate,simulate} --config FILE``.

Exit codes: 0 pass, 1 analysis negative, 2 config error, 3 unknown model,
4 numerical precondition failure, 5 degenerate fit window, 6 CFL violation,
7 blow-up.
"""

from __future__ import annotations

import argparse
import logging
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import RunConfig, build_system, load_config, rho_grid
from .errors import ConfigParseError, DegenerateWindow, PardiffError, SkFails
from .kalman import sk_over_sphere
from .littlewood_paley import write_field
from .lyapunov import certification_trace, rate_envelope_fit, rate_scale, select_epsilons
from .reports import write_csv, write_json
from .spectral_sim import (Trajectory, evolve_linear, evolve_nonlinear_ns, fit_decay_exponent,
                           functional_time_series, initial_data, low_frequency_decay)
from .symbols import SymbolicSystem, check_unit, evaluate_symbols, sphere_samples

logger = logging.getLogger("pardiff")


def _directions(system: SymbolicSystem, count: int | None) -> np.ndarray:
    return sphere_samples(system.d, count)


def _omega(cfg: RunConfig, system: SymbolicSystem) -> np.ndarray:
    om = cfg.get("rho_grid", "omega")
    if om is None:
        return np.eye(system.d)[0]
    om = np.asarray(om, dtype=float)
    if om.shape != (system.d,):
        raise ConfigParseError(f"[rho_grid] omega must have {system.d} entries")
    return check_unit(om)


def _certify(cfg: RunConfig, system: SymbolicSystem, grid: np.ndarray | None = None):
    """Full (and, for coupled systems, reduced) certified functional parameters."""
    lcfg = cfg.section("lyapunov")
    count = lcfg.get("directions", 16 if system.d > 1 else None)
    syms = [evaluate_symbols(system, om) for om in _directions(system, count)]
    opts = {"eps0": lcfg.get("eps0", 1.0), "delta": lcfg.get("delta", 0.5), "rho_grid": grid}
    params = select_epsilons(syms, a=1, b=2, kappa=lcfg.get("kappa"), **opts)
    reduced = None
    if system.n1 and system.n2:
        reduced = select_epsilons(syms, a=1, b=0, **opts)
    return syms, params, reduced


def cmd_check_sk(cfg: RunConfig, out: Path) -> int:
    system = build_system(cfg)
    count = cfg.get("sphere", "count")
    report = sk_over_sphere(system, _directions(system, count))
    write_csv(out / "sk_report.csv", report.rows())
    sv = [v.min_singular_value for v in report.verdicts]
    write_json(out / "sk_summary.json", {
        "model": system.name, "directions": len(report.verdicts), "holds": report.holds,
        "failing_directions": sum(not v.holds for v in report.verdicts),
        "min_singular_value": min(sv), "reduced_agrees": report.reduced_agrees})
    logger.info("SK %s on %d directions", "holds" if report.holds else "fails", len(report.verdicts))
    return 0 if report.holds else 1


def cmd_decay_rate(cfg: RunConfig, out: Path) -> int:
    system = build_system(cfg)
    omega = _omega(cfg, system)
    grid = rho_grid(cfg)
    env = rate_envelope_fit(system, omega, grid)
    write_csv(out / "rate_envelope.csv", [{"rho": r, "rate": k} for r, k in zip(env.rho, env.rates)],
              ["rho", "rate"])
    summary = {"model": system.name, "omega": omega, "low_slope": env.low_slope,
               "low_slope_stderr": env.low_stderr, "high_slope": env.high_slope,
               "high_slope_stderr": env.high_stderr, "plateau": env.plateau, "crossover": env.crossover}
    status = 0
    if cfg.get("lyapunov", "certify", False):
        try:
            syms, params, _ = _certify(cfg, system, grid)
        except SkFails:
            summary["certified"] = False
            status = 1
        else:
            trace = certification_trace(syms[0], params, grid)
            required = params.dissipation_c * rate_scale(grid, params.a, params.b, params.kappa)
            write_csv(out / "lyapunov.csv",
                      [{"rho": r, "observed_rate": o, "required_rate": q, "min_eig_H": lo, "max_eig_H": hi}
                       for r, o, q, lo, hi in zip(grid, trace.observed, required, trace.min_eig_h,
                                                  trace.max_eig_h)],
                      ["rho", "observed_rate", "required_rate", "min_eig_H", "max_eig_H"])
            summary.update(certified=True, kappa=params.kappa, epsilons=list(params.epsilons),
                           equivalence_C=params.equivalence_C, dissipation_c=params.dissipation_c)
    write_json(out / "rate_summary.json", summary)
    return status


def _times(sim: dict) -> np.ndarray:
    if "times" in sim:
        times = np.asarray(sim["times"], dtype=float)
    else:
        times = np.linspace(0.0, sim.get("t_end", 1.0), sim.get("n_times", 11))
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) < 0) or times[0] < 0:
        raise ConfigParseError("[sim] times must be a nondecreasing list of nonnegative numbers")
    return times


def cmd_simulate(cfg: RunConfig, out: Path, seed: int | None = None) -> int:
    system = build_system(cfg)
    gcfg, sim = cfg.section("grid"), cfg.section("sim")
    box = gcfg.get("box_length", 1.0)
    n = gcfg.get("n", 32)
    if box <= 0 or n < 2:
        raise ConfigParseError("[grid] needs box_length > 0 and n >= 2")
    seed = sim.get("seed", 0) if seed is None else seed
    kind = sim.get("data", "single-mode")
    opts = {k: sim[k] for k in ("width", "amplitudes", "amplitude", "component", "wavevector", "kmin", "kmax")
            if k in sim}
    try:
        field0 = initial_data(kind, system, box, n, seed=seed, **opts)
    except ValueError as exc:
        raise ConfigParseError(f"[sim] {exc}") from exc
    times = _times(sim)
    _, params, reduced = _certify(cfg, system)
    if sim.get("nonlinear", False):
        result = evolve_nonlinear_ns(system, field0, times, dt=sim.get("dt"), params=params,
                                     reduced_params=reduced)
        traj = result.trajectory
    else:
        traj = evolve_linear(system, field0, times)
    if sim.get("write_fields", True):
        fdir = out / "fields"
        fdir.mkdir(parents=True, exist_ok=True)
        index = []
        for i, (t, fld) in enumerate(traj):
            name = f"field_{i:05d}.bin"
            write_field(fdir / name, fld)
            index.append({"index": i, "time": t, "file": f"fields/{name}"})
        write_csv(out / "index.csv", index, ["index", "time", "file"])
    split_j = sim.get("split_j", 0)
    table = functional_time_series(system, traj, params, split_j, reduced)
    rows = table.rows()
    for row, (_, fld) in zip(rows, traj):
        row["L2"] = fld.l2_norm()
    write_csv(out / "norms.csv", rows)
    fit_cols = ["norm", "exponent", "stderr", "target", "residual", "t_lo", "t_hi", "n_points"]
    summary = {"model": system.name, "data": kind, "seed": seed, "grid": n, "box_length": box,
               "kappa": params.kappa, "epsilons": list(params.epsilons)}
    if sim.get("fit", False):
        report, _, _ = low_frequency_decay(system, field0, n_times=sim.get("fit_points", 25),
                                           octaves=sim.get("octaves", 3))
        write_csv(out / "decay_fit.csv", report.rows(), fit_cols)
        summary["residual_fraction"] = report.residual_fraction
    else:
        series = np.column_stack([table.times, table.columns["V_low"]])
        pos = table.times[table.times > 0]
        try:
            fit = fit_decay_exponent(series, (pos.min(), pos.max()) if pos.size else (0.0, 0.0))
            rows_fit = [{"norm": "V_low", "exponent": fit.exponent, "stderr": fit.stderr,
                         "target": float("nan"), "residual": float("nan"), "t_lo": fit.window[0],
                         "t_hi": fit.window[1], "n_points": fit.n_points}]
        except DegenerateWindow as exc:
            logger.info("no decay fit: %s", exc)
            rows_fit = []
        write_csv(out / "decay_fit.csv", rows_fit, fit_cols)
    write_json(out / "simulate_summary.json", summary)
    return 0


COMMANDS = {"check-sk": cmd_check_sk, "decay-rate": cmd_decay_rate, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pardiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="TOML configuration file")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory (default ./out)")
        p.add_argument("--threads", type=int, default=None, help="BLAS thread count (default hardware)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed overriding [sim] seed")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    limits = threadpool_limits(limits=args.threads) if args.threads else nullcontext()
    try:
        with limits:
            cfg = load_config(args.config)
            args.out.mkdir(parents=True, exist_ok=True)
            if args.command == "simulate":
                return cmd_simulate(cfg, args.out, args.seed)
            return COMMANDS[args.command](cfg, args.out)
    except PardiffError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
