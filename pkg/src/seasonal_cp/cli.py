"""Command-line entry point: ``seasonal-cp {simulate,meanfield,check,sweep,brw}``.

Exit codes: 0 success (or verdict true), 1 verdict false, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from .brw import PeriodicSchedule, brw_batch, brw_run, expected_count, killed_count_identity_test
from .config import BRWConfig, ConfigError, RunConfig, load_config
from .invasibility import WORKED_EXAMPLE, corollary3_check, theorem1_check, worked_example_params
from .meanfield import equilibrium_curve, ode_solve
from .simulator import format_density_csv, quasi_coexistence
from .sweep import parse_grid, rows_to_csv, run_sweep, simulate_config

log = logging.getLogger("seasonal_cp")

EXIT_OK, EXIT_FALSE, EXIT_USAGE = 0, 1, 2


def _write(path: str, text: str) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return path


def _load(args) -> RunConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "t_end", None) is not None:
        cfg = replace(cfg, t_end=args.t_end).validate()
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load(args)
    traj = simulate_config(cfg)
    paths = traj.write(args.out)
    summary = {
        "t_end": cfg.horizon,
        "events": traj.events,
        "absorbed": "false" if traj.absorbed_at is None else "true",
        "absorbed_at": "na" if traj.absorbed_at is None else format(traj.absorbed_at, ".12g"),
    }
    for i in range(cfg.S):
        births, suppressed, deaths = (int(v) for v in traj.counters[i])
        summary[f"species_{i + 1}.births"] = births
        summary[f"species_{i + 1}.suppressed"] = suppressed
        summary[f"species_{i + 1}.deaths"] = deaths
    w0, w1 = cfg.coexistence_window
    if w1 > w0 and w1 <= cfg.horizon:
        qc = quasi_coexistence(traj, (w0, w1), cfg.threshold)
        for i, v in enumerate(qc):
            summary[f"species_{i + 1}.quasi_coexists"] = "true" if v else "false"
    _write(os.path.join(args.out, "summary.txt"), "".join(f"{k} = {v}\n" for k, v in summary.items()))
    if traj.box_counts is not None:
        nb = traj.box_counts.shape[1]
        lines = ["t,box_row,box_col," + ",".join(f"count_{i + 1}" for i in range(cfg.S))]
        for t, boxes in zip(traj.times, traj.box_counts):
            for r in range(nb):
                for c in range(nb):
                    lines.append(f"{format(t, '.12g')},{r},{c}," + ",".join(str(int(v)) for v in boxes[r, c]))
        _write(os.path.join(args.out, "box_counts.csv"), "\n".join(lines) + "\n")
    if not args.no_plot:
        from .plotting import plot_densities

        curves = {}
        if cfg.S == 1 and traj.times.size:
            curve = equilibrium_curve(cfg.params, 1)
            tt = np.linspace(0, traj.times[-1], 800)
            curves["mean-field periodic orbit"] = (tt, curve(tt))
        plot_densities(os.path.join(args.out, "densities.png"), traj.times, traj.densities, cfg.D, curves)
    log.info("wrote %d files to %s", len(paths), args.out)
    return EXIT_OK


def cmd_meanfield(args) -> int:
    cfg = _load(args)
    if cfg.init_mode == "product":
        u0 = cfg.densities
    elif cfg.init_mode == "full":
        u0 = tuple(1.0 if i + 1 == cfg.init_species else 0.0 for i in range(cfg.S))
    else:
        raise ConfigError("meanfield needs init mode 'product' or 'full'")
    dt = cfg.sample_dt if args.dt is None else args.dt
    dt = cfg.D / 20 if dt is None else dt
    traj = ode_solve(cfg.params, u0, cfg.horizon, dt)
    _write(os.path.join(args.out, "meanfield.csv"), format_density_csv(traj.times, traj.u))
    curves = np.column_stack([equilibrium_curve(cfg.params, i)(traj.times) for i in range(1, cfg.S + 1)])
    lines = ["t," + ",".join(f"ubar_{i}" for i in range(1, cfg.S + 1))]
    lines += [",".join(format(v, ".12g") for v in (t, *row)) for t, row in zip(traj.times, curves)]
    _write(os.path.join(args.out, "equilibrium.csv"), "\n".join(lines) + "\n")
    if not args.no_plot:
        from .plotting import plot_densities

        plot_densities(os.path.join(args.out, "meanfield.png"), traj.times, traj.u, cfg.D, title="mean-field")
    return EXIT_OK


def _example_lines(report) -> tuple[list[str], bool]:
    params = worked_example_params()
    curve2 = equilibrium_curve(params, 2)
    integral = curve2.season_integral(1)
    i1 = report.pairs[0].index
    i2 = report.pairs[1].index
    checks = {
        "example.resident_integral": (integral, abs(integral - WORKED_EXAMPLE["resident_integral"]) <= 1e-4),
        "example.invasion_1": (i1, i1 > WORKED_EXAMPLE["death_1_mean"] and abs(i1 - 3169.7) <= 0.5),
        "example.invasion_2": (i2, i2 > WORKED_EXAMPLE["death_2_mean"] and i2 >= WORKED_EXAMPLE["invasion_2_lower"] - 1e-3),
    }
    lines = []
    ok = True
    for k, (v, good) in checks.items():
        lines.append(f"{k} = {format(v, '.12g')}\n")
        lines.append(f"{k}.ok = {'true' if good else 'false'}\n")
        ok &= good
    return lines, ok


def cmd_check(args) -> int:
    if args.example:
        params = worked_example_params()
    else:
        params = _load(args).params
        if params.S != 2:
            raise ConfigError(f"check needs exactly 2 species, got {params.S}")
    report = theorem1_check(params)
    if args.corollary3:
        report.corollary3 = corollary3_check(params, theorem=report)
    text = report.to_text()
    ok = report.verdict
    if args.example:
        lines, good = _example_lines(report)
        text += "".join(lines)
        ok = ok and good
    _write(os.path.join(args.out, "report.txt"), text)
    _write(os.path.join(args.out, "report.csv"), report.to_csv())
    sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_FALSE


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if not args.grid or len(args.grid) > 2:
        raise ConfigError("give one or two --grid axes")
    axes = [parse_grid(g) for g in args.grid]
    rows = run_sweep(cfg, axes, args.replicas, jobs=args.jobs)
    _write(os.path.join(args.out, "sweep.csv"), rows_to_csv(rows))
    if not args.no_plot:
        from .plotting import plot_sweep

        plot_sweep(os.path.join(args.out, "sweep.png"), rows, axes[0][0],
                   axes[1][0] if len(axes) > 1 else None, "qc_fraction")
    return EXIT_OK


def cmd_brw(args) -> int:
    b = load_config(args.config).brw if args.config else BRWConfig()
    over = {k: v for k, v in {
        "alpha": tuple(args.alpha) if args.alpha else None, "D": args.D, "delta": args.delta,
        "kill_T": args.kill_T, "t_end": args.t_end, "replicas": args.replicas,
    }.items() if v is not None}
    b = replace(b, **over)
    if b.delta < 0 or min(b.alpha) < 0 or b.D <= 0 or b.replicas < 1 or b.t_end < 0:
        raise ConfigError("invalid branching-walk parameters")
    seed = 0 if args.seed is None else args.seed
    sched = PeriodicSchedule(b.alpha[0], b.alpha[1], b.D)
    one = brw_run(sched, b.delta, [b.start], b.t_end, kill_T=b.kill_T,
                  sample_dt=b.sample_dt or b.t_end / 100 or None, seed=seed)
    _write(os.path.join(args.out, "counts.csv"), one.to_csv())
    batch = brw_batch(sched, b.delta, b.t_end, b.replicas, start=(b.start,), kill_T=b.kill_T,
                      box=(b.box_corner, b.box_side), seed=seed ^ 1)
    stats = {
        "replicas": b.replicas,
        "capped": batch.n_capped,
        "mean_count": batch.mean,
        "stderr": batch.stderr,
        "expected_count_unkilled": expected_count(sched, b.delta, b.t_end),
    }
    text = "".join(f"{k} = {format(v, '.12g') if isinstance(v, float) else v}\n" for k, v in stats.items())
    _write(os.path.join(args.out, "summary.txt"), text)
    rc = EXIT_OK
    if args.identity:
        rep = killed_count_identity_test(sched, b.delta, b.kill_T, b.start, (b.box_corner, b.box_side),
                                         b.t_end, b.replicas, seed=seed ^ 2)
        _write(os.path.join(args.out, "identity.txt"), rep.to_text())
        text += rep.to_text()
        rc = EXIT_OK if rep.passed else EXIT_FALSE
    sys.stdout.write(text)
    return rc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seasonal-cp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, metavar="PATH")
        sp.add_argument("--seed", type=int, metavar="N")
        sp.add_argument("--out", default=".", metavar="DIR")

    sp = sub.add_parser("simulate", help="run the lattice simulator")
    common(sp)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--no-plot", action="store_true")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("meanfield", help="integrate the mean-field ODE")
    common(sp)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--dt", type=float, help="output spacing (default D/20)")
    sp.add_argument("--no-plot", action="store_true")
    sp.set_defaults(func=cmd_meanfield)

    sp = sub.add_parser("check", help="mutual invasibility report")
    common(sp, config_required=False)
    sp.add_argument("--example", action="store_true", help="use the built-in worked example")
    sp.add_argument("--corollary3", action="store_true")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("sweep", help="grid of mean-field verdicts and simulations")
    common(sp)
    sp.add_argument("--grid", action="append", metavar="KEY=START:STOP:NUM")
    sp.add_argument("--replicas", type=int, default=5)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--no-plot", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("brw", help="periodic branching random walk")
    common(sp, config_required=False)
    sp.add_argument("--alpha", type=float, nargs=2, metavar=("A1", "A2"))
    sp.add_argument("--D", type=float)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--kill-T", type=float)
    sp.add_argument("--t-end", type=float)
    sp.add_argument("--replicas", type=int)
    sp.add_argument("--identity", action="store_true", help="also test the expected-count identity")
    sp.set_defaults(func=cmd_brw)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_USAGE
    except (ValueError, IndexError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
