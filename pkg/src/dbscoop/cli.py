"""Command-line entry point.

    dbscoop solve --config sc.json [--seed 7]          PSO placement + allocation
    dbscoop rap --config sc.json --positions dbs.csv   allocation for fixed DBSs
    dbscoop coexistence --omega 16 --m 3 --aps 10 --cap 0.5
    dbscoop sweep-target-rate --config sc.json --rates 20e6,40e6,60e6
    dbscoop sweep-dbs --config sc.json --counts 0,1,2,3,4,5
    dbscoop trace --config sc.json                     convergence and snapshot files
    dbscoop gains --config sc.json --positions dbs.csv
    dbscoop validate --config sc.json

Result files go to --out, else $DBSCOOP_OUTPUT_DIR, else ./results. Every
file of a result set is written to a temporary name first and renamed into
place only after all of them were written.
"""

from __future__ import annotations

import argparse
import csv
import functools
import io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from dbscoop import __version__, coexistence, experiments, rap
from dbscoop.channel import gains as channel_gains
from dbscoop.scenario import ConfigError, Scenario, load_config

OUTPUT_ENV = "DBSCOOP_OUTPUT_DIR"
EXIT_ERROR = 1
EXIT_USAGE = 2

log = logging.getLogger("dbscoop")


class CliError(Exception):
    def __init__(self, origin: str, message: str, code: int = EXIT_ERROR):
        super().__init__(f"{origin}: {message}")
        self.code = code


# ------------------------------------------------------------------ CSV

def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # shortest round-trip form
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_result_set(out_dir: Path, files: dict[str, str]) -> list[Path]:
    """Write ``{name: text}`` into ``out_dir``, all or nothing."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            tmp = out_dir / f".{name}.{os.getpid()}.tmp"
            tmp.write_text(text)
            staged.append((tmp, out_dir / name))
    except OSError:
        for tmp, _ in staged:
            tmp.unlink(missing_ok=True)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]


def read_positions(path) -> np.ndarray:
    """N x 3 DBS positions (km) from a CSV file; a non-numeric first row is a header."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise CliError("cli", f"cannot read positions {path}: {exc.strerror}", EXIT_USAGE) from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if rows:
        try:
            float(rows[0][0])
        except ValueError:
            rows = rows[1:]
    try:
        pos = np.array([[float(c) for c in r] for r in rows], dtype=float).reshape(-1, 3)
    except ValueError as exc:
        raise CliError("cli", f"{path}: expected rows of x_km,y_km,z_km", EXIT_USAGE) from exc
    return pos


# ------------------------------------------------------------- commands

def _scenario(args) -> Scenario:
    try:
        return load_config(args.config, seed=args.seed)
    except ConfigError as exc:
        raise CliError("scenario", str(exc), EXIT_USAGE) from exc


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUTPUT_ENV) or "results")


def _workers(args) -> int:
    return max(1, args.workers or os.cpu_count() or 1)


def _finish(args, files: dict[str, str]) -> None:
    for p in write_result_set(_out_dir(args), files):
        log.info("wrote %s", p)


def allocation_rows(sc: Scenario, alloc) -> tuple[tuple[str, ...], list[tuple]]:
    n = alloc.tau.shape[1] if alloc.tau.ndim == 2 else 0
    header = ("terminal", "b_hz", "p_w", *(f"tau_{j + 1}" for j in range(n)), "rate_bps", "gap_bps")
    r_t = sc.radio.target_rate
    rows = [(k, alloc.b[k], alloc.p[k], *alloc.tau[k], alloc.rates[k], max(0.0, r_t - alloc.rates[k]))
            for k in range(len(alloc.b))]
    return header, rows


def _positions_text(pos) -> str:
    return csv_text(("dbs", "x_km", "y_km", "z_km"), [(j, *p) for j, p in enumerate(pos)])


def _run_proposed(sc: Scenario, workers: int) -> experiments.RunOutcome:
    if workers <= 1 or sc.num_dbs == 0:
        return experiments.run_proposed(sc)
    with ProcessPoolExecutor(max_workers=min(workers, sc.pso.particles)) as ex:
        chunk = -(-sc.pso.particles // min(workers, sc.pso.particles))
        return experiments.run_proposed(sc, map_fn=functools.partial(ex.map, chunksize=chunk))


def cmd_solve(args) -> int:
    sc = _scenario(args)
    out = _run_proposed(sc, _workers(args))
    header, rows = allocation_rows(sc, out.allocation)
    files = {
        "allocation.csv": csv_text(header, rows),
        "positions.csv": _positions_text(out.positions),
        "cost_trace.csv": csv_text(experiments.COST_TRACE_HEADER,
                                   experiments.cost_trace_rows(out.trace)),
        "position_trace.csv": csv_text(experiments.POSITION_TRACE_HEADER,
                                       experiments.position_trace_rows(out.trace)),
    }
    _finish(args, files)
    print(f"objective_bps,{_cell(out.objective)}")
    return 0


def cmd_trace(args) -> int:
    sc = _scenario(args)
    out = _run_proposed(sc, _workers(args))
    files = {
        "fig4.csv": csv_text(experiments.COST_TRACE_HEADER, experiments.cost_trace_rows(out.trace)),
        "fig5.csv": csv_text(experiments.POSITION_TRACE_HEADER,
                             experiments.position_trace_rows(out.trace)),
        "fig6.csv": csv_text(experiments.SNAPSHOT_HEADER,
                             experiments.snapshot_rows(sc, out.positions, out.allocation)),
    }
    _finish(args, files)
    print(f"objective_bps,{_cell(out.objective)}")
    return 0


def cmd_rap(args) -> int:
    sc = _scenario(args)
    pos = read_positions(args.positions)
    if len(pos) != sc.num_dbs:
        sc = sc.with_num_dbs(len(pos))
    try:
        alloc, report = rap.solve_for_positions(sc, pos, allow_relay=not args.no_relay)
    except ValueError as exc:
        raise CliError("rap", str(exc)) from exc
    if not report.converged:
        log.warning("rap: interior-point iteration hit its cap; allocation is feasible but may be suboptimal")
    header, rows = allocation_rows(sc, alloc)
    sys.stdout.write(csv_text(header, rows))
    return 0


def cmd_gains(args) -> int:
    sc = _scenario(args)
    pos = read_positions(args.positions)
    g = channel_gains(sc, pos)
    rows = [(k, "mbs", "", g.a2[k]) for k in range(g.num_terminals)]
    rows += [(k, "dbs", j, g.g2[k, j]) for k in range(g.num_terminals) for j in range(g.num_dbs)]
    rows += [("", "backhaul", j, g.h2[j]) for j in range(g.num_dbs)]
    sys.stdout.write(csv_text(("terminal", "link", "dbs", "gain"), rows))
    return 0


def _parse_range(text: str) -> list[int]:
    try:
        lo, hi = (int(t) for t in text.split(".."))
    except ValueError as exc:
        raise CliError("cli", f"expected lo..hi, got {text!r}", EXIT_USAGE) from exc
    if lo < 1 or hi < lo:
        raise CliError("cli", f"bad gamma range {text!r}", EXIT_USAGE)
    return list(range(lo, hi + 1))


def cmd_coexistence(args) -> int:
    try:
        if args.sweep_gamma:
            tab = experiments.cw_sweep(_parse_range(args.sweep_gamma), args.aps, args.omega, args.m)
            sys.stdout.write(csv_text(tab.header, tab.rows))
            return 0
        if len(args.aps) != 1:
            raise CliError("cli", "--gamma and --cap take a single --aps value", EXIT_USAGE)
        aps = args.aps[0]
        if args.cap is not None:
            g = coexistence.optimize_cw(args.omega, args.m, aps, args.cap)
            print(f"gamma_star,{g}")
            return 0
        sol = coexistence.solve_fixed_point(coexistence.WifiParams(args.omega, args.m, aps, args.gamma))
    except (ValueError, coexistence.CoexistenceError) as exc:
        raise CliError("coexistence", str(exc)) from exc
    header = ("gamma", "delta_w", "delta_d", "c_w", "c_d", "airtime")
    sys.stdout.write(csv_text(header, [(args.gamma, sol.delta_w, sol.delta_d, sol.c_w, sol.c_d,
                                        sol.airtime)]))
    return 0


def _floats(text: str, what: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise CliError("cli", f"{what}: expected a comma-separated list", EXIT_USAGE) from exc


def _seeds(args, sc: Scenario):
    return experiments.seed_list(sc.rng_seed, args.replications)


def cmd_sweep_target_rate(args) -> int:
    sc = _scenario(args)
    rates = _floats(args.rates, "--rates")
    schemes = tuple(args.schemes.split(","))
    for s in schemes:
        if s not in experiments.SCHEMES:
            raise CliError("cli", f"unknown scheme {s!r}", EXIT_USAGE)
    tab = experiments.sweep_target_rate(sc, rates, _seeds(args, sc), schemes, _workers(args),
                                        redraw_terminals=not args.fixed_terminals)
    _finish(args, {"fig1.csv": csv_text(tab.header, tab.rows)})
    return 0


def cmd_sweep_dbs(args) -> int:
    sc = _scenario(args)
    counts = [int(c) for c in _floats(args.counts, "--counts")]
    tab = experiments.sweep_num_dbs(sc, counts, _seeds(args, sc), _workers(args),
                                    redraw_terminals=not args.fixed_terminals)
    _finish(args, {"fig2.csv": csv_text(tab.header, tab.rows)})
    print(f"min_zero_gap_dbs,{'' if tab.min_zero_n is None else tab.min_zero_n}")
    return 0


def cmd_validate(args) -> int:
    sc = _scenario(args)
    print(f"ok,{sc.digest()}")
    return 0


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dbscoop", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")
    common.add_argument("--workers", type=int, default=None,
                        help="worker processes (default: CPU count)")
    cfg = argparse.ArgumentParser(add_help=False)
    cfg.add_argument("--config", "--scenario", dest="config", required=True,
                     help="scenario JSON file")
    cfg.add_argument("--seed", type=int, default=None, help="override rng_seed")
    outp = argparse.ArgumentParser(add_help=False)
    outp.add_argument("--out", default=None, help=f"output directory (env {OUTPUT_ENV})")
    reps = argparse.ArgumentParser(add_help=False)
    reps.add_argument("--replications", type=int, default=experiments.DEFAULT_REPLICATIONS)
    reps.add_argument("--fixed-terminals", action="store_true",
                      help="keep the config's terminals for every seed")

    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common, cfg, outp], help="PSO placement and allocation")
    s.set_defaults(fn=cmd_solve)
    s = sub.add_parser("trace", parents=[common, cfg, outp], help="convergence traces and snapshot")
    s.set_defaults(fn=cmd_trace)
    s = sub.add_parser("rap", parents=[common, cfg], help="allocation for fixed DBS positions")
    s.add_argument("--positions", required=True, help="CSV of x_km,y_km,z_km rows")
    s.add_argument("--no-relay", action="store_true", help="direct links only")
    s.set_defaults(fn=cmd_rap)
    s = sub.add_parser("gains", parents=[common, cfg], help="channel gain dump")
    s.add_argument("--positions", required=True)
    s.set_defaults(fn=cmd_gains)
    s = sub.add_parser("coexistence", parents=[common], help="Wi-Fi coexistence model")
    s.add_argument("--omega", type=int, default=16)
    s.add_argument("--m", type=int, default=3)
    s.add_argument("--aps", type=int, nargs="+", default=[10])
    mode = s.add_mutually_exclusive_group(required=True)
    mode.add_argument("--gamma", type=int)
    mode.add_argument("--cap", type=float)
    mode.add_argument("--sweep-gamma", metavar="LO..HI")
    s.set_defaults(fn=cmd_coexistence)
    s = sub.add_parser("sweep-target-rate", parents=[common, cfg, outp, reps])
    s.add_argument("--rates", required=True, help="comma-separated target rates, bit/s")
    s.add_argument("--schemes", default=",".join(experiments.SCHEMES))
    s.set_defaults(fn=cmd_sweep_target_rate)
    s = sub.add_parser("sweep-dbs", parents=[common, cfg, outp, reps])
    s.add_argument("--counts", required=True, help="comma-separated DBS counts")
    s.set_defaults(fn=cmd_sweep_dbs)
    s = sub.add_parser("validate", parents=[common, cfg])
    s.set_defaults(fn=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.ERROR if args.quiet else (logging.INFO if args.verbose == 1 else
                                              logging.DEBUG if args.verbose > 1 else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"dbscoop: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"dbscoop: io: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (rap.InfeasibleInputs, rap.InstanceTooLarge) as exc:
        print(f"dbscoop: rap: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
