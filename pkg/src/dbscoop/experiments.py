"""Replicated comparisons, parameter sweeps, traces and snapshots.

Three schemes are compared on the same scenario:

    proposed  PSO over DBS positions, optimal resources at every candidate
    random    DBS positions drawn uniformly over the DBS region, one RAP solve
    no_dbs    MBS only, relaying disabled

Replication ``i`` of a run uses seed ``base + i``; by default each seed also
redraws the terminal layout. Replications and sweep points are independent
jobs, so they can run on a process pool; results are collected in job order
and never depend on the worker count.
"""

from __future__ import annotations

import functools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from dbscoop import coexistence, pso, rap
from dbscoop.channel import gains as channel_gains
from dbscoop.rap import ResourceAllocation, SolverReport
from dbscoop.scenario import Scenario, derive_rng, derive_seed, sample_uniform

SCHEMES = ("proposed", "random", "no_dbs")
DEFAULT_REPLICATIONS = 10
CW_SWEEP_APS = (1, 5, 10, 20)


@dataclass(frozen=True)
class RunOutcome:
    scheme: str
    seed: int
    objective: float            # aggregate gap, bit/s
    positions: np.ndarray       # N x 3 km, empty for no_dbs
    allocation: ResourceAllocation
    report: SolverReport
    trace: pso.PsoResult | None = None


@dataclass(frozen=True)
class ExperimentResult:
    scheme: str
    values: np.ndarray          # per-seed objective, bit/s
    seeds: tuple[int, ...]
    scenario_hash: str

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))

    @property
    def std(self) -> float:
        """Sample standard deviation, 0 for a single replication."""
        return float(np.std(self.values, ddof=1)) if len(self.values) > 1 else 0.0


@dataclass(frozen=True)
class SweepTable:
    header: tuple[str, ...]
    rows: list[tuple]
    results: dict               # sweep key -> ExperimentResult
    min_zero_n: int | None = None


def seed_list(base: int, count: int) -> tuple[int, ...]:
    if count < 1:
        raise ValueError("need at least one replication")
    return tuple(int(base) + i for i in range(count))


def _airtime(sc: Scenario) -> np.ndarray:
    return sc.airtime_shares() if sc.num_dbs else np.zeros(0)


def _cost_fn(sc: Scenario, airtime: np.ndarray) -> Callable[[np.ndarray], float]:
    # a partial of a module-level function pickles, so it can go to workers
    return functools.partial(rap.cost, sc=sc, airtime=airtime)


def run_proposed(sc: Scenario, seed: int | None = None, map_fn=None) -> RunOutcome:
    """PSO placement then the optimal allocation at the best placement."""
    seed = sc.rng_seed if seed is None else int(seed)
    if sc.num_dbs == 0:
        return _with_scheme(run_no_dbs(sc, seed), "proposed")
    airtime = _airtime(sc)
    res = pso.run(_cost_fn(sc, airtime), sc.num_dbs, sc.dbs_region, sc.pso,
                  derive_seed(seed, "pso"), map_fn=map_fn)
    alloc, report = rap.solve_rap(sc, channel_gains(sc, res.best_position), airtime)
    return RunOutcome("proposed", seed, report.objective, res.best_position, alloc, report, res)


def run_random_placement(sc: Scenario, seed: int | None = None) -> RunOutcome:
    """DBSs dropped uniformly at random, resources still optimal."""
    seed = sc.rng_seed if seed is None else int(seed)
    if sc.num_dbs == 0:
        return _with_scheme(run_no_dbs(sc, seed), "random")
    pos = sample_uniform(derive_rng(seed, "random-placement"), sc.num_dbs, sc.dbs_region)
    alloc, report = rap.solve_rap(sc, channel_gains(sc, pos), _airtime(sc))
    return RunOutcome("random", seed, report.objective, pos, alloc, report)


def run_no_dbs(sc: Scenario, seed: int | None = None) -> RunOutcome:
    """Direct links only: MBS bandwidth and power split optimally."""
    seed = sc.rng_seed if seed is None else int(seed)
    empty = np.zeros((0, 3))
    alloc, report = rap.solve_rap(sc, channel_gains(sc, empty), np.zeros(0))
    return RunOutcome("no_dbs", seed, report.objective, empty, alloc, report)


def _with_scheme(out: RunOutcome, scheme: str) -> RunOutcome:
    return RunOutcome(scheme, out.seed, out.objective, out.positions, out.allocation,
                      out.report, out.trace)


_RUNNERS = {"proposed": run_proposed, "random": run_random_placement, "no_dbs": run_no_dbs}


def run_scheme(sc: Scenario, scheme: str, seed: int) -> RunOutcome:
    try:
        fn = _RUNNERS[scheme]
    except KeyError:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}") from None
    return fn(sc, seed)


def _job(args) -> float:
    sc, scheme, seed, redraw = args
    return run_scheme(sc.reseeded(seed, redraw), scheme, seed).objective


def pool_map(fn, jobs: Sequence, workers: int | None) -> list:
    """``map`` over jobs, on a process pool when ``workers`` > 1; order preserved."""
    jobs = list(jobs)
    if not workers or workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
        return list(ex.map(fn, jobs))


def _collect(sc: Scenario, keyed_jobs: list[tuple], workers: int | None, seeds) -> dict:
    """Run (key, scenario, scheme) triples over all seeds; one result per key."""
    jobs = [(s, scheme, seed, redraw) for _, s, scheme, redraw in keyed_jobs for seed in seeds]
    values = pool_map(_job, jobs, workers)
    out = {}
    n = len(seeds)
    for i, (key, s, scheme, _) in enumerate(keyed_jobs):
        out[key] = ExperimentResult(scheme, np.array(values[i * n:(i + 1) * n]), tuple(seeds),
                                    s.digest())
    return out


def evaluate(sc: Scenario, scheme: str, seeds: Sequence[int] | None = None,
             workers: int | None = 1, redraw_terminals: bool = True) -> ExperimentResult:
    """One scheme replicated over ``seeds`` (default: 10 seeds from the scenario seed)."""
    seeds = seed_list(sc.rng_seed, DEFAULT_REPLICATIONS) if seeds is None else tuple(seeds)
    return _collect(sc, [(scheme, sc, scheme, redraw_terminals)], workers, seeds)[scheme]


def sweep_target_rate(sc: Scenario, rates: Iterable[float], seeds: Sequence[int] | None = None,
                      schemes: Sequence[str] = SCHEMES, workers: int | None = 1,
                      redraw_terminals: bool = True) -> SweepTable:
    """Mean aggregate gap per (r_T, scheme); rows (r_T, scheme, mean_gap, std)."""
    seeds = seed_list(sc.rng_seed, DEFAULT_REPLICATIONS) if seeds is None else tuple(seeds)
    rates = [float(r) for r in rates]
    keyed = [((r, scheme), sc.with_target_rate(r), scheme, redraw_terminals)
             for r in rates for scheme in schemes]
    results = _collect(sc, keyed, workers, seeds)
    rows = [(r, scheme, results[r, scheme].mean, results[r, scheme].std)
            for r in rates for scheme in schemes]
    return SweepTable(("r_T", "scheme", "mean_gap", "std"), rows, results)


def sweep_num_dbs(sc: Scenario, counts: Iterable[int], seeds: Sequence[int] | None = None,
                  workers: int | None = 1, redraw_terminals: bool = True,
                  zero_tol: float = 1e-6, known: dict | None = None) -> SweepTable:
    """Mean aggregate gap of the proposed scheme per DBS count; rows (N, mean_gap, std).

    All counts run side by side; ``min_zero_n`` is the smallest N whose
    mean gap is at most ``zero_tol * r_T``, or None. ``known`` maps counts to
    results already computed on the same scenario and seeds (for example by
    a target-rate sweep); those counts are not rerun.
    """
    seeds = seed_list(sc.rng_seed, DEFAULT_REPLICATIONS) if seeds is None else tuple(seeds)
    counts = [int(n) for n in counts]
    if any(n < 0 for n in counts):
        raise ValueError("DBS counts must be >= 0")
    known = dict(known or {})
    for n, res in known.items():
        if res.seeds != seeds or res.scenario_hash != sc.with_num_dbs(n).digest():
            raise ValueError(f"precomputed result for N={n} was made on another scenario or seed list")
    keyed = [(n, sc.with_num_dbs(n), "proposed" if n else "no_dbs", redraw_terminals)
             for n in counts if n not in known]
    results = {**_collect(sc, keyed, workers, seeds), **known}
    rows = [(n, results[n].mean, results[n].std) for n in counts]
    zero = [n for n in sorted(counts) if results[n].mean <= zero_tol * sc.radio.target_rate]
    return SweepTable(("N", "mean_gap", "std"), rows, results, zero[0] if zero else None)


def cw_sweep(gammas: Iterable[int], aps: Sequence[int] = CW_SWEEP_APS, omega: int = 16,
             m: int = 3) -> SweepTable:
    """Wi-Fi collision probability against the DBS window, one column per AP count."""
    gammas = [int(g) for g in gammas]
    cols = {a: [s.c_w for s in coexistence.sweep_gamma(omega, m, a, gammas)] for a in aps}
    rows = [(g, *(cols[a][i] for a in aps)) for i, g in enumerate(gammas)]
    return SweepTable(("gamma", *(f"c_w_m{a}" for a in aps)), rows, cols)


def cost_trace_rows(res: pso.PsoResult) -> list[tuple]:
    return [(i, float(c)) for i, c in enumerate(res.cost_trace)]


def position_trace_rows(res: pso.PsoResult) -> list[tuple]:
    tr = res.position_trace
    return [(it, p, j, *map(float, tr[it, p, j]))
            for it in range(tr.shape[0]) for p in range(tr.shape[1]) for j in range(tr.shape[2])]


def association_snapshot(sc: Scenario, positions, alloc: ResourceAllocation,
                         tol: float = 1e-6) -> list[tuple[int, tuple[int, ...]]]:
    """(terminal, serving DBS indices) for every terminal; a DBS serves when tau > tol."""
    tau = np.asarray(alloc.tau).reshape(sc.num_terminals, -1)
    return [(k, tuple(int(j) for j in np.flatnonzero(tau[k] > tol))) for k in range(tau.shape[0])]


def snapshot_rows(sc: Scenario, positions, alloc: ResourceAllocation,
                  tol: float = 1e-6) -> list[tuple]:
    """Rows (node, index, x_km, y_km, z_km, associated) for MBS, DBSs and terminals.

    ``associated`` is a ';'-joined index list: served terminals for a DBS,
    serving DBSs for a terminal.
    """
    assoc = association_snapshot(sc, positions, alloc, tol)
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    served = {j: [] for j in range(len(positions))}
    for k, js in assoc:
        for j in js:
            served[j].append(k)
    rows = [("mbs", 0, *map(float, sc.mbs), "")]
    rows += [("dbs", j, *map(float, positions[j]), ";".join(map(str, served[j])))
             for j in range(len(positions))]
    rows += [("terminal", k, *map(float, sc.terminals[k]), ";".join(map(str, js)))
             for k, js in assoc]
    return rows


SNAPSHOT_HEADER = ("node", "index", "x_km", "y_km", "z_km", "associated")
COST_TRACE_HEADER = ("iter", "cost_bps")
POSITION_TRACE_HEADER = ("iter", "particle", "dbs", "x_km", "y_km", "z_km")
