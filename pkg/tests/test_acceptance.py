"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Runtimes are checked against the budgets as well as the numbers. Criterion 7
is the full end-to-end replication and takes several minutes on one core.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from dbscoop import experiments as ex
from dbscoop.cli import main
from dbscoop.coexistence import WifiParams, optimize_cw, residuals, solve_fixed_point, sweep_gamma
from dbscoop.pso import run as pso_run
from dbscoop.rap import brute_force_rap, solve_rap
from dbscoop.rates import LinkBudget, df_rate, direct_rate
from dbscoop.scenario import PsoParams, Region3D, default_scenario, load_config, save_config
from helpers import coexistence_oracle, rate_hessian_minors, small_instance

EXAMPLE_CONFIG = Path(__file__).resolve().parents[1] / "docs" / "scenario.example.json"
WORKERS = os.cpu_count() or 1


def verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def test_criterion_1_coexistence_anchor(capsys):
    t = time.perf_counter()
    gamma = optimize_cw(16, 3, 10, 0.5)
    dt = time.perf_counter() - t
    verdict(capsys, 1, abs(gamma - 6) <= 1 and dt < 1, f"gamma*={gamma} in {dt:.3f}s")


def test_criterion_2_coexistence_suite(capsys):
    t = time.perf_counter()
    worst_res, monotone = 0.0, True
    for aps in (1, 5, 10, 20):
        sols = sweep_gamma(16, 3, aps, range(1, 129))
        for g, s in zip(range(1, 129), sols):
            r = residuals(WifiParams(16, 3, aps, g), s.delta_w, s.delta_d, s.c_w, s.c_d)
            worst_res = max(worst_res, float(np.max(np.abs(r))))
        monotone &= bool(np.all(np.diff([s.c_w for s in sols]) <= 0))
    worst_err = 0.0
    for aps in (1, 5, 10, 20):
        for g in (1, 4, 16, 64, 128):
            s = solve_fixed_point(WifiParams(16, 3, aps, g))
            ref = coexistence_oracle(16, 3, aps, g)
            worst_err = max(worst_err, float(np.max(np.abs(
                np.array([s.delta_w, s.delta_d, s.c_w, s.c_d]) - ref))))
    dt = time.perf_counter() - t
    ok = worst_res < 1e-8 and monotone and worst_err < 1e-6 and dt < 10
    verdict(capsys, 2, ok, f"max residual {worst_res:.1e}, c_W monotone {monotone}, "
                           f"oracle error {worst_err:.1e}, {dt:.2f}s")


def test_criterion_3_concavity(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    d1, d2, d3 = rate_hessian_minors(rng.uniform(1e3, 2e7, 1000), rng.uniform(1e-3, 20, 1000))
    dt = time.perf_counter() - t
    ok = d1.max() <= 1e-10 and np.abs(d2).max() <= 1e-8 and np.abs(d3).max() <= 1e-8 and dt < 5
    verdict(capsys, 3, ok, f"max D1 {d1.max():.1e}, max|D2| {np.abs(d2).max():.1e}, "
                           f"max|D3| {np.abs(d3).max():.1e}, {dt:.2f}s")


def test_criterion_4_rap_oracle(capsys):
    t = time.perf_counter()
    errs, kkt = [], []
    for seed in range(5):
        sc, g = small_instance(seed, 150e6)
        _, rep = solve_rap(sc, g, [0.6])
        oracle = brute_force_rap(sc, g, [0.6], 80).objective(150e6)
        errs.append(abs(rep.objective - oracle) / oracle)
        kkt.append(rep.max_kkt_residual)
    dt = time.perf_counter() - t
    ok = max(errs) <= 0.02 and max(kkt) < 1e-4 and dt < 60
    verdict(capsys, 4, ok, f"max relative error {max(errs):.2e}, max KKT {max(kkt):.1e}, {dt:.1f}s")


def test_criterion_5_df_reduction(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(5)
    mismatches = 0
    for _ in range(100):
        b, p = rng.uniform(1e3, 2e7), rng.uniform(1e-3, 20)
        a2, n = 10 ** rng.uniform(-14, -8), int(rng.integers(1, 6))
        df = df_rate(b, p, a2, 10 ** rng.uniform(-14, -8, n), np.zeros(n),
                     rng.uniform(1e5, 5e6, n), rng.uniform(0.1, 5, n), 4e-21)
        mismatches += df.total != direct_rate(LinkBudget(b, p, a2, 4e-21))
    dt = time.perf_counter() - t
    verdict(capsys, 5, mismatches == 0 and dt < 1, f"{mismatches}/100 mismatches, {dt:.3f}s")


def test_criterion_6_pso(capsys):
    t = time.perf_counter()
    region = Region3D(-1.0, 1.0, -1.0, 1.0, 0.1, 0.4)
    target = np.array([0.3, -0.5, 0.2])

    def dist(w):
        return float(np.linalg.norm(w[0] - target))

    params = PsoParams(particles=20, max_iter=200, stall_window=200, rel_tol=0.0)
    runs = [pso_run(dist, 1, region, params, s) for s in range(20)]
    hits = sum(r.best_cost < 0.01 for r in runs)
    sc = default_scenario(0, num_terminals=4, num_dbs=2).with_target_rate(60e6)
    air = sc.airtime_shares()
    real = [pso_run(ex._cost_fn(sc, air), 2, sc.dbs_region, PsoParams(particles=6, max_iter=15), s)
            for s in range(3)]
    monotone = all(np.all(np.diff(r.cost_trace) <= 0) for r in runs + real)
    dt = time.perf_counter() - t
    verdict(capsys, 6, monotone and hits >= 19 and dt < 30,
            f"traces monotone {monotone}, {hits}/20 within 0.01 km, {dt:.1f}s")


def test_criterion_7_end_to_end(capsys):
    t = time.perf_counter()
    sc = default_scenario(0)
    seeds = ex.seed_list(0, 10)
    rates = [40e6, 60e6]
    fig1 = ex.sweep_target_rate(sc, rates, seeds, workers=WORKERS)
    m = {(r, s): fig1.results[r, s].mean for r in rates for s in ex.SCHEMES}
    ordered = all(m[r, "proposed"] <= m[r, "random"] <= m[r, "no_dbs"] for r in rates)
    top = rates[-1]
    gain = 1 - m[top, "proposed"] / m[top, "no_dbs"]
    fig2 = ex.sweep_num_dbs(sc.with_target_rate(top), range(1, 6), seeds, workers=WORKERS,
                            known={3: fig1.results[top, "proposed"]})
    by_n = [row[1] for row in fig2.rows]
    nonincreasing = all(b <= a * 1.02 for a, b in zip(by_n, by_n[1:]))
    dt = time.perf_counter() - t
    ok = ordered and gain >= 0.10 and nonincreasing and dt < 900
    means = ", ".join(f"{s} {m[top, s] / 1e6:.1f}" for s in ex.SCHEMES)
    verdict(capsys, 7, ok, f"ordering {ordered} ({means} Mbps at {top / 1e6:.0f} Mbps), "
                           f"gain {gain:.1%}, N=1..5 {[round(v / 1e6, 1) for v in by_n]} Mbps "
                           f"nonincreasing {nonincreasing}, {dt:.0f}s")


def test_criterion_8_determinism(capsys, tmp_path):
    # at the default r_T every gap is zero and the swarm stalls at once
    config = tmp_path / "sc.json"
    save_config(load_config(EXAMPLE_CONFIG).with_target_rate(60e6), config)
    t = time.perf_counter()
    runs = []
    for i, workers in enumerate(("1", "1", "2")):
        out = tmp_path / f"r{i}"
        assert main(["solve", "--config", str(config), "--seed", "3", "--out", str(out),
                     "--workers", workers]) == 0
        runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    dt = time.perf_counter() - t
    same = runs[0] == runs[1] == runs[2]
    verdict(capsys, 8, same and dt < 300,
            f"{len(runs[0])} CSVs byte-identical over workers 1/1/2 {same}, {dt:.0f}s")
