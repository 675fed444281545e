import dataclasses

import numpy as np
import pytest

from dbscoop import experiments as ex
from dbscoop.rates import LinkBudget, direct_rate
from dbscoop.scenario import PsoParams, default_scenario

FAST = PsoParams(particles=6, max_iter=12, stall_window=5)


def small(seed=0, k=4, n=2, r_t=60e6):
    sc = default_scenario(seed, num_terminals=k, num_dbs=n).with_target_rate(r_t)
    return dataclasses.replace(sc, pso=FAST)


def test_tiny_target_gives_zero_gap():
    sc = small(r_t=1e3)
    for scheme in ex.SCHEMES:
        assert ex.run_scheme(sc, scheme, 0).objective == pytest.approx(0.0, abs=1e-6)


def test_single_terminal_closed_form():
    sc = small(k=1, n=0, r_t=400e6)
    a2 = 10 ** (-(122 + 38 * np.log10(max(np.linalg.norm(sc.terminals[0]), 0.05))) / 10)
    want = max(0.0, 400e6 - direct_rate(LinkBudget(20e6, 20.0, a2, 4e-21)))
    assert ex.run_no_dbs(sc).objective == pytest.approx(want, rel=1e-6)


def test_zero_dbs_matches_no_dbs():
    sc = small(n=0)
    base = ex.run_no_dbs(sc, 3).objective
    assert ex.run_proposed(sc, 3).objective == base
    assert ex.run_random_placement(sc, 3).objective == base


def test_reproducible():
    sc = small()
    a, b = ex.run_proposed(sc, 5), ex.run_proposed(sc, 5)
    assert a.objective == b.objective
    assert np.array_equal(a.positions, b.positions)
    assert ex.run_random_placement(sc, 5).objective == ex.run_random_placement(sc, 5).objective


def test_proposed_beats_random_and_no_dbs():
    res = {s: ex.evaluate(small(), s, seeds=range(3)) for s in ex.SCHEMES}
    assert res["proposed"].mean <= res["random"].mean <= res["no_dbs"].mean


def test_statistics():
    r = ex.ExperimentResult("x", np.array([1.0, 2.0, 4.0]), (0, 1, 2), "h")
    assert r.mean == pytest.approx(7 / 3)
    assert r.std == pytest.approx(np.std([1, 2, 4], ddof=1))
    assert ex.ExperimentResult("x", np.array([3.0]), (0,), "h").std == 0.0


def test_sweep_tables_deterministic_and_worker_independent():
    sc = small(k=3)
    t1 = ex.sweep_target_rate(sc, [40e6, 80e6], seeds=range(2), schemes=("random", "no_dbs"))
    t2 = ex.sweep_target_rate(sc, [40e6, 80e6], seeds=range(2), schemes=("random", "no_dbs"),
                              workers=2)
    assert t1.rows == t2.rows
    assert t1.header == ("r_T", "scheme", "mean_gap", "std")
    assert [r[:2] for r in t1.rows] == [(40e6, "random"), (40e6, "no_dbs"),
                                       (80e6, "random"), (80e6, "no_dbs")]


def test_dbs_sweep_and_reuse():
    sc = small(k=3, r_t=80e6)
    full = ex.sweep_num_dbs(sc, [0, 1, 2], seeds=range(2))
    reused = ex.sweep_num_dbs(sc, [0, 1, 2], seeds=range(2), known={2: full.results[2]})
    assert full.rows == reused.rows
    assert full.rows[0][1] == ex.evaluate(sc.with_num_dbs(0), "no_dbs", seeds=range(2)).mean
    with pytest.raises(ValueError):
        ex.sweep_num_dbs(sc, [1, 2], seeds=range(3), known={2: full.results[2]})


def test_min_zero_count():
    sc = small(k=2, r_t=1e3)
    assert ex.sweep_num_dbs(sc, [2, 1, 0], seeds=range(1)).min_zero_n == 0


def test_cw_sweep_columns():
    tab = ex.cw_sweep([1, 6, 32])
    assert tab.header == ("gamma", "c_w_m1", "c_w_m5", "c_w_m10", "c_w_m20")
    assert len(tab.rows) == 3
    for col in range(1, 5):
        assert tab.rows[0][col] >= tab.rows[1][col] >= tab.rows[2][col]
    assert tab.rows[1][3] == pytest.approx(0.5, abs=0.05)


def test_snapshot_rows():
    sc = small()
    out = ex.run_proposed(sc, 1)
    rows = ex.snapshot_rows(sc, out.positions, out.allocation)
    assert [r[0] for r in rows] == ["mbs"] + ["dbs"] * 2 + ["terminal"] * 4
    served = {r[1]: r[5] for r in rows if r[0] == "terminal"}
    for k, js in ex.association_snapshot(sc, out.positions, out.allocation):
        assert served[k] == ";".join(map(str, js))
        for j in js:
            assert out.allocation.tau[k, j] > 1e-6
    assert np.all(out.allocation.tau.sum(axis=0) <= 0.6 + 1e-9)


def test_trace_rows():
    out = ex.run_proposed(small(), 2)
    cost = ex.cost_trace_rows(out.trace)
    assert len(cost) == out.trace.iterations + 1
    assert all(a[1] >= b[1] for a, b in zip(cost, cost[1:]))
    pos = ex.position_trace_rows(out.trace)
    assert len(pos) == (out.trace.iterations + 1) * FAST.particles * 2
