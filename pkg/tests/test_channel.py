import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbscoop.channel import (atg_path_loss_db, db_to_gain, free_space_db, gains, hata_path_loss_db,
                             los_probability)
from dbscoop.scenario import EnvParams, default_scenario

ENV = EnvParams()
LOS_45 = 0.9676918999472423       # scalar oracle, alpha=9.61, beta=0.16
FREE_SPACE_1KM_2GHZ = 98.46816462347634
OVERHEAD_1KM_2GHZ = 99.46863820725618


def test_hata_reference_points():
    assert hata_path_loss_db(1.0) == 122.0
    assert hata_path_loss_db(0.05) == pytest.approx(72.56086016476871, abs=1e-12)
    assert hata_path_loss_db(0.01) == hata_path_loss_db(0.05)


@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_hata_monotone(d1, d2):
    lo, hi = sorted((d1, d2))
    assert hata_path_loss_db(lo) <= hata_path_loss_db(hi)


def test_los_probability_reference():
    assert los_probability(0.3, 0.3, ENV) == pytest.approx(LOS_45, rel=1e-12)
    overhead = 1 / (1 + 9.61 * math.exp(-0.16 * (90 - 9.61)))
    assert los_probability(0.3, 0.0, ENV) == pytest.approx(overhead, rel=1e-12)
    assert abs(los_probability(0.3, 0.0, ENV) - 1) < 1e-4
    assert los_probability(0.0, 0.5, ENV) == pytest.approx(1 / (1 + 9.61 * math.exp(0.16 * 9.61)))


@given(st.floats(0.01, 2.0), st.floats(0.001, 0.5), st.floats(0.001, 0.5))
def test_los_increasing_in_altitude(d, z1, z2):
    lo, hi = sorted((z1, z2))
    p_lo, p_hi = los_probability(lo, d, ENV), los_probability(hi, d, ENV)
    assert 0 < p_lo <= p_hi < 1
    if hi - lo > 1e-3:
        assert p_lo < p_hi


def test_free_space_and_overhead_loss():
    assert free_space_db(1000.0, 2e9) == pytest.approx(FREE_SPACE_1KM_2GHZ, abs=1e-9)
    pl = atg_path_loss_db([0, 0, 0], [0, 0, 1.0], 2e9, ENV)
    assert pl == pytest.approx(OVERHEAD_1KM_2GHZ, abs=1e-9)


def test_excess_loss_endpoints():
    always = EnvParams(alpha=9.61, beta=0.16, loss_los=3.0, loss_nlos=3.0)
    pl = atg_path_loss_db([0, 0, 0], [0.4, 0.2, 0.1], 2e9, always)
    assert pl == pytest.approx(free_space_db(1000 * math.sqrt(0.21), 2e9) + 3.0)


def test_direct_gain_at_one_km():
    sc = default_scenario(0, num_terminals=1, num_dbs=0, terminal_positions_km=[[1.0, 0.0, 0.0]])
    g = gains(sc, np.zeros((0, 3)))
    assert g.a2[0] == pytest.approx(10 ** -12.2, rel=1e-12)
    assert g.a2[0] == pytest.approx(6.31e-13, rel=1e-3)


def test_identical_dbs_identical_rows(scenario):
    g = gains(scenario, [[0.2, 0.1, 0.3]] * 3)
    assert g.h2[0] == g.h2[1] == g.h2[2]
    assert np.array_equal(g.g2[:, 0], g.g2[:, 2])


@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_farther_dbs_weaker(r1, r2):
    # at 0.4 km altitude the LoS term moves little, free-space loss dominates
    lo, hi = sorted((r1, r2))
    if hi - lo < 1e-3:
        return
    near = atg_path_loss_db([0, 0, 0], [lo, 0, 0.4], 5e9, ENV)
    far = atg_path_loss_db([0, 0, 0], [hi, 0, 0.4], 5e9, ENV)
    assert db_to_gain(far) < db_to_gain(near)


@given(st.integers(0, 1000))
def test_gains_bounded(seed):
    sc = default_scenario(seed, num_dbs=3)
    rng = np.random.default_rng(seed)
    w = sc.dbs_region.lower + rng.random((3, 3)) * sc.dbs_region.widths
    g = gains(sc, w)
    for arr in (g.a2, g.h2, g.g2):
        assert np.all(arr > 0) and np.all(arr <= 1)
