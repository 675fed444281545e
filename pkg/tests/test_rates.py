import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbscoop.rates import LinkBudget, backhaul_ok, band_rate, cap, df_rate, direct_rate

N0 = 4e-21
RATE_REF = 146210317.3348003   # scalar oracle: 20 MHz, 20 W, gain 10^-12.2


def test_cap_values():
    assert cap(0) == 0.0
    assert cap(1) == 1.0
    assert cap(3) == 2.0


def test_direct_rate_reference():
    assert direct_rate(LinkBudget(20e6, 0.0, 6.31e-13, N0)) == 0.0
    assert direct_rate(LinkBudget(20e6, 20.0, 10 ** -12.2, N0)) == pytest.approx(RATE_REF, rel=1e-12)
    assert direct_rate(LinkBudget(20e6, 20.0, 6.31e-13, N0)) == pytest.approx(1.46e8, rel=1e-2)


def test_vanishing_bandwidth():
    assert band_rate(0.0, 5.0, 1e-10, N0) == 0.0
    assert band_rate(1e-6, 5.0, 1e-10, N0) < 1e-3


def test_df_single_relay_term():
    r = df_rate(1e6, 1.0, 0.0, [1e-11], [1.0], 5e6, 5.0, N0)
    assert r.total == pytest.approx(5e6 * np.log2(1 + 1e-11 * 5 / (5e6 * N0)))


def test_df_linear_in_tau():
    two = df_rate(1e6, 1.0, 1e-13, [1e-11, 1e-11], [0.3, 0.3], 5e6, 5.0, N0)
    one = df_rate(1e6, 1.0, 1e-13, [1e-11], [0.3], 5e6, 5.0, N0)
    assert two.relay_parts.sum() == pytest.approx(2 * one.relay_parts.sum(), rel=1e-15)


def test_backhaul_examples():
    assert backhaul_ok(1e8, 1e6, 1.0, [1e-20], [0.0], N0)
    assert backhaul_ok(1e7, 1e6, 1.0, [1.0], [0.5], N0)
    # backhaul gain equal to the direct gain: the DF rate exceeds it
    rep = df_rate(1e6, 1.0, 1e-13, [1e-11], [0.5], 5e6, 5.0, N0, h2=[1e-13])
    assert not backhaul_ok(rep.total, 1e6, 1.0, [1e-13], [0.5], N0)


budgets = st.tuples(st.floats(1e3, 2e7), st.floats(1e-3, 20.0), st.floats(1e-16, 1e-8))


@given(budgets, st.lists(st.floats(1e-16, 1e-8), min_size=0, max_size=4))
def test_df_reduces_to_direct(budget, g2):
    b, p, a2 = budget
    r = df_rate(b, p, a2, g2, np.zeros(len(g2)), 5e6, 5.0, N0)
    assert r.total == direct_rate(LinkBudget(b, p, a2, N0))


@given(budgets, st.floats(1e-16, 1e-8), st.floats(0, 1), st.floats(1.0, 2.0), st.sampled_from(range(4)))
def test_df_monotone(budget, g2, tau, factor, which):
    b, p, a2 = budget
    args = [b, p, a2, g2, tau]
    base = df_rate(b, p, a2, [g2], [tau], 5e6, 5.0, N0).total
    which = [1, 2, 3, 4][which]
    args[which] = args[which] * factor if which != 4 else min(1.0, tau * factor)
    b2, p2, a22, g22, tau2 = args
    assert df_rate(b2, p2, a22, [g22], [tau2], 5e6, 5.0, N0).total >= base * (1 - 1e-12)


@given(budgets, st.floats(1e-3, 1e3))
def test_snr_invariance(budget, s):
    b, p, a2 = budget
    assert band_rate(b, p * s, a2, N0 * s) == pytest.approx(band_rate(b, p, a2, N0), rel=1e-12)
