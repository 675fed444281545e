"""Independent oracles and instance builders shared by the test modules."""

import numpy as np

from dbscoop.channel import gains
from dbscoop.rates import band_rate
from dbscoop.scenario import default_scenario, derive_rng, sample_uniform

N0 = 4e-21


def small_instance(seed: int, r_t: float = 250e6, k: int = 2, n: int = 1):
    """K terminals, N DBSs at seeded positions, default radio parameters."""
    sc = default_scenario(seed, num_terminals=k, num_dbs=n).with_target_rate(r_t)
    w = sample_uniform(derive_rng(seed, "pos"), n, sc.dbs_region)
    return sc, gains(sc, w)


def coexistence_oracle(omega, m, aps, gamma):
    """Reduce the coexistence system to delta_W alone and bisect, with plain-loop sums."""
    def dw_of(c):
        if abs(1 - 2 * c) < 1e-12:
            c += 1e-12
        return 2 * (1 - 2 * c) / ((1 - 2 * c) * (omega + 1) + c * omega * (1 - (2 * c) ** m))

    def dd_of(c):
        if c == 0:
            return 2 / (gamma + 1)
        q = 1 - c
        return (1 - q ** gamma) / sum(1 - q ** i for i in range(1, gamma + 1))

    def rest(dw):
        cd = 1 - (1 - dw) ** aps
        dd = dd_of(cd)
        return dd, 1 - (1 - dw) ** (aps - 1) * (1 - dd), cd

    lo, hi = 1e-15, 1 - 1e-15
    f_lo = dw_of(rest(lo)[1]) - lo
    for _ in range(200):
        mid = (lo + hi) / 2
        f = dw_of(rest(mid)[1]) - mid
        if (f > 0) == (f_lo > 0):
            lo, f_lo = mid, f
        else:
            hi = mid
    dw = (lo + hi) / 2
    return (dw, *rest(dw))


_STENCIL = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
_OFFSETS = np.array([-2.0, -1.0, 1.0, 2.0])


def rate_hessian_minors(b, p, tau=0.5, h=1e-2):
    """Leading principal minors of the Hessian of b log2(1 + p/b) + tau * c.

    Vectorized over samples ``b``, ``p``. Coordinates are relative
    (b(1+s), p(1+t), tau + u) and the function is divided by its value, so
    the minors are scale free. The constant c is the rate at (b, p), so
    neither term swamps the other. Fourth-order central differences.
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))[:, None]
    p = np.atleast_1d(np.asarray(p, dtype=float))[:, None]
    relay = band_rate(b, p, N0, N0)
    f0 = relay * (1 + tau)

    def f(x):
        return (band_rate(b * (1 + x[0]), p * (1 + x[1]), N0, N0) + (tau + x[2]) * relay) / f0

    H = np.zeros((b.shape[0], 3, 3))
    for i in range(3):
        for j in range(i, 3):
            x = np.zeros((3, 1, 16))
            x[i] += np.repeat(_OFFSETS, 4) * h
            x[j] += np.tile(_OFFSETS, 4) * h
            w = np.outer(_STENCIL, _STENCIL).ravel()
            H[:, i, j] = H[:, j, i] = (f(x) * w).sum(axis=1) / h**2
    return H[:, 0, 0], np.linalg.det(H[:, :2, :2]), np.linalg.det(H)
