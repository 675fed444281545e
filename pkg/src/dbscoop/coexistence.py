"""Wi-Fi / DBS coexistence on one unlicensed band.

Wi-Fi APs run binary-exponential-backoff CSMA/CA (saturated DCF model);
the DBS runs listen-before-talk with a fixed contention window Gamma.
The four unknowns (access probabilities delta_W, delta_D and collision
probabilities c_W, c_D) are coupled through

    delta_W = 2 / ((Omega + 1) + c_W * Omega * sum_{i<m} (2 c_W)^i)
    delta_D = (1 - (1 - c_D)^Gamma) / sum_{i=1..Gamma} (1 - (1 - c_D)^i)
    c_W     = 1 - (1 - delta_W)^(M - 1) * (1 - delta_D)
    c_D     = 1 - (1 - delta_W)^M

The delta_W line is the usual saturated-DCF expression
2(1-2c) / ((1-2c)(Omega+1) + c Omega (1-(2c)^m)) with the (1-2c) factor
cancelled, which removes the removable singularity at c = 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


class CoexistenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class WifiParams:
    omega: int = 16
    m: int = 3
    aps: int = 10
    gamma: int | None = None
    c_cap: float = 0.5

    def errors(self) -> list[str]:
        out = []
        if self.omega < 2:
            out.append("min_cw_slots: must be >= 2")
        if self.m < 0:
            out.append("max_backoff_stage: must be >= 0")
        if self.aps < 1:
            out.append("num_aps: must be >= 1")
        if self.gamma is not None and self.gamma < 1:
            out.append("dbs_cw_slots: must be >= 1")
        if not 0.0 < self.c_cap <= 1.0:
            out.append("collision_cap: must be in (0, 1]")
        return out


@dataclass(frozen=True)
class CoexistenceSolution:
    delta_w: float
    delta_d: float
    c_w: float
    c_d: float
    airtime: float
    residual: float
    iterations: int


def wifi_access(c_w, omega: int, m: int):
    """Per-slot transmit probability of a saturated Wi-Fi AP."""
    c_w = np.asarray(c_w, dtype=float)
    stages = np.zeros_like(c_w)
    for i in range(m):
        stages = stages + (2.0 * c_w) ** i
    return 2.0 / ((omega + 1) + c_w * omega * stages)


def dbs_access(c_d: float, gamma: int) -> float:
    """Per-slot transmit probability of a DBS with fixed window ``gamma``.

    Both geometric sums are evaluated term by term through ``expm1`` so the
    c_D -> 0 limit 2/(Gamma+1) is reached without cancellation.
    """
    if c_d <= 0.0:
        return 2.0 / (gamma + 1)
    if c_d >= 1.0:
        return 1.0 / gamma
    log_q = np.log1p(-c_d)
    i = np.arange(1, gamma + 1)
    miss = -np.expm1(i * log_q)  # 1 - (1 - c)^i
    return float(miss[-1] / miss.sum())


def _collisions(delta_w: float, delta_d: float, aps: int) -> tuple[float, float]:
    c_w = 1.0 - (1.0 - delta_w) ** (aps - 1) * (1.0 - delta_d)
    c_d = 1.0 - (1.0 - delta_w) ** aps
    return c_w, c_d


def residuals(params: WifiParams, delta_w, delta_d, c_w, c_d) -> np.ndarray:
    """Left minus right side of each of the four coupled equations."""
    return np.array([
        delta_w - float(wifi_access(c_w, params.omega, params.m)),
        delta_d - dbs_access(c_d, params.gamma),
        c_w - _collisions(delta_w, delta_d, params.aps)[0],
        c_d - _collisions(delta_w, delta_d, params.aps)[1],
    ])


def _reduced(params: WifiParams, delta_w: float):
    c_d = 1.0 - (1.0 - delta_w) ** params.aps
    delta_d = dbs_access(c_d, params.gamma)
    c_w = 1.0 - (1.0 - delta_w) ** (params.aps - 1) * (1.0 - delta_d)
    return delta_d, c_w, c_d


def _solve_bracketed(params: WifiParams) -> tuple[float, float, float, float]:
    def h(dw):
        return float(wifi_access(_reduced(params, dw)[1], params.omega, params.m)) - dw

    dw = brentq(h, 0.0, 1.0, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    return (dw, *_reduced(params, dw))


def solve_fixed_point(params: WifiParams, tol: float = 1e-12, max_iter: int = 10_000,
                      damping: float = 0.5) -> CoexistenceSolution:
    """Solve the four coupled coexistence equations.

    Damped fixed-point iteration from the collision-free access
    probabilities; falls back to a bracketed root search on delta_W alone
    (the other three unknowns follow by substitution) if the iteration
    stalls.
    """
    errs = params.errors()
    if params.gamma is None:
        errs.append("dbs_cw_slots: required")
    if errs:
        raise ValueError("; ".join(errs))
    dw = 2.0 / (params.omega + 1)
    dd = 2.0 / (params.gamma + 1)
    it = 0
    for it in range(1, max_iter + 1):
        cw, cd = _collisions(dw, dd, params.aps)
        dw_new = float(wifi_access(cw, params.omega, params.m))
        dd_new = dbs_access(cd, params.gamma)
        step = max(abs(dw_new - dw), abs(dd_new - dd))
        dw += damping * (dw_new - dw)
        dd += damping * (dd_new - dd)
        if step < tol:
            break
    cw, cd = _collisions(dw, dd, params.aps)
    res = float(np.max(np.abs(residuals(params, dw, dd, cw, cd))))
    if not res < 1e-10:
        dw, dd, cw, cd = _solve_bracketed(params)
        res = float(np.max(np.abs(residuals(params, dw, dd, cw, cd))))
        if not res < 1e-10:
            raise CoexistenceError(f"no convergence for {params}; best residual {res:.3e}")
    return CoexistenceSolution(dw, dd, cw, cd, airtime(dd, dw, params.aps), res, it)


def airtime(delta_d: float, delta_w: float, aps: int) -> float:
    """Fraction of slots the DBS wins, delta_D (1 - delta_W)^M."""
    return float(delta_d * (1.0 - delta_w) ** aps)


def wifi_collision(omega: int, m: int, aps: int, gamma: int) -> float:
    return solve_fixed_point(WifiParams(omega, m, aps, gamma)).c_w


def optimize_cw(omega: int, m: int, aps: int, c_cap: float, gamma_max: int = 1024) -> int:
    """Smallest DBS window Gamma whose Wi-Fi collision probability is <= ``c_cap``.

    Binary search; c_W is nonincreasing in Gamma.
    """
    if c_cap >= 1.0:
        return 1
    if wifi_collision(omega, m, aps, gamma_max) > c_cap:
        raise CoexistenceError(
            f"collision cap {c_cap} infeasible: c_W(Gamma={gamma_max}) exceeds it")
    lo, hi = 1, gamma_max  # c_W(hi) <= cap
    if wifi_collision(omega, m, aps, lo) <= c_cap:
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if wifi_collision(omega, m, aps, mid) <= c_cap:
            hi = mid
        else:
            lo = mid
    return hi


def sweep_gamma(omega: int, m: int, aps: int, gammas) -> list[CoexistenceSolution]:
    return [solve_fixed_point(WifiParams(omega, m, aps, int(g))) for g in gammas]
