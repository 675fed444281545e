"""Resource allocation for fixed DBS positions.

minimize   sum_k (r_T - r_k)
subject to sum_k b_k0 <= B0, sum_k p_k0 <= P0, sum_k tau_kj <= S_D^(j),
           r_k <= r_T, and tau_kj > 0  =>  r_k <= b_k0 C(|h_j|^2 p_k0 / (b_k0 N0))

where r_k is the cooperative DF rate. The optimum value is the PSO cost of a
placement.

:func:`solve_rap` follows the central path of a log-barrier formulation with
Newton steps on the perturbed KKT conditions and reads the Lagrange
multipliers (lambda, mu, nu, rho, theta) off the barrier slacks.
:func:`brute_force_rap` is an exhaustive grid search used as an independent
check on small instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from dbscoop import _barrier
from dbscoop.channel import ChannelGains, gains as channel_gains
from dbscoop.rates import band_rate
from dbscoop.scenario import Scenario

LN2 = np.log(2.0)
EXACT_PATTERN_LIMIT = 64  # association patterns enumerated exhaustively up to this count
SINGLE_DROP_TRIALS = 2    # one-terminal moves tried per local-search round
MIN_AIRTIME = 1e-9        # airtime shares at or below this cannot carry relay traffic


class InfeasibleInputs(ValueError):
    pass


class InstanceTooLarge(ValueError):
    pass


@dataclass
class ResourceAllocation:
    b: np.ndarray      # Hz, per terminal
    p: np.ndarray      # W, per terminal
    tau: np.ndarray    # K x N airtime fractions
    rates: np.ndarray  # bit/s

    def objective(self, r_t: float) -> float:
        return float(np.sum(r_t - self.rates))

    def associations(self, tol: float = 1e-6) -> list[tuple[int, ...]]:
        return [tuple(int(j) for j in np.flatnonzero(row > tol)) for row in self.tau]


@dataclass
class DualState:
    lam: float
    mu: float
    nu: np.ndarray     # K x N
    rho: np.ndarray    # K
    theta: np.ndarray  # N


@dataclass
class SolverReport:
    objective: float
    iterations: int
    max_kkt_residual: float
    duality_gap_estimate: float
    converged: bool
    duals: DualState | None = None


@dataclass
class KKTResiduals:
    """Raw residuals of the KKT system (original units).

    ``stationarity_b/p`` are dL/db, dL/dp for terminals with positive
    bandwidth and power, ``stationarity_tau`` is dL/dtau for positive tau
    (NaN elsewhere). ``slackness`` maps each multiplier family to
    multiplier * constraint value. ``normalized`` rescales everything to
    r_T units: dL/db * B0, dL/dp * P0, dL/dtau and slackness as is, all
    divided by r_T.
    """

    stationarity_b: np.ndarray
    stationarity_p: np.ndarray
    stationarity_tau: np.ndarray
    slackness: dict
    normalized: float


# ------------------------------------------------------------- feasibility

def effective_rate(direct, relay, backhaul, tau):
    """Best DF rate reachable by lowering some tau_kj, for one terminal.

    ``relay``, ``backhaul``, ``tau`` are length-N vectors (relay is the
    per-unit-airtime DBS rate). Returns (rate, tau') with tau' <= tau and
    r_k = direct + tau'.relay satisfying every active backhaul cap.
    """
    n = len(tau)
    best, best_tau = direct, np.zeros(n)
    active = [j for j in range(n) if tau[j] > 0]
    for r in range(1, len(active) + 1):
        for subset in itertools.combinations(active, r):
            idx = list(subset)
            bh = float(np.min(backhaul[idx]))
            if direct > bh:
                continue
            full = direct + float(np.dot(tau[idx], relay[idx]))
            rate = min(full, bh)
            if rate > best:
                t = np.zeros(n)
                scale = 1.0 if full <= bh else (bh - direct) / (full - direct)
                t[idx] = tau[idx] * scale
                best, best_tau = rate, t
    return best, best_tau


def project(alloc_b, alloc_p, alloc_tau, sc: Scenario, g: ChannelGains, airtime) -> ResourceAllocation:
    """Make an allocation feasible: budgets, airtime, backhaul, then r_T cap.

    A terminal over r_T first gives up relay airtime, then transmit power.
    """
    r = sc.radio
    n0, r_t = r.noise_psd, r.target_rate
    b = np.maximum(np.asarray(alloc_b, dtype=float), 0.0)
    p = np.maximum(np.asarray(alloc_p, dtype=float), 0.0)
    tau = np.maximum(np.asarray(alloc_tau, dtype=float).reshape(len(b), -1), 0.0)
    if b.sum() > r.total_bandwidth:
        b *= r.total_bandwidth / b.sum()
    if p.sum() > r.total_power:
        p *= r.total_power / p.sum()
    airtime = np.asarray(airtime, dtype=float)
    col = tau.sum(axis=0)
    over = col > airtime
    tau[:, over] *= airtime[over] / col[over]

    relay = band_rate(r.dbs_bandwidth, r.dbs_power, g.g2, n0)
    direct = band_rate(b, p, g.a2, n0)
    if tau.shape[1]:
        bh = band_rate(b[:, None], p[:, None], g.h2[None, :], n0)
        full = direct + (tau * relay).sum(axis=1)
        cap_min = np.where(tau > 0, bh, np.inf).min(axis=1)
        for k in np.flatnonzero(full > cap_min):
            _, tau[k] = effective_rate(direct[k], relay[k], bh[k], tau[k])
    extra = (tau * relay).sum(axis=1)

    hi = direct >= r_t
    if hi.any():
        tau[hi] = 0.0
        extra[hi] = 0.0
        # invert b log2(1 + a p / (b N0)) = r_T for p
        need = np.expm1(r_t * LN2 / b[hi]) * b[hi] * n0 / g.a2[hi]
        p[hi] = np.minimum(p[hi], need)
        direct[hi] = band_rate(b[hi], p[hi], g.a2[hi], n0)
    mid = ~hi & (direct + extra > r_t)
    if mid.any():
        tau[mid] *= ((r_t - direct[mid]) / extra[mid])[:, None]
        extra[mid] = (tau[mid] * relay[mid]).sum(axis=1)
    return ResourceAllocation(b, p, tau, np.minimum(direct + extra, r_t))


def check_feasible(alloc: ResourceAllocation, sc: Scenario, g: ChannelGains, airtime,
                   eps: float = 1e-6) -> list[str]:
    """Invariant violations of an allocation (empty when feasible)."""
    r = sc.radio
    out = []
    if alloc.b.sum() > r.total_bandwidth * (1 + eps):
        out.append("bandwidth budget exceeded")
    if alloc.p.sum() > r.total_power * (1 + eps):
        out.append("power budget exceeded")
    if np.any(alloc.b < 0) or np.any(alloc.p < 0) or np.any(alloc.tau < 0):
        out.append("negative resource")
    for j in range(alloc.tau.shape[1]):
        if alloc.tau[:, j].sum() > airtime[j] * (1 + eps) + eps:
            out.append(f"airtime of DBS {j} exceeded")
    if np.any(alloc.rates > r.target_rate * (1 + eps)) or np.any(alloc.rates < 0):
        out.append("rate outside [0, r_T]")
    relay = band_rate(r.dbs_bandwidth, r.dbs_power, g.g2, r.noise_psd)
    direct = band_rate(alloc.b, alloc.p, g.a2, r.noise_psd)
    formula = direct + (alloc.tau * relay).sum(axis=1) if alloc.tau.size else direct
    if not np.allclose(formula, alloc.rates, rtol=1e-9, atol=eps * r.target_rate):
        out.append("rates inconsistent with DF formula")
    for k in range(len(alloc.b)):
        for j in np.flatnonzero(alloc.tau[k] > eps):
            bh = band_rate(alloc.b[k], alloc.p[k], g.h2[j], r.noise_psd)
            if alloc.rates[k] > bh + eps * r.target_rate:
                out.append(f"backhaul of terminal {k} via DBS {j} violated")
    return out


# ------------------------------------------------------------ barrier solve

@dataclass
class _Problem:
    K: int
    c0: float
    s: np.ndarray
    sig: np.ndarray
    rel: np.ndarray
    airtime: np.ndarray


def _normalize(sc: Scenario, g: ChannelGains, airtime) -> _Problem:
    r = sc.radio
    scale = r.total_power / (r.total_bandwidth * r.noise_psd)
    relay = band_rate(r.dbs_bandwidth, r.dbs_power, g.g2, r.noise_psd) / r.target_rate
    return _Problem(
        K=g.num_terminals,
        c0=r.total_bandwidth / (r.target_rate * LN2),
        s=g.a2 * scale,
        sig=g.h2 * scale,
        rel=np.asarray(relay, dtype=float).reshape(g.num_terminals, -1),
        airtime=np.asarray(airtime, dtype=float),
    )


def _barrier_solve(pr: _Problem, usable: np.ndarray, params, cutoff: float = np.inf):
    pk, pj = np.nonzero(usable)
    pk = pk.astype(np.int64)
    pj = pj.astype(np.int64)
    kstart = np.searchsorted(pk, np.arange(pr.K + 1)).astype(np.int64)
    rel = pr.rel[pk, pj] if len(pk) else np.zeros(0)
    # a DBS nobody may use has a vacuous airtime row; keep its slack positive
    airtime = np.where(np.bincount(pj, minlength=len(pr.airtime)) > 0, pr.airtime, 1.0)
    args = (pr.K, pr.c0, pr.s, pr.sig, pk, pj, rel, kstart, airtime)
    z0 = _barrier.start_point(*args)
    z, y, steps, ok = _barrier.solve(
        z0, *args, params.gap_tol * max(pr.K, 1), params.kkt_tol, params.max_iter,
        params.centering, cutoff)
    return z, y, steps, ok, _barrier.slacks(z, *args), (pk, pj)


def _usable_pairs(pr: _Problem) -> np.ndarray:
    """A DBS can only help terminal k if its backhaul beats the direct link
    and it has a non-negligible airtime share."""
    if pr.rel.size == 0:
        return np.zeros((pr.K, 0), dtype=bool)
    return ((pr.sig[None, :] > pr.s[:, None]) & (pr.airtime[None, :] > MIN_AIRTIME)
            & (pr.rel > 0))


def _duals(y, pr: _Problem, pairs, tau_full, sc: Scenario) -> DualState:
    K, N = pr.K, len(pr.airtime)
    pk, pj = pairs
    P = len(pk)
    r = sc.radio
    base = 2 * K + P
    lam = y[base] * r.target_rate / r.total_bandwidth
    mu = y[base + 1] * r.target_rate / r.total_power
    theta = y[base + 2: base + 2 + N] * r.target_rate
    rho = y[base + 2 + N: base + 2 + N + K].copy()
    nu_hat = y[base + 2 + N + K: base + 2 + N + K + P]
    nu = np.zeros((K, N))
    for p in range(P):
        t = tau_full[pk[p], pj[p]]
        if t > sc.solver.activity_tol:
            nu[pk[p], pj[p]] = nu_hat[p] / t
    return DualState(float(lam), float(mu), nu, rho, theta)


@dataclass
class _Pass:
    pr: _Problem
    z: np.ndarray
    y: np.ndarray
    slack: np.ndarray
    pairs: tuple
    steps: int
    converged: bool
    usable: np.ndarray
    tau: np.ndarray        # K x N, before projection
    bh_weight: np.ndarray  # K x N backhaul multipliers, normalized units

    @property
    def objective(self) -> float:
        """Normalized gap sum(1 - w)."""
        K = self.pr.K
        return float(K - self.z[2 * K + len(self.pairs[0]):].sum())

    def finish(self, sc: Scenario, g: ChannelGains, airtime):
        r = sc.radio
        K = self.pr.K
        alloc = project(self.z[:K] * r.total_bandwidth, self.z[K:2 * K] * r.total_power,
                        self.tau, sc, g, airtime)
        duals = _duals(self.y, self.pr, self.pairs, alloc.tau, sc)
        gap = float(np.dot(self.y, self.slack)) * r.target_rate
        return alloc, duals, gap


def _run(sc: Scenario, pr: _Problem, usable, cutoff: float = np.inf) -> _Pass:
    """One interior-point pass; with a finite ``cutoff`` (normalized objective)
    the pass may stop as soon as it provably cannot go below it."""
    z, y, steps, ok, sl, pairs = _barrier_solve(pr, usable, sc.solver, cutoff)
    K, N = pr.K, len(pr.airtime)
    P = len(pairs[0])
    tau = np.zeros((K, N))
    tau[pairs] = z[2 * K:2 * K + P]
    weight = np.zeros((K, N))
    bh = 2 * K + P + 2 + N + K
    weight[pairs] = y[bh:bh + P]
    return _Pass(pr, z, y, sl, pairs, steps, ok, usable, tau, weight)


def _tier_masks(usable: np.ndarray, h2) -> list[np.ndarray]:
    """Every distinct pattern where terminal k may use its strongest t_k DBSs."""
    order = np.argsort(-h2, kind="stable")
    per_terminal = []
    for k in range(usable.shape[0]):
        rows = {}
        for t in range(usable.shape[1] + 1):
            row = np.zeros(usable.shape[1], dtype=bool)
            row[order[:t]] = True
            row &= usable[k]
            rows[row.tobytes()] = row
        per_terminal.append(list(rows.values()))
    return [np.array(combo) for combo in itertools.product(*per_terminal)]


def _enumerate(sc: Scenario, pr: _Problem, h2, usable) -> tuple[_Pass, int]:
    best, total = None, 0
    for mask in _tier_masks(usable, h2):
        cand = _run(sc, pr, mask, np.inf if best is None else best.objective)
        total += cand.steps
        if best is None or cand.objective < best.objective - 1e-12:
            best = cand
    return best, total


def _refine(sc: Scenario, pr: _Problem, h2, usable, bind_tol: float = 1e-6) -> tuple[_Pass, int]:
    """Local search over association patterns, starting from every usable pair.

    The convex form imposes the backhaul cap of every allowed pair, while a
    DBS only constrains a terminal it actually relays for. Since caps are
    ordered by the MBS -> DBS gain for every terminal, a terminal's pattern
    is a tier: its allowed DBSs are the strongest few. Moves:
      - pairs carrying no airtime but a binding cap are removed (a
        relaxation that keeps the current point feasible, so never worse);
      - terminals whose weakest allowed DBS has a binding cap drop it: all
        of them at once, then the terminal with the largest cap multiplier
        alone, then the runner-up alone, keeping the first change that
        improves the objective.
    """
    tol = sc.solver.activity_tol
    cur = _run(sc, pr, usable)
    total = cur.steps
    for _ in range(usable.size + 1):
        idle = cur.usable & (cur.tau <= tol) & (cur.bh_weight > bind_tol)
        if idle.any():
            cur = _run(sc, pr, cur.usable & ~idle)
            total += cur.steps
            continue
        moves = []
        for k in range(usable.shape[0]):
            js = np.flatnonzero(cur.usable[k])
            if len(js) < 2:
                continue
            weakest = js[np.argmin(h2[js])]
            if cur.bh_weight[k, weakest] > bind_tol:
                moves.append((cur.bh_weight[k, weakest], k, weakest))
        if not moves:
            break
        moves.sort(key=lambda m: (-m[0], m[1]))
        singles = [[(k, j)] for _, k, j in moves[:SINGLE_DROP_TRIALS]]
        trials = [[(k, j) for _, k, j in moves]] if len(moves) > 1 else []
        trials += singles
        improved = False
        for drop in trials:
            mask = cur.usable.copy()
            for k, j in drop:
                mask[k, j] = False
            cand = _run(sc, pr, mask, cur.objective)
            total += cand.steps
            if cand.objective < cur.objective - 1e-9:
                cur, improved = cand, True
                break
        if not improved:
            break
    return cur, total


def solve_rap(sc: Scenario, g: ChannelGains, airtime, allow_relay: bool = True,
              diagnostics: bool = True):
    """Optimal (b, p, tau) for fixed DBS positions.

    Returns (ResourceAllocation, SolverReport); the allocation is always
    feasible, ``report.duals`` holds the recovered multipliers, and
    ``report.converged`` is False if the interior-point iteration did not
    reach its tolerances. With ``diagnostics=False`` the KKT residual is not
    evaluated (reported as NaN); the PSO cost uses this.
    """
    r = sc.radio
    airtime = np.asarray(airtime, dtype=float).reshape(-1)
    if len(airtime) != g.num_dbs:
        raise ValueError(f"need one airtime share per DBS ({g.num_dbs}), got {len(airtime)}")
    if r.total_bandwidth <= 0 or r.total_power <= 0:
        raise InfeasibleInputs("MBS bandwidth and power must be positive")
    if not (np.all(np.isfinite(g.a2)) and np.all(np.isfinite(g.h2)) and np.all(np.isfinite(g.g2))):
        raise InfeasibleInputs("channel gains must be finite")
    if np.all(g.a2 <= 0) and (g.h2.size == 0 or np.all(g.h2 <= 0) or np.all(g.g2 <= 0)):
        raise InfeasibleInputs("all channel gains are zero")
    if np.any(airtime < 0) or np.any(airtime > 1):
        raise ValueError("airtime shares must lie in [0, 1]")

    pr = _normalize(sc, g, airtime)
    usable = _usable_pairs(pr) if allow_relay else np.zeros((pr.K, g.num_dbs), dtype=bool)
    n_patterns = np.prod([1 + int(row.sum()) for row in usable], dtype=float)
    if n_patterns <= EXACT_PATTERN_LIMIT:
        best, steps = _enumerate(sc, pr, g.h2, usable)
    else:
        best, steps = _refine(sc, pr, g.h2, usable)
    alloc, duals, gap = best.finish(sc, g, airtime)
    kkt = kkt_residuals(alloc, duals, g, sc, airtime).normalized if diagnostics else float("nan")
    report = SolverReport(
        objective=alloc.objective(r.target_rate),
        iterations=steps,
        max_kkt_residual=kkt,
        duality_gap_estimate=gap,
        converged=best.converged,
        duals=duals,
    )
    return alloc, report


def kkt_residuals(alloc: ResourceAllocation, duals: DualState, g: ChannelGains,
                  sc: Scenario, airtime) -> KKTResiduals:
    r = sc.radio
    n0, r_t = r.noise_psd, r.target_rate
    b, p, tau = alloc.b, alloc.p, alloc.tau
    K, N = tau.shape
    tol = sc.solver.activity_tol
    airtime = np.asarray(airtime, dtype=float)

    interior = (b > tol * r.total_bandwidth) & (p > tol * r.total_power)
    bs = np.where(b > 0, b, 1.0)

    def partials(gain):
        x = gain * p / (bs * n0)
        db = (np.log1p(x) - x / (1 + x)) / LN2
        dp = gain * bs / ((bs * n0 + gain * p) * LN2)
        return db, dp

    da_b, da_p = partials(g.a2)
    nutau = (duals.nu * tau).sum(axis=1) if N else np.zeros(K)
    coef = -1.0 + nutau + duals.rho
    st_b = coef * da_b + duals.lam
    st_p = coef * da_p + duals.mu
    relay = band_rate(r.dbs_bandwidth, r.dbs_power, g.g2, n0) if N else np.zeros((K, 0))
    bh = np.zeros((K, N))
    for j in range(N):
        dh_b, dh_p = partials(g.h2[j])
        w = duals.nu[:, j] * tau[:, j]
        st_b = st_b - w * dh_b
        st_p = st_p - w * dh_p
        bh[:, j] = band_rate(b, p, g.h2[j], n0)
    st_b = np.where(interior, st_b, np.nan)
    st_p = np.where(interior, st_p, np.nan)

    st_tau = np.full((K, N), np.nan)
    for j in range(N):
        d = relay[:, j] * coef + duals.nu[:, j] * (alloc.rates - bh[:, j]) + duals.theta[j]
        st_tau[:, j] = np.where(tau[:, j] > tol, d, np.nan)

    slack = {
        "lambda": duals.lam * (b.sum() - r.total_bandwidth),
        "mu": duals.mu * (p.sum() - r.total_power),
        "nu": duals.nu * tau * (alloc.rates[:, None] - bh),
        "rho": duals.rho * (alloc.rates - r_t),
        "theta": duals.theta * (tau.sum(axis=0) - airtime) if N else np.zeros(0),
    }
    parts = [
        np.nan_to_num(np.abs(st_b) * r.total_bandwidth / r_t),
        np.nan_to_num(np.abs(st_p) * r.total_power / r_t),
        np.nan_to_num(np.abs(st_tau) / r_t),
    ] + [np.abs(np.atleast_1d(v)) / r_t for v in slack.values()]
    norm = max((float(np.max(a)) for a in parts if np.size(a)), default=0.0)
    return KKTResiduals(st_b, st_p, st_tau, slack, norm)


def cost(positions, sc: Scenario, airtime, gains_fn=channel_gains) -> float:
    """PSO cost of a placement: the optimal aggregate gap in bit/s."""
    g = gains_fn(sc, positions)
    return solve_rap(sc, g, airtime, diagnostics=False)[1].objective


# --------------------------------------------------------------- grid oracle

def _compositions(n: int, k: int) -> np.ndarray:
    """All k-tuples of nonnegative integers summing to n, as fractions of n."""
    out = []
    for cuts in itertools.combinations(range(n + k - 1), k - 1):
        prev, parts = -1, []
        for c in cuts:
            parts.append(c - prev - 1)
            prev = c
        parts.append(n + k - 1 - prev - 1)
        out.append(parts)
    return np.array(out, dtype=float) / n


def brute_force_rap(sc: Scenario, g: ChannelGains, airtime, grid_res: int,
                    allow_relay: bool = True) -> ResourceAllocation:
    """Best point of a simplex lattice over (b, p, tau).

    Budgets are split on the lattice {i / grid_res}; grid_res = 1 means the
    equal split. At each lattice point a terminal may use less airtime than
    offered, so its rate is the best backhaul-feasible DF rate with
    tau'_kj <= tau_kj. Lattices with grid_res dividing another are nested.
    """
    K, N = g.num_terminals, g.num_dbs
    if K > 3 or N > 2:
        raise InstanceTooLarge(f"brute force supports K <= 3, N <= 2 (got K={K}, N={N})")
    r = sc.radio
    airtime = np.asarray(airtime, dtype=float)
    fr = np.full((1, K), 1.0 / K) if grid_res == 1 else _compositions(grid_res, K)
    b_opts = fr * r.total_bandwidth
    p_opts = fr * r.total_power
    n_dbs = N if allow_relay else 0
    tau_cols = [fr * airtime[j] for j in range(n_dbs)]
    combos = list(itertools.product(range(len(fr)), repeat=n_dbs))
    # tau_all[c, k, j]
    tau_all = np.zeros((len(combos), K, N))
    for c, idx in enumerate(combos):
        for j, i in enumerate(idx):
            tau_all[c, :, j] = tau_cols[j][i]
    relay = band_rate(r.dbs_bandwidth, r.dbs_power, g.g2, r.noise_psd).reshape(K, N)
    subsets = [s for n in range(1, n_dbs + 1) for s in itertools.combinations(range(n_dbs), n)]

    best_val, best_idx = np.inf, None
    for ib in range(len(b_opts)):
        total = np.zeros((len(p_opts), len(combos)))
        for k in range(K):
            direct = band_rate(b_opts[ib, k], p_opts[:, k], g.a2[k], r.noise_psd)[:, None]
            eff = np.broadcast_to(direct, total.shape).copy()
            for sub in subsets:
                idx = list(sub)
                bh = np.min(np.stack([band_rate(b_opts[ib, k], p_opts[:, k], g.h2[j], r.noise_psd)
                                      for j in idx]), axis=0)[:, None]
                extra = (tau_all[:, k, idx] * relay[k, idx]).sum(axis=1)[None, :]
                cand = np.where(direct <= bh, np.minimum(direct + extra, bh), -np.inf)
                eff = np.maximum(eff, cand)
            total += np.maximum(r.target_rate - eff, 0.0)
        i = int(np.argmin(total))
        if total.flat[i] < best_val - 1e-12 * r.target_rate:
            best_val = float(total.flat[i])
            best_idx = (ib, *np.unravel_index(i, total.shape))
    ib, ip, ic = best_idx
    return project(b_opts[ib], p_opts[ip], tau_all[ic], sc, g, airtime)


def solve_for_positions(sc: Scenario, positions, airtime=None, allow_relay: bool = True):
    if airtime is None:
        airtime = sc.airtime_shares()
    g = channel_gains(sc, positions)
    return solve_rap(sc, g, airtime, allow_relay=allow_relay)
