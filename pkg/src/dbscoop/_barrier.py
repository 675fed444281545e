"""Compiled primal-dual interior-point kernel for the resource-allocation problem.

Works in normalized units: u = b/B0, v = p/P0, t = tau; rates are divided by
r_T. Decision vector z = [u (K), v (K), t (P), w (K)] where the P relay
variables are the usable (terminal, DBS) pairs, grouped by terminal, and
w_k is the rate delivered to terminal k. The problem maximizes sum(w).

Constraints, all kept strictly positive as slacks:
    u, v, t > 0
    1 - sum(u),  1 - sum(v),  S_j - sum_k t_kj
    1 - w_k                                 (rate cap r_k <= r_T)
    BH_kj - w_k for every usable pair       (backhaul decodability)
    rate_k - w_k
with rate_k = c0 * u log(1 + s_k v/u) + sum_j rel_kj t_kj and
BH_kj = c0 * u log(1 + sig_j v/u). Every row is a concave function of z
kept nonnegative, so the problem is convex. Lowering t until rate_k = w_k
keeps all rows feasible, and for a usable pair BH_kj >= direct rate, so a
solution maps back to an allocation delivering exactly w.
"""

import numpy as np
from numba import njit

# reassociation lets dot-product loops vectorize; NaN and inf semantics stay intact
_REASSOC = {"reassoc", "contract"}


@njit(cache=True)
def _phi(u, v, s):
    w = s * v / u
    d = 1.0 + w
    q = 1.0 / (u * d * d)
    return u * np.log1p(w), np.log1p(w) - w / d, s / d, -w * w * q, w * s * q, -s * s * q


@njit(cache=True)
def num_rows(K, P, N):
    return 2 * K + P + 2 + N + K + P + K


@njit(cache=True)
def slacks(z, K, c0, s, sig, pk, pj, rel, kstart, airtime):
    P = pk.shape[0]
    N = airtime.shape[0]
    out = np.empty(num_rows(K, P, N))
    u = z[:K]
    v = z[K:2 * K]
    t = z[2 * K:2 * K + P]
    w = z[2 * K + P:]
    for i in range(2 * K + P):
        out[i] = z[i]
    out[2 * K + P] = 1.0 - u.sum()
    out[2 * K + P + 1] = 1.0 - v.sum()
    base = 2 * K + P + 2
    for j in range(N):
        out[base + j] = airtime[j]
    for p in range(P):
        out[base + pj[p]] -= t[p]
    base += N
    for k in range(K):
        out[base + k] = 1.0 - w[k]
        if u[k] <= 0.0 or v[k] <= 0.0:
            for p in range(kstart[k], kstart[k + 1]):
                out[base + K + p] = -1.0
            out[base + K + P + k] = -1.0
            continue
        rate = c0 * u[k] * np.log1p(s[k] * v[k] / u[k])
        for p in range(kstart[k], kstart[k + 1]):
            rate += rel[p] * t[p]
            out[base + K + p] = c0 * u[k] * np.log1p(sig[pj[p]] * v[k] / u[k]) - w[k]
        out[base + K + P + k] = rate - w[k]
    return out


@njit(cache=True)
def start_point(K, c0, s, sig, pk, pj, rel, kstart, airtime):
    """Strictly feasible point: half the budgets split evenly, each relay
    share at most half its backhaul headroom, rates below r_T / 2 and the
    delivered rate below all of them."""
    P = pk.shape[0]
    N = airtime.shape[0]
    z = np.empty(3 * K + P)
    counts = np.zeros(N)
    for p in range(P):
        counts[pj[p]] += 1.0
    for k in range(K):
        z[k] = 0.5 / K
        z[K + k] = 0.5 / K
    rates = np.empty(K)
    for k in range(K):
        u = z[k]
        direct = c0 * u * np.log1p(s[k] * z[K + k] / u)
        rate = direct
        if kstart[k + 1] > kstart[k]:
            bh = np.inf
            tot = 0.0
            for p in range(kstart[k], kstart[k + 1]):
                bh = min(bh, c0 * u * np.log1p(sig[pj[p]] * z[K + k] / u))
                tot += rel[p]
            room = 0.5 * (bh - direct) / tot
            for p in range(kstart[k], kstart[k + 1]):
                z[2 * K + p] = min(airtime[pj[p]] / (2.0 * counts[pj[p]]), room)
                rate += rel[p] * z[2 * K + p]
        rates[k] = rate
    top = rates.max() if K > 0 else 0.0
    if top > 0.5:
        # rates and backhaul caps are 1-homogeneous in (u, v, t)
        z[:2 * K + P] *= 0.5 / top
        rates *= 0.5 / top
    for k in range(K):
        z[2 * K + P + k] = 0.5 * rates[k] - 0.01
    return z


@njit(cache=True)
def _gradient(z, tb, v, K, c0, s, sig, pk, pj, rel, kstart, airtime):
    """Gradient of tb*(-sum w) - sum_i v_i c_i(z)."""
    P = pk.shape[0]
    N = airtime.shape[0]
    nb = 2 * K + P
    g = np.zeros(3 * K + P)
    for i in range(nb):
        g[i] = -v[i]
    for k in range(K):
        g[k] += v[nb]
        g[K + k] += v[nb + 1]
    for p in range(P):
        g[2 * K + p] += v[nb + 2 + pj[p]]
    base = nb + 2 + N
    for k in range(K):
        iw = nb + k
        vr = v[base + K + P + k]
        g[iw] += -tb + v[base + k] + vr
        f, fu, fv, fuu, fuv, fvv = _phi(z[k], z[K + k], s[k])
        g[k] -= vr * c0 * fu
        g[K + k] -= vr * c0 * fv
        for p in range(kstart[k], kstart[k + 1]):
            g[2 * K + p] -= vr * rel[p]
            vb = v[base + K + p]
            f2, gu, gv, guu, guv, gvv = _phi(z[k], z[K + k], sig[pj[p]])
            g[k] -= vb * c0 * gu
            g[K + k] -= vb * c0 * gv
            g[iw] += vb
    return g


@njit(cache=True)
def _newton_step(z, sl, tb, v, w, K, c0, s, sig, pk, pj, rel, kstart, airtime):
    """Solve M dz = -g, where g is the gradient of tb*(-sum w) - sum_i v_i c_i(z)
    and M = sum_i w_i (grad c_i grad c_i^T / c_i - hess c_i); ``sl`` is c(z).

    With v = w = 1/c this is the log-barrier Newton step; with w = tb*y it
    is the primal-dual one. Every c_i is concave, so M is positive
    semidefinite. The delivered rates w_k only meet their own terminal's
    rows, so their block of M is diagonal and they are eliminated first.
    The reduced matrix for terminal k's rows i (weights a_i = w_i / c_i,
    x-gradients q_i, coefficient -1 on w_k) and cap weight a_0 is
        (a_0 sum_i a_i q_i q_i^T + sum_{i<j} a_i a_j (q_i - q_j)(q_i - q_j)^T) / A
    with A = a_0 + sum_i a_i, free of cancellation.
    """
    P = pk.shape[0]
    N = airtime.shape[0]
    nb = 2 * K + P
    g = _gradient(z, tb, v, K, c0, s, sig, pk, pj, rel, kstart, airtime)
    H = np.zeros((nb, nb))

    for i in range(nb):
        H[i, i] += w[i] / z[i]

    # bandwidth and power budgets
    for which in range(2):
        off = which * K
        i = nb + which
        c = w[i] / sl[i]
        for a in range(K):
            for b in range(K):
                H[off + a, off + b] += c

    # airtime per DBS
    base = nb + 2
    for p in range(P):
        i = base + pj[p]
        for q in range(P):
            if pj[q] == pj[p]:
                H[2 * K + p, 2 * K + q] += w[i] / sl[i]

    # per-terminal rows: cap, backhaul, rate
    base += N
    gx = g[:nb].copy()
    coup = np.zeros(nb)       # sum_i a_i q_i, scattered into x positions
    diag = np.empty(K)        # A per terminal
    idx = np.empty(2 + N, dtype=np.int64)
    Q = np.zeros((1 + N, 2 + N))
    a = np.empty(1 + N)
    for k in range(K):
        nt = kstart[k + 1] - kstart[k]
        m = 2 + nt
        R = 1 + nt
        idx[0] = k
        idx[1] = K + k
        for p in range(kstart[k], kstart[k + 1]):
            idx[2 + p - kstart[k]] = 2 * K + p
        Q[:R, :m] = 0.0

        # row 0: rate_k - w_k
        i = base + K + P + k
        f, fu, fv, fuu, fuv, fvv = _phi(z[k], z[K + k], s[k])
        a[0] = w[i] / sl[i]
        Q[0, 0] = c0 * fu
        Q[0, 1] = c0 * fv
        for p in range(kstart[k], kstart[k + 1]):
            Q[0, 2 + p - kstart[k]] = rel[p]
        H[k, k] -= w[i] * c0 * fuu
        H[k, K + k] -= w[i] * c0 * fuv
        H[K + k, k] -= w[i] * c0 * fuv
        H[K + k, K + k] -= w[i] * c0 * fvv

        # rows 1..nt: BH_kj - w_k
        for p in range(kstart[k], kstart[k + 1]):
            r = 1 + p - kstart[k]
            i = base + K + p
            f2, gu, gv, guu, guv, gvv = _phi(z[k], z[K + k], sig[pj[p]])
            a[r] = w[i] / sl[i]
            Q[r, 0] = c0 * gu
            Q[r, 1] = c0 * gv
            H[k, k] -= w[i] * c0 * guu
            H[k, K + k] -= w[i] * c0 * guv
            H[K + k, k] -= w[i] * c0 * guv
            H[K + k, K + k] -= w[i] * c0 * gvv

        a_cap = w[base + k] / sl[base + k]
        A = a_cap
        for r in range(R):
            A += a[r]
        # backhaul rows are zero beyond (u, v), so outside that 2x2 block
        # the pair sum collapses to a_0 e_x Q_0y with
        # e_x = a_0' Q_0x + sum_{r>0} a_r (Q_0x - Q_rx), a_0' the cap weight
        e = np.empty(m)
        for x in range(m):
            ex = a_cap * Q[0, x]
            for r in range(1, R):
                ex += a[r] * (Q[0, x] - Q[r, x])
            e[x] = ex
        for x in range(2):
            for y in range(x + 1):
                acc = 0.0
                for r in range(R):
                    acc += a_cap * a[r] * Q[r, x] * Q[r, y]
                    for q in range(r):
                        acc += a[r] * a[q] * (Q[r, x] - Q[q, x]) * (Q[r, y] - Q[q, y])
                acc /= A
                H[idx[x], idx[y]] += acc
                if x != y:
                    H[idx[y], idx[x]] += acc
        for y in range(2, m):
            for x in range(y + 1):
                acc = a[0] * e[x] * Q[0, y] / A
                H[idx[x], idx[y]] += acc
                if x != y:
                    H[idx[y], idx[x]] += acc
        gw = g[nb + k]
        for x in range(m):
            cx = 0.0
            for r in range(R):
                cx += a[r] * Q[r, x]
            coup[idx[x]] = cx
            gx[idx[x]] += cx * gw / A
        diag[k] = A

    dx = _newton_dir(H, gx)
    dz = np.empty(3 * K + P)
    dz[:nb] = dx
    for k in range(K):
        acc = -g[nb + k] + coup[k] * dx[k] + coup[K + k] * dx[K + k]
        for p in range(kstart[k], kstart[k + 1]):
            acc += coup[2 * K + p] * dx[2 * K + p]
        dz[nb + k] = acc / diag[k]
    return dz


@njit(cache=True)
def _jdot(z, d, K, c0, s, sig, pk, pj, rel, kstart, airtime):
    """Directional derivative of every constraint along ``d``."""
    P = pk.shape[0]
    N = airtime.shape[0]
    nb = 2 * K + P
    out = np.zeros(num_rows(K, P, N))
    for i in range(nb):
        out[i] = d[i]
    for k in range(K):
        out[nb] -= d[k]
        out[nb + 1] -= d[K + k]
    for p in range(P):
        out[nb + 2 + pj[p]] -= d[2 * K + p]
    base = nb + 2 + N
    for k in range(K):
        dw = d[nb + k]
        out[base + k] = -dw
        f, fu, fv, fuu, fuv, fvv = _phi(z[k], z[K + k], s[k])
        drate = c0 * (fu * d[k] + fv * d[K + k])
        for p in range(kstart[k], kstart[k + 1]):
            drate += rel[p] * d[2 * K + p]
            f2, gu, gv, guu, guv, gvv = _phi(z[k], z[K + k], sig[pj[p]])
            out[base + K + p] = c0 * (gu * d[k] + gv * d[K + k]) - dw
        out[base + K + P + k] = drate - dw
    return out


@njit(cache=True, fastmath=_REASSOC)
def _cholesky_factor(A):
    """Lower Cholesky factor of symmetric A, in place; False on a nonpositive pivot."""
    n = A.shape[0]
    for j in range(n):
        d = A[j, j]
        for k in range(j):
            d -= A[j, k] * A[j, k]
        if not d > 0.0:
            return False
        d = np.sqrt(d)
        A[j, j] = d
        for i in range(j + 1, n):
            t = A[i, j]
            for k in range(j):
                t -= A[i, k] * A[j, k]
            A[i, j] = t / d
    return True


@njit(cache=True, fastmath=_REASSOC)
def _chol_resolve(L, rhs):
    n = rhs.shape[0]
    x = rhs.copy()
    for i in range(n):
        t = x[i]
        for k in range(i):
            t -= L[i, k] * x[k]
        x[i] = t / L[i, i]
    for i in range(n - 1, -1, -1):
        t = x[i]
        for k in range(i + 1, n):
            t -= L[k, i] * x[k]
        x[i] = t / L[i, i]
    return x


@njit(cache=True)
def _cholesky_solve(A, rhs):
    """Solve A x = rhs for symmetric positive definite A, factoring A in place.

    Returns (x, ok); ok is False when a pivot is not positive.
    """
    if not _cholesky_factor(A):
        return rhs, False
    return _chol_resolve(A, rhs), True


@njit(cache=True)
def _newton_dir(H, g):
    """Solve H d = -g after symmetric diagonal scaling, shifting the
    diagonal if the scaled matrix is numerically singular."""
    n = g.shape[0]
    sc = np.empty(n)
    for i in range(n):
        sc[i] = 1.0 / np.sqrt(max(H[i, i], 1e-300))
    rhs = -g * sc
    shift = 0.0
    for _ in range(30):
        A = np.empty((n, n))
        for i in range(n):
            for j in range(i + 1):
                A[i, j] = H[i, j] * sc[i] * sc[j]
            A[i, i] += shift
        x, ok = _cholesky_solve(A, rhs)
        if ok:
            return x * sc
        shift = 1e-14 if shift == 0.0 else shift * 100.0
    return rhs * sc


@njit(cache=True)
def _residual_norm(z, y, mu, K, c0, s, sig, pk, pj, rel, kstart, airtime):
    c = slacks(z, K, c0, s, sig, pk, pj, rel, kstart, airtime)
    if c.min() <= 0.0:
        return np.inf
    gl = _gradient(z, 1.0, y, K, c0, s, sig, pk, pj, rel, kstart, airtime)
    rc = y * c - mu
    return np.sqrt((gl * gl).sum() + (rc * rc).sum())


@njit(cache=True)
def solve(z0, K, c0, s, sig, pk, pj, rel, kstart, airtime,
          gap_tol, kkt_tol, max_iter, sigma, cutoff=np.inf):
    """Primal-dual interior-point iteration from a strictly feasible ``z0``.

    Each step targets mu = sigma * gap / m, or sigma^2 * gap / m after a
    nearly full step. Primal and dual variables move
    together; the step is cut back to keep the multipliers positive and
    the constraints strictly satisfied, then until the norm of the
    perturbed KKT residual decreases.

    Iteration stops early once the objective minus the duality gap, a
    lower bound on the optimum near the central path, exceeds ``cutoff``.

    Returns (z, y, iterations, converged) with y the multipliers of the
    constraints in ``slacks`` order.
    """
    z = z0.copy()
    c = slacks(z, K, c0, s, sig, pk, pj, rel, kstart, airtime)
    m = c.shape[0]
    nbnd = 2 * K + pk.shape[0]
    y = 10.0 / c
    hist = np.zeros(5)
    converged = False
    it = 0
    last = 0.0
    for it in range(1, max_iter + 1):
        gap = (y * c).sum()
        gl = _gradient(z, 1.0, y, K, c0, s, sig, pk, pj, rel, kstart, airtime)
        # a stationarity defect on a variable can be absorbed by its own
        # bound multiplier when that keeps the multiplier nonnegative
        stat = 0.0
        for i in range(nbnd):
            if y[i] + gl[i] >= 0.0:
                gap += abs(gl[i]) * z[i]
            else:
                stat = max(stat, abs(gl[i]))
        for i in range(nbnd, z.shape[0]):
            stat = max(stat, abs(gl[i]))
        if gap <= gap_tol and stat <= kkt_tol:
            converged = True
            break
        # the objective sum(1 - w) is bounded below by 0
        obj = c[2 * K + pk.shape[0] + 2 + airtime.shape[0]:][:K].sum()
        if obj <= gap_tol:
            converged = True
            break
        if stat <= 1e-3 and obj - gap > cutoff:
            break
        # after a nearly full step the iterate tracks the central path well
        # enough to aim further along it
        mu = (sigma * sigma if last > 0.9 else sigma) * gap / m
        tb = 1.0 / mu
        inv = 1.0 / c
        dz = _newton_step(z, c, tb, inv, tb * y, K, c0, s, sig, pk, pj, rel, kstart, airtime)
        jd = _jdot(z, dz, K, c0, s, sig, pk, pj, rel, kstart, airtime)
        dy = mu * inv - y - y * inv * jd

        a = 1.0
        for i in range(m):
            if dy[i] < 0.0:
                a = min(a, -y[i] / dy[i])
        a *= 0.99
        # nonmonotone test against the worst of the last few residuals;
        # an infeasible trial point has an infinite residual
        rc = y * c - mu
        hist[(it - 1) % hist.shape[0]] = np.sqrt((gl * gl).sum() + (rc * rc).sum())
        r0 = hist.max()
        while a > 1e-16:
            r1 = _residual_norm(z + a * dz, y + a * dy, mu, K, c0, s, sig, pk, pj, rel,
                                kstart, airtime)
            if r1 <= (1.0 - 0.01 * a) * r0:
                break
            a *= 0.5
        if a <= 1e-16:
            break
        z = z + a * dz
        y = y + a * dy
        last = a
        c = slacks(z, K, c0, s, sig, pk, pj, rel, kstart, airtime)
    return z, y, it, converged
