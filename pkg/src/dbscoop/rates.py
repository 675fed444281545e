"""Achievable rates: direct MBS link and cooperative multi-DBS decode-forward.

Rates are in bit/s (base-2 capacity function).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LinkBudget:
    bandwidth: float
    power: float
    gain: float
    noise_psd: float


@dataclass(frozen=True)
class RateReport:
    direct_part: float
    relay_parts: np.ndarray
    total: float
    backhaul_caps: np.ndarray


def cap(x):
    """log2(1 + x)."""
    return np.log2(1.0 + np.asarray(x, dtype=float))


def band_rate(bandwidth, power, gain, noise_psd):
    """bandwidth * log2(1 + gain*power/(bandwidth*N0)), 0 at zero bandwidth."""
    b = np.asarray(bandwidth, dtype=float)
    safe = np.where(b > 0, b, 1.0)
    snr = np.asarray(gain, dtype=float) * np.asarray(power, dtype=float) / (safe * noise_psd)
    return np.where(b > 0, b * np.log1p(snr) / np.log(2.0), 0.0)


def direct_rate(budget: LinkBudget) -> float:
    return float(band_rate(budget.bandwidth, budget.power, budget.gain, budget.noise_psd))


def df_rate(b_k0, p_k0, a2_k, g2_k, tau_k, b, p, n0, h2=None) -> RateReport:
    """Cooperative DF rate of one terminal with per-DBS breakdown.

    ``h2`` (MBS -> DBS gains) only fills ``backhaul_caps``.
    """
    g2_k = np.atleast_1d(np.asarray(g2_k, dtype=float))
    tau_k = np.atleast_1d(np.asarray(tau_k, dtype=float))
    direct = float(band_rate(b_k0, p_k0, a2_k, n0))
    relay = tau_k * band_rate(b, p, g2_k, n0) if g2_k.size else np.zeros(0)
    caps = (band_rate(b_k0, p_k0, np.asarray(h2, dtype=float), n0)
            if h2 is not None else np.full(g2_k.shape, np.nan))
    return RateReport(direct, relay, direct + float(relay.sum()), np.atleast_1d(caps))


def backhaul_ok(r_k, b_k0, p_k0, h2, tau_k, n0, tol=1e-6, r_t=None) -> bool:
    """True iff every DBS relaying for this terminal can decode it.

    A DBS counts as relaying when tau > tol; the rate comparison allows
    ``tol * r_t`` slack (``r_t`` defaults to ``r_k``).
    """
    tau_k = np.atleast_1d(np.asarray(tau_k, dtype=float))
    active = tau_k > tol
    if not active.any():
        return True
    slack = tol * (r_k if r_t is None else r_t)
    caps = band_rate(b_k0, p_k0, np.atleast_1d(np.asarray(h2, dtype=float))[active], n0)
    return bool(np.all(r_k <= caps + slack))


def terminal_rates(b_k0, p_k0, tau, a2, g2, b, p, n0) -> np.ndarray:
    """Vector of per-terminal DF rates for a full allocation."""
    direct = band_rate(b_k0, p_k0, a2, n0)
    relay = band_rate(b, p, g2, n0)
    return direct + (np.asarray(tau) * relay).sum(axis=1) if relay.size else direct
