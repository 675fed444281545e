"""Deterministic link gains from path loss (no small-scale fading).

Ground links MBS -> terminal use the modified Hata urban model (distance in
km). Every link touching a DBS uses the air-to-ground model averaged over
LoS/NLoS (free-space term with the 3D distance in metres).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dbscoop.scenario import EnvParams, Scenario

SPEED_OF_LIGHT = 2.998e8  # m/s
KM = 1000.0
HATA_MIN_DISTANCE = 0.05  # km


@dataclass(frozen=True)
class ChannelGains:
    """Linear power gains for one DBS placement.

    a2[k]: MBS -> terminal k, h2[j]: MBS -> DBS j, g2[k, j]: DBS j -> terminal k.
    """

    a2: np.ndarray
    h2: np.ndarray
    g2: np.ndarray

    @property
    def num_terminals(self) -> int:
        return self.a2.shape[0]

    @property
    def num_dbs(self) -> int:
        return self.h2.shape[0]


def hata_path_loss_db(d_km):
    d = np.maximum(np.asarray(d_km, dtype=float), HATA_MIN_DISTANCE)
    return 122.0 + 38.0 * np.log10(d)


def elevation_deg(altitude_km, ground_dist_km):
    # arctan2 gives 90 degrees directly overhead and 0 at zero altitude
    return np.degrees(np.arctan2(altitude_km, ground_dist_km))


def los_probability(altitude_km, ground_dist_km, env: EnvParams):
    theta = elevation_deg(altitude_km, ground_dist_km)
    return 1.0 / (1.0 + env.alpha * np.exp(-env.beta * (theta - env.alpha)))


def free_space_db(d_m, f_c):
    return 20.0 * np.log10(4.0 * np.pi * f_c * np.asarray(d_m, dtype=float) / SPEED_OF_LIGHT)


def atg_path_loss_db(ground_pos, dbs_pos, f_c: float, env: EnvParams):
    """Air-to-ground path loss in dB; positions in km, broadcastable (..., 3)."""
    ground = np.asarray(ground_pos, dtype=float)
    dbs = np.asarray(dbs_pos, dtype=float)
    delta = dbs - ground
    ground_dist = np.hypot(delta[..., 0], delta[..., 1])
    alt = delta[..., 2]
    d = np.sqrt(ground_dist**2 + alt**2)
    if np.any(d == 0.0):
        raise ValueError("ground node and DBS coincide")
    p_los = los_probability(alt, ground_dist, env)
    return free_space_db(d * KM, f_c) + p_los * env.loss_los + (1.0 - p_los) * env.loss_nlos


def db_to_gain(pl_db):
    return 10.0 ** (-np.asarray(pl_db, dtype=float) / 10.0)


def gains(sc: Scenario, dbs_positions) -> ChannelGains:
    """All link gains for DBSs at ``dbs_positions`` (N x 3, km)."""
    terms = sc.terminals
    dbs = np.asarray(dbs_positions, dtype=float).reshape(-1, 3)
    d_direct = np.linalg.norm(terms - sc.mbs, axis=1)
    a2 = db_to_gain(hata_path_loss_db(d_direct))
    if dbs.shape[0] == 0:
        return ChannelGains(a2, np.zeros(0), np.zeros((len(terms), 0)))
    h2 = db_to_gain(atg_path_loss_db(sc.mbs, dbs, sc.radio.carrier_freq_licensed, sc.env))
    g2 = db_to_gain(atg_path_loss_db(terms[:, None, :], dbs[None, :, :],
                                     sc.radio.carrier_freq_unlicensed, sc.env))
    return ChannelGains(a2, h2, g2)
