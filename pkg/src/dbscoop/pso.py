"""Particle swarm search over DBS position matrices (N x 3, km).

Each particle owns its RNG stream, all cost evaluations of an iteration are
done before any best is updated (synchronous swarm), and bests change only
on strict improvement. Together this makes a run independent of how the
evaluations are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from dbscoop.scenario import PsoParams, Region3D

CostFn = Callable[[np.ndarray], float]
MapFn = Callable[[CostFn, Iterable[np.ndarray]], Iterable[float]]


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_cost: float
    cost: float


@dataclass
class SwarmState:
    particles: list[Particle]
    global_best: np.ndarray
    global_cost: float
    iteration: int = 0


@dataclass
class PsoResult:
    best_position: np.ndarray
    best_cost: float
    cost_trace: np.ndarray      # c_G* after each iteration, index 0 = initial swarm
    position_trace: np.ndarray  # (iterations + 1) x L x N x 3
    iterations: int
    stopped_by: str             # "stall" or "max_iter"


def particle_streams(seed: int | np.random.SeedSequence, count: int) -> list[np.random.Generator]:
    """One independent generator per particle, derived from ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in ss.spawn(count)]


def _evaluate(cost_fn: CostFn, positions: Sequence[np.ndarray], map_fn: MapFn | None):
    mapper = map if map_fn is None else map_fn
    return [float(c) for c in mapper(cost_fn, positions)]


def init_swarm(streams: Sequence[np.random.Generator], num_dbs: int, region: Region3D,
               cost_fn: CostFn, map_fn: MapFn | None = None) -> SwarmState:
    if len(streams) < 1:
        raise ValueError("need at least one particle")
    lo, width = region.lower, region.widths
    pos, vel = [], []
    for rng in streams:
        pos.append(lo + rng.random((num_dbs, 3)) * width)
        vel.append((2.0 * rng.random((num_dbs, 3)) - 1.0) * width)
    costs = _evaluate(cost_fn, pos, map_fn)
    particles = [Particle(w, v, w.copy(), c, c) for w, v, c in zip(pos, vel, costs)]
    best = int(np.argmin(costs))
    return SwarmState(particles, pos[best].copy(), costs[best], 0)


def _clamp(w: np.ndarray, v: np.ndarray, region: Region3D) -> None:
    lo = np.broadcast_to(region.lower, w.shape)
    hi = np.broadcast_to(region.upper, w.shape)
    out = (w < lo) | (w > hi)
    np.clip(w, lo, hi, out=w)
    v[out] = 0.0


def step(state: SwarmState, streams: Sequence[np.random.Generator], cost_fn: CostFn,
         inertia: float, cognitive: float, social: float, region: Region3D,
         map_fn: MapFn | None = None) -> SwarmState:
    """One synchronous iteration; mutates and returns ``state``."""
    g = state.global_best
    for part, rng in zip(state.particles, streams):
        w, v = part.position, part.velocity
        for j in range(w.shape[0]):
            r1 = rng.random(3)
            r2 = rng.random(3)
            v[j] = (inertia * v[j] + cognitive * r1 * (part.best_position[j] - w[j])
                    + social * r2 * (g[j] - w[j]))
        w += v
        _clamp(w, v, region)
    costs = _evaluate(cost_fn, [p.position for p in state.particles], map_fn)
    for part, c in zip(state.particles, costs):
        part.cost = c
        if c < part.best_cost:
            part.best_cost = c
            part.best_position = part.position.copy()
    best = min(range(len(state.particles)), key=lambda i: state.particles[i].best_cost)
    if state.particles[best].best_cost < state.global_cost:
        state.global_cost = state.particles[best].best_cost
        state.global_best = state.particles[best].best_position.copy()
    state.iteration += 1
    return state


def stalled(trace: Sequence[float], window: int, rel_tol: float) -> bool:
    """True when c_G* improved by less than rel_tol (relative) over ``window`` iterations."""
    if window <= 0 or len(trace) <= window:
        return False
    old, new = trace[-1 - window], trace[-1]
    return old - new <= rel_tol * abs(old)


def run(cost_fn: CostFn, num_dbs: int, region: Region3D, params: PsoParams,
        seed: int | np.random.SeedSequence, map_fn: MapFn | None = None,
        streams: Sequence[np.random.Generator] | None = None) -> PsoResult:
    """Optimize DBS positions; traces record every iteration including the initial swarm."""
    if streams is None:
        streams = particle_streams(seed, params.particles)
    state = init_swarm(streams, num_dbs, region, cost_fn, map_fn)
    trace = [state.global_cost]
    positions = [np.stack([p.position.copy() for p in state.particles])]
    stopped_by = "max_iter"
    while state.iteration < params.max_iter:
        step(state, streams, cost_fn, params.inertia, params.cognitive, params.social,
             region, map_fn)
        trace.append(state.global_cost)
        positions.append(np.stack([p.position.copy() for p in state.particles]))
        if stalled(trace, params.stall_window, params.rel_tol):
            stopped_by = "stall"
            break
    return PsoResult(state.global_best.copy(), state.global_cost, np.array(trace),
                     np.stack(positions), state.iteration, stopped_by)
