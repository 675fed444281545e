"""Network geometry, configuration parameters and seeded randomness.

All positions are in kilometres. The JSON config carries the unit in every
field name; :func:`load_config` and :func:`save_config` round-trip every
field of :class:`Scenario`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from dbscoop.coexistence import WifiParams

#: -174 dBm/Hz thermal noise floor, in W/Hz.
DEFAULT_NOISE_PSD = 4.0e-21


class ConfigError(ValueError):
    """Raised for an unreadable or invalid scenario config."""


@dataclass(frozen=True)
class Region3D:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float = 0.0
    z_max: float = 0.0

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.z_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.z_max])

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def is_ground(self) -> bool:
        return self.z_min == 0.0 and self.z_max == 0.0

    def contains(self, point, atol: float = 1e-12) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.lower - atol) and np.all(p <= self.upper + atol))

    def errors(self, name: str) -> list[str]:
        out = []
        for axis in "xyz":
            lo, hi = getattr(self, f"{axis}_min"), getattr(self, f"{axis}_max")
            if not (np.isfinite(lo) and np.isfinite(hi)):
                out.append(f"{name}.{axis}: bounds must be finite")
            elif lo > hi:
                out.append(f"{name}.{axis}: min {lo} > max {hi}")
        return out


@dataclass(frozen=True)
class RadioParams:
    total_bandwidth: float = 20e6
    total_power: float = 20.0
    dbs_bandwidth: float = 5e6
    dbs_power: float = 5.0
    noise_psd: float = DEFAULT_NOISE_PSD
    carrier_freq_licensed: float = 2e9
    carrier_freq_unlicensed: float = 5e9
    target_rate: float = 20e6


@dataclass(frozen=True)
class EnvParams:
    alpha: float = 9.61
    beta: float = 0.16
    loss_los: float = 1.0
    loss_nlos: float = 20.0


@dataclass(frozen=True)
class PsoParams:
    particles: int = 20
    inertia: float = 0.7298
    cognitive: float = 1.4962
    social: float = 1.4962
    max_iter: int = 150
    stall_window: int = 20
    rel_tol: float = 1e-4


@dataclass(frozen=True)
class SolverParams:
    gap_tol: float = 1e-9      # complementarity, in units of r_T per terminal
    kkt_tol: float = 1e-9      # stationarity, normalized units
    max_iter: int = 200
    centering: float = 0.1
    activity_tol: float = 1e-6


@dataclass(frozen=True)
class Scenario:
    terminal_positions: tuple[tuple[float, float, float], ...]
    num_dbs: int = 3
    mbs_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mbs_region: Region3D = Region3D(0.0, 0.0, 0.0, 0.0)
    terminal_region: Region3D = Region3D(-1.0, 1.0, -1.0, 1.0)
    dbs_region: Region3D = Region3D(-1.0, 1.0, -1.0, 1.0, 0.1, 0.4)
    radio: RadioParams = RadioParams()
    env: EnvParams = EnvParams()
    wifi: tuple[WifiParams, ...] = ()
    airtime_share: tuple[float, ...] | None = (0.6,)
    pso: PsoParams = PsoParams()
    solver: SolverParams = SolverParams()
    rng_seed: int = 0

    @property
    def num_terminals(self) -> int:
        return len(self.terminal_positions)

    @property
    def terminals(self) -> np.ndarray:
        return np.array(self.terminal_positions, dtype=float).reshape(-1, 3)

    @property
    def mbs(self) -> np.ndarray:
        return np.array(self.mbs_position, dtype=float)

    def airtime_shares(self) -> np.ndarray:
        """Per-DBS unlicensed airtime S_D, fixed before placement is optimized."""
        from dbscoop import coexistence

        n = self.num_dbs
        if self.airtime_share is not None:
            shares = self.airtime_share
            if len(shares) == 1:
                shares = shares * n
            return np.array(shares[:n], dtype=float)
        params = self.wifi if len(self.wifi) != 1 else self.wifi * n
        out = []
        for w in params[:n]:
            if w.gamma is None:
                w = dataclasses.replace(w, gamma=coexistence.optimize_cw(w.omega, w.m, w.aps, w.c_cap))
            out.append(coexistence.solve_fixed_point(w).airtime)
        return np.array(out)

    def with_target_rate(self, r_t: float) -> "Scenario":
        return dataclasses.replace(self, radio=dataclasses.replace(self.radio, target_rate=float(r_t)))

    def with_num_dbs(self, n: int) -> "Scenario":
        return dataclasses.replace(self, num_dbs=int(n))

    def reseeded(self, seed: int, redraw_terminals: bool = True) -> "Scenario":
        """Same parameters under another seed, terminals redrawn from it by default."""
        terms = self.terminal_positions
        if redraw_terminals:
            pts = sample_terminals(derive_rng(seed, "terminals"), self.num_terminals,
                                   self.terminal_region)
            terms = tuple(tuple(map(float, p)) for p in pts)
        return dataclasses.replace(self, terminal_positions=terms, rng_seed=int(seed))

    def digest(self) -> str:
        """Short stable hash of every field, used to tag result files."""
        blob = json.dumps(to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def derive_seed(seed: int, label: str) -> np.random.SeedSequence:
    """Independent seed sequence for ``label`` under master ``seed``.

    Streams are keyed by a hash of the label, so adding a consumer never
    shifts the draws of another.
    """
    key = int.from_bytes(hashlib.sha256(label.encode()).digest()[:8], "little")
    return np.random.SeedSequence(int(seed), spawn_key=(key,))


def derive_rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, label))


def sample_terminals(rng: np.random.Generator, k: int, region: Region3D) -> np.ndarray:
    """K points i.i.d. uniform over a ground region (z = 0)."""
    if k < 1:
        raise ValueError("need at least one terminal")
    lo, hi = region.lower[:2], region.upper[:2]
    xy = lo + (hi - lo) * rng.random((k, 2))
    return np.column_stack([xy, np.zeros(k)])


def sample_uniform(rng: np.random.Generator, n: int, region: Region3D) -> np.ndarray:
    lo, hi = region.lower, region.upper
    return lo + (hi - lo) * rng.random((n, 3))


def validate(sc: Scenario) -> list[str]:
    """Every invariant violation in ``sc``; empty when valid."""
    errs: list[str] = []
    errs += sc.mbs_region.errors("mbs_region")
    errs += sc.terminal_region.errors("terminal_region")
    errs += sc.dbs_region.errors("dbs_region")
    if not sc.terminal_region.is_ground:
        errs.append("terminal_region: z bounds must both be 0")
    if not sc.mbs_region.is_ground:
        errs.append("mbs_region: z bounds must both be 0")
    if not sc.mbs_region.contains(sc.mbs_position):
        errs.append("mbs_position: MBS not in its region")
    if sc.num_terminals < 1:
        errs.append("terminal_positions: need K >= 1 terminals")
    for i, pos in enumerate(sc.terminal_positions):
        if len(pos) != 3 or not sc.terminal_region.contains(pos):
            errs.append(f"terminal_positions[{i}]: terminal not in terminal region")
    if sc.num_dbs < 0:
        errs.append("num_dbs: must be >= 0")
    for name, value in dataclasses.asdict(sc.radio).items():
        if not (np.isfinite(value) and value > 0):
            errs.append(f"radio.{name}: must be strictly positive")
    if not sc.env.alpha > 0:
        errs.append("env.alpha: must be > 0")
    if not sc.env.beta > 0:
        errs.append("env.beta: must be > 0")
    for i, w in enumerate(sc.wifi):
        errs += [f"wifi[{i}].{e}" for e in w.errors()]
    if sc.airtime_share is None:
        if len(sc.wifi) not in (1, sc.num_dbs) and sc.num_dbs > 0:
            errs.append("wifi: give one entry or one per DBS when airtime_share is unset")
    else:
        if len(sc.airtime_share) not in (1, sc.num_dbs) and sc.num_dbs > 0:
            errs.append("airtime_share: give one value or one per DBS")
        for s in sc.airtime_share:
            if not 0.0 <= s <= 1.0:
                errs.append(f"airtime_share: {s} not in [0, 1]")
    p = sc.pso
    if p.particles < 1:
        errs.append("pso.particles: must be >= 1")
    if p.max_iter < 0:
        errs.append("pso.max_iter: must be >= 0")
    if p.stall_window < 1:
        errs.append("pso.stall_window: must be >= 1")
    for name in ("inertia", "cognitive", "social", "rel_tol"):
        if getattr(p, name) < 0:
            errs.append(f"pso.{name}: must be >= 0")
    s = sc.solver
    if not (s.gap_tol > 0 and s.kkt_tol > 0 and s.max_iter > 0 and 0 < s.centering < 1):
        errs.append("solver: tolerances and caps must be positive, centering in (0, 1)")
    return errs


# ---------------------------------------------------------------- JSON I/O

_RADIO_KEYS = {
    "total_bandwidth": "total_bandwidth_hz",
    "total_power": "total_power_w",
    "dbs_bandwidth": "dbs_bandwidth_hz",
    "dbs_power": "dbs_power_w",
    "noise_psd": "noise_psd_w_per_hz",
    "carrier_freq_licensed": "carrier_freq_licensed_hz",
    "carrier_freq_unlicensed": "carrier_freq_unlicensed_hz",
    "target_rate": "target_rate_bps",
}
_ENV_KEYS = {"alpha": "alpha", "beta": "beta", "loss_los": "loss_los_db", "loss_nlos": "loss_nlos_db"}
_WIFI_KEYS = {
    "omega": "min_cw_slots",
    "m": "max_backoff_stage",
    "aps": "num_aps",
    "gamma": "dbs_cw_slots",
    "c_cap": "collision_cap",
}


def _region_to_dict(r: Region3D) -> dict:
    return {"x": [r.x_min, r.x_max], "y": [r.y_min, r.y_max], "z": [r.z_min, r.z_max]}


def _region_from_dict(d: dict, name: str) -> Region3D:
    try:
        z = d.get("z", [0.0, 0.0])
        return Region3D(*map(float, d["x"]), *map(float, d["y"]), *map(float, z))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected {{'x': [lo, hi], 'y': [lo, hi], 'z': [lo, hi]}}") from exc


def to_dict(sc: Scenario) -> dict:
    return {
        "rng_seed": sc.rng_seed,
        "num_dbs": sc.num_dbs,
        "mbs_position_km": list(sc.mbs_position),
        "mbs_region_km": _region_to_dict(sc.mbs_region),
        "terminal_region_km": _region_to_dict(sc.terminal_region),
        "dbs_region_km": _region_to_dict(sc.dbs_region),
        "terminal_positions_km": [list(p) for p in sc.terminal_positions],
        "radio": {v: getattr(sc.radio, k) for k, v in _RADIO_KEYS.items()},
        "environment": {v: getattr(sc.env, k) for k, v in _ENV_KEYS.items()},
        "wifi": [{v: getattr(w, k) for k, v in _WIFI_KEYS.items()} for w in sc.wifi],
        "airtime_share": None if sc.airtime_share is None else list(sc.airtime_share),
        "pso": dataclasses.asdict(sc.pso),
        "solver": dataclasses.asdict(sc.solver),
    }


def _sub(d: dict, section: str, keys: dict, cls, extra_ok=()):
    raw = d.get(section, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"{section}: expected an object")
    inverse = {v: k for k, v in keys.items()}
    unknown = set(raw) - set(inverse) - set(extra_ok)
    if unknown:
        raise ConfigError(f"{section}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for json_key, value in raw.items():
        if json_key in inverse:
            kwargs[inverse[json_key]] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{section}: {exc}") from exc


def _wifi_from(d) -> WifiParams:
    if not isinstance(d, dict):
        raise ConfigError("wifi: each entry must be an object")
    w = _sub({"wifi": d}, "wifi", _WIFI_KEYS, WifiParams)
    return w


_TOP_KEYS = {
    "rng_seed", "num_dbs", "num_terminals", "mbs_position_km", "mbs_region_km",
    "terminal_region_km", "dbs_region_km", "terminal_positions_km", "radio",
    "environment", "wifi", "airtime_share", "pso", "solver",
}


def from_dict(d: dict, seed: int | None = None) -> Scenario:
    """Build and validate a Scenario from its JSON form.

    Terminals are drawn from the ``"terminals"`` stream of the seed when
    ``terminal_positions_km`` is absent. ``seed`` overrides ``rng_seed``.
    """
    if not isinstance(d, dict):
        raise ConfigError("config root must be an object")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {sorted(unknown)}")
    base = Scenario(terminal_positions=())
    rng_seed = int(d.get("rng_seed", 0) if seed is None else seed)
    terminal_region = (
        _region_from_dict(d["terminal_region_km"], "terminal_region_km")
        if "terminal_region_km" in d else base.terminal_region
    )
    if "terminal_positions_km" in d and d["terminal_positions_km"] is not None:
        try:
            terms = tuple(tuple(float(c) for c in p) for p in d["terminal_positions_km"])
        except (TypeError, ValueError) as exc:
            raise ConfigError("terminal_positions_km: expected a list of [x, y, z]") from exc
    else:
        k = d.get("num_terminals", 10)
        if not isinstance(k, int) or k < 1:
            raise ConfigError("num_terminals: must be an integer >= 1")
        pts = sample_terminals(derive_rng(rng_seed, "terminals"), k, terminal_region)
        terms = tuple(tuple(map(float, p)) for p in pts)
    if "num_terminals" in d and len(terms) != d["num_terminals"]:
        raise ConfigError("num_terminals: does not match terminal_positions_km")

    wifi_raw = d.get("wifi", [{}])
    if isinstance(wifi_raw, dict):
        wifi_raw = [wifi_raw]
    share = d.get("airtime_share", base.airtime_share)
    if isinstance(share, (int, float)):
        share = [share]
    try:
        sc = Scenario(
            terminal_positions=terms,
            num_dbs=int(d.get("num_dbs", base.num_dbs)),
            mbs_position=tuple(float(c) for c in d.get("mbs_position_km", base.mbs_position)),
            mbs_region=(_region_from_dict(d["mbs_region_km"], "mbs_region_km")
                        if "mbs_region_km" in d else base.mbs_region),
            terminal_region=terminal_region,
            dbs_region=(_region_from_dict(d["dbs_region_km"], "dbs_region_km")
                        if "dbs_region_km" in d else base.dbs_region),
            radio=_sub(d, "radio", _RADIO_KEYS, RadioParams),
            env=_sub(d, "environment", _ENV_KEYS, EnvParams),
            wifi=tuple(_wifi_from(w) for w in wifi_raw),
            airtime_share=None if share is None else tuple(float(s) for s in share),
            pso=_sub(d, "pso", {f.name: f.name for f in dataclasses.fields(PsoParams)}, PsoParams),
            solver=_sub(d, "solver", {f.name: f.name for f in dataclasses.fields(SolverParams)}, SolverParams),
            rng_seed=rng_seed,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    errs = validate(sc)
    if errs:
        raise ConfigError("; ".join(errs))
    return sc


def load_config(path, seed: int | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from exc
    return from_dict(d, seed=seed)


def save_config(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(to_dict(sc), indent=2) + "\n")


def default_scenario(seed: int = 0, num_terminals: int = 10, **overrides) -> Scenario:
    """Table-default scenario with terminals drawn from ``seed``."""
    d = {"num_terminals": num_terminals, "rng_seed": seed}
    d.update(overrides)
    return from_dict(d)
