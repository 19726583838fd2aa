"""Declarative scenario files (TOML) and their validation.

A scenario names the receiver trajectory, the GPS constellation, the HAPS
platform pool, the error models, the environment timeline and the solver
settings. All physical values are SI (angles in degrees where the key says so).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import tomli

from .atmosphere import StandardAtmosphere
from .error_models import DEFAULT_LOS_TABLES, LosProbabilityTable
from .geodesy import GeodeticCoord, geodetic_to_ecef
from .haps import DEFAULT_HAPS_HEIGHT, HapsPlatform, platform_from_degrees
from .rinex import BroadcastEphemeris, IonoParameters
from .spp import SolverConfig

MODES = ("simulation", "experiment")
SYSTEMS = ("gps_only", "one_haps_gps", "four_haps_gps", "four_haps_only")
ENVIRONMENTS = ("suburban", "dense_urban")
HAPS_DEMAND = {"gps_only": 0, "one_haps_gps": 1, "four_haps_gps": 4, "four_haps_only": 4}
USES_GPS = {"gps_only": True, "one_haps_gps": True, "four_haps_gps": True, "four_haps_only": False}


class ScenarioError(ValueError):
    """Invalid scenario content (CLI exit code 2)."""


class DataError(RuntimeError):
    """Missing or unusable input data (CLI exit code 3)."""


@dataclass(frozen=True)
class Waypoint:
    t: float
    position: np.ndarray  # ECEF


@dataclass(frozen=True)
class Segment:
    start: float
    end: float
    environment: str


@dataclass(frozen=True)
class ExperimentInputs:
    observation: Path
    navigation: Path
    truth: Path


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str
    seed: int
    system: str
    start_week: int
    start_sow: float
    duration: float
    step: float
    waypoints: tuple[Waypoint, ...]
    almanac: tuple[BroadcastEphemeris, ...]
    sat_sigma: float
    sat_tau: float
    inject_atmosphere: bool
    iono: IonoParameters | None
    atmosphere: StandardAtmosphere
    platforms: tuple[HapsPlatform, ...]
    haps_sigma: dict[str, float]
    los_enabled: bool
    los_tables: dict[str, LosProbabilityTable]
    timeline: tuple[Segment, ...]
    solver: SolverConfig
    experiment: ExperimentInputs | None = None
    relativistic_clock: bool = True
    source: Path | None = field(default=None, compare=False)

    @property
    def epochs(self) -> np.ndarray:
        """Epoch offsets [s] from the scenario start."""
        n = int(math.floor(self.duration / self.step + 1e-9)) + 1
        return np.arange(n) * self.step

    def environment_at(self, t: float) -> str:
        for seg in self.timeline:
            if seg.start <= t < seg.end:
                return seg.environment
        last = self.timeline[-1]
        if t == last.end:
            return last.environment
        raise DataError(f"epoch {t} s not covered by the environment timeline")

    def truth_at(self, t: float) -> np.ndarray:
        """Linear interpolation of the ECEF waypoints at offset ``t``."""
        ts = np.array([w.t for w in self.waypoints])
        ps = np.array([w.position for w in self.waypoints])
        if len(ts) == 1:
            return ps[0].copy()
        return np.array([np.interp(t, ts, ps[:, k]) for k in range(3)])

    def trajectory_key(self) -> tuple:
        return tuple((w.t, *np.round(w.position, 6)) for w in self.waypoints) + (
            self.start_week,
            self.start_sow,
            self.duration,
            self.step,
        )

    @property
    def active_platforms(self) -> tuple[HapsPlatform, ...]:
        """Exactly the platforms the configured system uses.

        A one-HAPS system flies the first platform of the pool.
        """
        return self.platforms[: HAPS_DEMAND[self.system]]

    @property
    def uses_gps(self) -> bool:
        return USES_GPS[self.system]

    def for_system(self, system: str) -> Scenario:
        """Copy of this scenario run with another system configuration."""
        if system not in SYSTEMS:
            raise ScenarioError(f"unknown system {system!r}; expected one of {SYSTEMS}")
        need = HAPS_DEMAND[system]
        if len(self.platforms) < need:
            raise ScenarioError(f"system {system} needs {need} HAPS platforms, {len(self.platforms)} defined")
        return replace(self, system=system)


def _get(table: dict, key: str, kind=float, default: Any = ..., where: str = ""):
    if key not in table:
        if default is ...:
            raise ScenarioError(f"{where}{key}: required key missing")
        return default
    value = table[key]
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind is int and isinstance(value, float) and not value.is_integer():
            raise TypeError
        out = kind(value)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}{key}: expected {kind.__name__}, got {value!r}") from None
    if kind is float and not math.isfinite(out):
        raise ScenarioError(f"{where}{key}: must be finite")
    return out


def _almanac(raw: list, week: int, sow: float) -> tuple[BroadcastEphemeris, ...]:
    out = []
    for k, entry in enumerate(raw):
        where = f"constellation.satellites[{k}]."
        try:
            out.append(
                BroadcastEphemeris(
                    prn=_get(entry, "prn", int, where=where),
                    week=_get(entry, "week", int, week, where),
                    toe=_get(entry, "toe", float, sow, where),
                    toc_week=_get(entry, "week", int, week, where),
                    toc=_get(entry, "toe", float, sow, where),
                    af0=_get(entry, "af0", float, 0.0, where),
                    af1=_get(entry, "af1", float, 0.0, where),
                    af2=0.0,
                    sqrt_a=_get(entry, "sqrt_a", float, where=where),
                    e=_get(entry, "e", float, where=where),
                    i0=math.radians(_get(entry, "i0_deg", float, where=where)),
                    omega0=math.radians(_get(entry, "omega0_deg", float, where=where)),
                    omega=math.radians(_get(entry, "omega_deg", float, 0.0, where)),
                    m0=math.radians(_get(entry, "m0_deg", float, where=where)),
                    delta_n=0.0,
                    idot=0.0,
                    omega_dot=_get(entry, "omega_dot", float, 0.0, where),
                )
            )
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"{where[:-1]}: {exc}") from None
    prns = [e.prn for e in out]
    if len(set(prns)) != len(prns):
        raise ScenarioError("constellation: duplicate PRN")
    return tuple(out)


def _waypoints(raw: list) -> tuple[Waypoint, ...]:
    if not raw:
        raise ScenarioError("trajectory.waypoints: at least one waypoint required")
    out = []
    for k, w in enumerate(raw):
        where = f"trajectory.waypoints[{k}]."
        try:
            g = GeodeticCoord.from_degrees(
                _get(w, "lat_deg", where=where), _get(w, "lon_deg", where=where), _get(w, "h_m", float, 0.0, where)
            )
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"{where[:-1]}: {exc}") from None
        out.append(Waypoint(_get(w, "t_s", where=where), geodetic_to_ecef(g)))
    if any(b.t <= a.t for a, b in zip(out, out[1:])):
        raise ScenarioError("trajectory.waypoints: times must be strictly increasing")
    return tuple(out)


def _platforms(raw: list) -> tuple[HapsPlatform, ...]:
    out = []
    for k, p in enumerate(raw):
        where = f"haps[{k}]."
        try:
            out.append(
                platform_from_degrees(
                    str(_get(p, "id", str, where=where)),
                    _get(p, "lat_deg", where=where),
                    _get(p, "lon_deg", where=where),
                    _get(p, "height_m", float, DEFAULT_HAPS_HEIGHT, where),
                    _get(p, "radius_m", float, 0.0, where),
                    _get(p, "period_s", float, 0.0, where) or None,
                    _get(p, "phase_deg", float, 0.0, where),
                )
            )
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"{where[:-1]}: {exc}") from None
    ids = [p.id for p in out]
    if len(set(ids)) != len(ids):
        raise ScenarioError("haps: duplicate platform id")
    return tuple(out)


def _timeline(raw: list, duration: float) -> tuple[Segment, ...]:
    if not raw:
        raise ScenarioError("timeline: at least one segment required")
    segs = []
    for k, s in enumerate(raw):
        where = f"timeline[{k}]."
        env = _get(s, "environment", str, where=where)
        if env not in ENVIRONMENTS:
            raise ScenarioError(f"{where}environment: {env!r} not in {ENVIRONMENTS}")
        seg = Segment(_get(s, "start_s", where=where), _get(s, "end_s", where=where), env)
        if seg.end <= seg.start:
            raise ScenarioError(f"{where[:-1]}: end must exceed start")
        segs.append(seg)
    for a, b in zip(segs, segs[1:]):
        if b.start != a.end:
            raise ScenarioError("timeline: segments must be contiguous and non-overlapping")
    if segs[0].start > 0.0 or segs[-1].end < duration:
        raise ScenarioError(f"timeline: segments must cover [0, {duration}] s")
    return tuple(segs)


def _los_tables(raw: dict) -> dict[str, LosProbabilityTable]:
    tables = dict(DEFAULT_LOS_TABLES)
    for env in ENVIRONMENTS:
        if env in raw:
            pts = raw[env].get("breakpoints")
            if not pts:
                raise ScenarioError(f"los.{env}.breakpoints: empty LOS table")
            try:
                tables[env] = LosProbabilityTable(env, tuple(tuple(p) for p in pts))
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"los.{env}: {exc}") from None
    return tables


def _iono(raw: dict) -> IonoParameters | None:
    if "iono_alpha" not in raw and "iono_beta" not in raw:
        return None
    try:
        return IonoParameters(tuple(float(v) for v in raw["iono_alpha"]), tuple(float(v) for v in raw["iono_beta"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"atmosphere: bad Klobuchar coefficients ({exc})") from None


def scenario_from_dict(doc: dict, base_dir: Path | None = None, name: str = "scenario") -> Scenario:
    mode = _get(doc, "mode", str)
    if mode not in MODES:
        raise ScenarioError(f"mode: {mode!r} not in {MODES}")
    seed = _get(doc, "seed", int)
    if seed < 0:
        raise ScenarioError("seed: must be non-negative")
    system = _get(doc, "system", str)
    if system not in SYSTEMS:
        raise ScenarioError(f"system: {system!r} not in {SYSTEMS}")

    time = doc.get("time", {})
    start_week = _get(time, "start_week", int, where="time.")
    start_sow = _get(time, "start_sow", float, where="time.")
    duration = _get(time, "duration_s", float, where="time.")
    step = _get(time, "step_s", float, 1.0, "time.")
    if duration < 0 or step <= 0:
        raise ScenarioError("time: duration must be non-negative and step positive")

    atm_raw = doc.get("atmosphere", {})
    try:
        atmosphere = StandardAtmosphere(
            _get(atm_raw, "pressure_hpa", float, 1013.25, "atmosphere."),
            _get(atm_raw, "temperature_k", float, 291.15, "atmosphere."),
            _get(atm_raw, "humidity", float, 0.5, "atmosphere."),
        )
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"atmosphere: {exc}") from None
    iono = _iono(atm_raw)

    solver_raw = doc.get("solver", {})
    try:
        solver = SolverConfig(
            elevation_mask_deg=_get(solver_raw, "elevation_mask_deg", float, 15.0, "solver."),
            threshold_m=_get(solver_raw, "threshold_m", float, 0.01, "solver."),
            max_iterations=_get(solver_raw, "max_iterations", int, 20, "solver."),
            iono=_get(solver_raw, "iono", bool, True, "solver."),
            tropo=_get(solver_raw, "tropo", bool, True, "solver."),
            atmosphere=atmosphere,
        )
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(f"solver: {exc}") from None

    sat_err = doc.get("satellite_error", {})
    sat_sigma = _get(sat_err, "sigma_m", float, 6.0, "satellite_error.")
    sat_tau = _get(sat_err, "tau_s", float, 10.0, "satellite_error.")
    if sat_sigma < 0 or sat_tau <= 0:
        raise ScenarioError("satellite_error: sigma must be >= 0 and tau > 0")

    haps_err = doc.get("haps_error", {})
    haps_sigma = {env: _get(haps_err, f"{env}_sigma_m", float, d, "haps_error.") for env, d in (("suburban", 2.0), ("dense_urban", 5.0))}
    if min(haps_sigma.values()) < 0:
        raise ScenarioError("haps_error: sigma must be non-negative")

    los_raw = doc.get("los", {})
    platforms = _platforms(doc.get("haps", []))
    inject = _get(atm_raw, "inject", bool, True, "atmosphere.")

    experiment = None
    waypoints: tuple[Waypoint, ...] = ()
    almanac: tuple[BroadcastEphemeris, ...] = ()
    if mode == "simulation":
        waypoints = _waypoints(doc.get("trajectory", {}).get("waypoints", []))
        almanac = _almanac(doc.get("constellation", {}).get("satellites", []), start_week, start_sow)
        if USES_GPS[system] and len(almanac) < 4:
            raise ScenarioError("constellation: at least four satellites required")
        if (solver.iono or inject) and iono is None and USES_GPS[system]:
            raise ScenarioError("atmosphere: iono_alpha/iono_beta required in simulation mode")
    else:
        exp = doc.get("experiment", {})
        base = base_dir or Path.cwd()
        paths = {}
        for key in ("observation", "navigation", "truth"):
            if key not in exp:
                raise ScenarioError(f"experiment.{key}: required path missing")
            p = Path(str(exp[key]))
            paths[key] = p if p.is_absolute() else base / p
        experiment = ExperimentInputs(**paths)

    scenario = Scenario(
        name=str(doc.get("name", name)),
        mode=mode,
        seed=seed,
        system=system,
        start_week=start_week,
        start_sow=start_sow,
        duration=duration,
        step=step,
        waypoints=waypoints,
        almanac=almanac,
        sat_sigma=sat_sigma,
        sat_tau=sat_tau,
        inject_atmosphere=inject,
        iono=iono,
        atmosphere=atmosphere,
        platforms=platforms,
        haps_sigma=haps_sigma,
        los_enabled=_get(los_raw, "enabled", bool, False, "los."),
        los_tables=_los_tables(los_raw),
        timeline=_timeline(doc.get("timeline", []), duration),
        solver=solver,
        experiment=experiment,
        relativistic_clock=_get(doc.get("ephemeris", {}), "relativistic_clock", bool, True, "ephemeris."),
        source=None,
    )
    return scenario.for_system(system)


BUILTIN_PACKAGE = "hapsgnss.scenarios"


def builtin_scenarios() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(BUILTIN_PACKAGE).iterdir() if p.name.endswith(".toml"))


def load_scenario(path_or_name: str | Path) -> Scenario:
    """Load a scenario file, or a shipped scenario by bare name (e.g. ``ottawa_suburban``)."""
    path = Path(path_or_name)
    if not path.exists() and path.suffix == "" and str(path_or_name) in builtin_scenarios():
        res = resources.files(BUILTIN_PACKAGE) / f"{path_or_name}.toml"
        text = res.read_text(encoding="utf-8")
        base = None
    else:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read scenario {path}: {exc.strerror}") from None
        base = path.resolve().parent
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"{path_or_name}: {exc}") from None
    sc = scenario_from_dict(doc, base, name=path.stem)
    return replace(sc, source=path if base else None)
