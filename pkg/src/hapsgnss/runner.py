"""Scenario execution: measurement assembly, per-epoch solves and output files."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .atmosphere import MIN_TROPO_ELEVATION, klobuchar_delay, saastamoinen_delay
from .ephemeris import EphemerisArray, EphemerisError, satellite_clock_offset, satellite_position, select_ephemeris
from .error_models import gaussian_error, gm_init, gm_series, los_gate, stream
from .geodesy import (
    C,
    ecef_to_geodetic,
    ecef_to_local_rotation,
    elevation_azimuth_many,
    emission_geometry,
    sagnac_rotate_many,
)
from .haps import geometric_range, haps_position
from .metrics import CdfSeries, cdf, covariance_to_local, error_3d, hdop, pdop, vdop
from .rinex import RinexError, parse_navigation, parse_observation
from .scenario import HAPS_DEMAND, DataError, Scenario, ScenarioError
from .spp import HAPS, SATELLITE, PositionSolution, RangingMeasurement, SolverError, estimate_receiver_clock, solve_epoch

log = logging.getLogger(__name__)

EPOCH_COLUMNS = (
    "epoch_s", "status", "x_m", "y_m", "z_m", "lat_deg", "lon_deg", "h_m", "dt_s",
    "n_sat", "n_haps", "iterations", "hdop", "pdop", "vdop", "err3d_m",
)
CDF_COLUMNS = ("system", "value_m", "cum_prob")
# satellites below this elevation at the true position are not tracked at all
TRACKING_ELEVATION = MIN_TROPO_ELEVATION


@dataclass
class EpochResult:
    epoch: float
    status: str
    n_sat: int
    n_haps: int
    solution: PositionSolution | None = None
    truth: np.ndarray | None = None
    hdop: float = math.nan
    pdop: float = math.nan
    vdop: float = math.nan
    err3d: float = math.nan
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "ok"


@dataclass
class RunResult:
    scenario: Scenario
    epochs: list[EpochResult]
    summary: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return self.scenario.system

    def errors(self) -> np.ndarray:
        return np.array([e.err3d for e in self.epochs if e.converged])

    def cdf(self) -> CdfSeries | None:
        errs = self.errors()
        return cdf(errs) if errs.size else None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    return "" if math.isnan(v) else format(v, ".17g")


def epochs_csv(result: RunResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EPOCH_COLUMNS)
    for e in result.epochs:
        sol = e.solution
        if sol is None:
            w.writerow([_fmt(e.epoch), e.status, "", "", "", "", "", "", "", e.n_sat, e.n_haps, 0, "", "", "", ""])
            continue
        g = sol.geodetic
        w.writerow(
            [
                _fmt(e.epoch), e.status, *(_fmt(v) for v in sol.position),
                _fmt(g.lat_deg), _fmt(g.lon_deg), _fmt(g.height), _fmt(sol.clock_offset),
                sol.n_sat, sol.n_haps, sol.iterations,
                _fmt(e.hdop), _fmt(e.pdop), _fmt(e.vdop), _fmt(e.err3d),
            ]
        )
    return buf.getvalue()


def cdf_csv(results: Sequence[RunResult], labels: Sequence[str] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CDF_COLUMNS)
    for res, label in zip(results, labels or [r.label for r in results]):
        series = res.cdf()
        if series is None:
            continue
        for v, p in zip(series.values, series.probs):
            w.writerow([label, _fmt(v), _fmt(p)])
    return buf.getvalue()


def summarize(result: RunResult) -> dict:
    n = len(result.epochs)
    statuses: dict[str, int] = {}
    for e in result.epochs:
        statuses[e.status] = statuses.get(e.status, 0) + 1
    ok = [e for e in result.epochs if e.converged]
    series = result.cdf()
    return {
        "scenario": result.scenario.name,
        "system": result.scenario.system,
        "mode": result.scenario.mode,
        "seed": result.scenario.seed,
        "n_epochs": n,
        "n_converged": len(ok),
        "convergence_rate": len(ok) / n if n else 0.0,
        "median_err3d_m": series.percentile(0.5) if series else None,
        "p95_err3d_m": series.percentile(0.95) if series else None,
        "mean_hdop": float(np.mean([e.hdop for e in ok])) if ok else None,
        "status_counts": dict(sorted(statuses.items())),
    }


def write_outputs(result: RunResult, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "epochs.csv", "w", encoding="utf-8", newline="") as f:
        f.write(epochs_csv(result))
    with open(out_dir / "cdf.csv", "w", encoding="utf-8", newline="") as f:
        f.write(cdf_csv([result]))
    with open(out_dir / "summary.json", "w", encoding="utf-8", newline="") as f:
        f.write(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------- simulation


@dataclass
class SimulationGeometry:
    """Seed-independent geometry of a simulation scenario, shared across seeds and systems."""

    key: tuple
    offsets: np.ndarray
    truth: np.ndarray  # (n, 3)
    # per epoch: tracked satellite ids, positions at emission, clocks, ranges and delays
    sat_ids: list[list[str]]
    sat_prn_index: list[np.ndarray]
    sat_ptx: list[np.ndarray]
    sat_clock: list[np.ndarray]
    sat_rho: list[np.ndarray]
    sat_delay: list[np.ndarray]
    # per platform id: (n,) ranges, (n, 3) positions at emission, (n,) elevation at truth
    haps: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]


def simulation_geometry(scenario: Scenario) -> SimulationGeometry:
    if scenario.mode != "simulation":
        raise ScenarioError("geometry precomputation applies to simulation scenarios")
    offsets = scenario.epochs
    truth = np.array([scenario.truth_at(t) for t in offsets])
    eph = EphemerisArray(scenario.almanac) if scenario.almanac else None
    geo = SimulationGeometry(_geometry_key(scenario), offsets, truth, [], [], [], [], [], [], {})

    for k, t in enumerate(offsets):
        sow = scenario.start_sow + t
        rx = truth[k]
        if eph is None:
            geo.sat_ids.append([])
            geo.sat_prn_index.append(np.empty(0, dtype=int))
            geo.sat_ptx.append(np.empty((0, 3)))
            for lst in (geo.sat_clock, geo.sat_rho, geo.sat_delay):
                lst.append(np.empty(0))
            continue
        p_tx, transit, rho = emission_geometry(eph.positions, rx, sow)
        g = ecef_to_geodetic(rx)
        el, az = elevation_azimuth_many(ecef_to_local_rotation(g), rx, sagnac_rotate_many(p_tx, transit))
        tracked = np.flatnonzero(el >= TRACKING_ELEVATION)
        clock = eph.clock_offsets(sow - transit, scenario.relativistic_clock)[tracked]
        delay = np.zeros(len(tracked))
        if scenario.inject_atmosphere and len(tracked):
            delay += saastamoinen_delay(g, el[tracked], scenario.atmosphere)
            delay += klobuchar_delay(scenario.iono, g, el[tracked], az[tracked], sow)
        geo.sat_ids.append([f"G{eph.prns[i]:02d}" for i in tracked])
        geo.sat_prn_index.append(tracked)
        geo.sat_ptx.append(p_tx[tracked])
        geo.sat_clock.append(clock)
        geo.sat_rho.append(rho[tracked])
        geo.sat_delay.append(delay)

    for platform in scenario.platforms:
        rhos = np.empty(len(offsets))
        ptxs = np.empty((len(offsets), 3))
        els = np.empty(len(offsets))
        for k, t in enumerate(offsets):
            rho, p_tx = geometric_range(platform, truth[k], t)
            rhos[k], ptxs[k] = rho, p_tx
            rx = truth[k]
            els[k] = elevation_azimuth_many(
                ecef_to_local_rotation(ecef_to_geodetic(rx)), rx, haps_position(platform, t)[None, :]
            )[0][0]
        geo.haps[platform.id] = (rhos, ptxs, els)
    return geo


def _geometry_key(scenario: Scenario) -> tuple:
    return (
        scenario.trajectory_key(),
        tuple(e for e in scenario.almanac),
        scenario.platforms,
        scenario.inject_atmosphere,
        scenario.iono,
        scenario.atmosphere,
        scenario.relativistic_clock,
    )


def _satellite_errors(scenario: Scenario, n: int) -> dict[int, np.ndarray]:
    """One Gauss-Markov series per PRN over the whole epoch grid."""
    out = {}
    for eph in scenario.almanac:
        state = gm_init(scenario.sat_sigma, scenario.sat_tau, stream(scenario.seed, "sat-gm", eph.prn))
        first = state.x
        rest = gm_series(state, scenario.step, n - 1) if n > 1 else np.empty(0)
        out[eph.prn] = np.concatenate([[first], rest])
    return out


def _haps_available(scenario: Scenario, k: int, platform_id: str, elevation: float, env: str) -> bool:
    if elevation < 0.0:
        return False
    if not scenario.los_enabled:
        return True
    return los_gate(scenario.los_tables[env], min(elevation, math.pi / 2), stream(scenario.seed, "los", k, platform_id))


def _finish(scenario: Scenario, k: int, t: float, truth: np.ndarray, meas: list[RangingMeasurement], iono) -> EpochResult:
    n_sat = sum(m.kind == SATELLITE for m in meas)
    n_haps = len(meas) - n_sat
    sow = scenario.start_sow + t
    try:
        sol = solve_epoch(meas, scenario.solver, iono, sow)
    except SolverError as exc:
        return EpochResult(t, exc.status, n_sat, n_haps, truth=truth, message=str(exc))
    local = covariance_to_local(sol.covariance, sol.geodetic)
    return EpochResult(
        t,
        "ok" if sol.converged else "not_converged",
        n_sat,
        n_haps,
        solution=sol,
        truth=truth,
        hdop=hdop(local),
        pdop=pdop(local),
        vdop=vdop(local),
        err3d=error_3d(sol.position, truth),
    )


def _simulate_epoch(scenario: Scenario, geo: SimulationGeometry, gm: dict[int, np.ndarray], k: int) -> EpochResult:
    t = float(geo.offsets[k])
    env = scenario.environment_at(t)
    truth = geo.truth[k]
    meas: list[RangingMeasurement] = []
    if scenario.uses_gps:
        prns = [scenario.almanac[i].prn for i in geo.sat_prn_index[k]]
        for j, prn in enumerate(prns):
            pr = geo.sat_rho[k][j] - C * geo.sat_clock[k][j] + geo.sat_delay[k][j] + gm[prn][k]
            meas.append(RangingMeasurement(SATELLITE, geo.sat_ids[k][j], pr, geo.sat_ptx[k][j], geo.sat_clock[k][j]))
    sigma = scenario.haps_sigma[env]
    for platform in scenario.active_platforms:
        rhos, ptxs, els = geo.haps[platform.id]
        if not _haps_available(scenario, k, platform.id, els[k], env):
            continue
        noise = gaussian_error(sigma, stream(scenario.seed, "haps-noise", k, platform.id))
        meas.append(RangingMeasurement(HAPS, platform.id, rhos[k] + noise, ptxs[k]))
    return _finish(scenario, k, t, truth, meas, scenario.iono)


def _map_ordered(fn, n: int, threads: int) -> list:
    if threads <= 1:
        return [fn(k) for k in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n), chunksize=max(1, n // (4 * threads))))


def run_simulation(scenario: Scenario, threads: int = 1, geometry: SimulationGeometry | None = None) -> RunResult:
    geo = geometry if geometry is not None else simulation_geometry(scenario)
    if geo.key != _geometry_key(scenario):
        raise ValueError("geometry was computed for a different scenario")
    n = len(geo.offsets)
    gm = _satellite_errors(scenario, n) if scenario.uses_gps else {}
    epochs = _map_ordered(lambda k: _simulate_epoch(scenario, geo, gm, k), n, threads)
    result = RunResult(scenario, epochs)
    result.summary = summarize(result)
    return result


# --------------------------------------------------------------------------- experiment


def read_truth_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth ``epoch_s, x_m, y_m, z_m`` rows (epoch offsets from the scenario start)."""
    try:
        with open(path, newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
    except OSError as exc:
        raise DataError(f"cannot read ground truth {path}: {exc.strerror}") from None
    try:
        data = np.array([[float(r["epoch_s"]), float(r["x_m"]), float(r["y_m"]), float(r["z_m"])] for r in rows])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed ground-truth row ({exc})") from None
    if data.size == 0:
        raise DataError(f"{path}: no ground-truth rows")
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    if np.any(np.diff(data[:, 0]) <= 0):
        raise DataError(f"{path}: duplicate ground-truth epochs")
    return data[:, 0], data[:, 1:]


def _interp_truth(times: np.ndarray, xyz: np.ndarray, t: float) -> np.ndarray | None:
    if t < times[0] - 1e-6 or t > times[-1] + 1e-6:
        return None
    return np.array([np.interp(t, times, xyz[:, i]) for i in range(3)])


def _experiment_satellites(nav, obs_epoch, t_rx: float, week: int, relativistic: bool = True) -> list[RangingMeasurement]:
    meas = []
    for prn, pr in obs_epoch.entries:
        try:
            eph = select_ephemeris(nav.ephemerides, prn, t_rx, week)
            t_tx = t_rx - pr / C
            for _ in range(2):
                dt_sat = satellite_clock_offset(eph, t_tx, relativistic)
                t_tx = t_rx - pr / C - dt_sat
            pos = satellite_position(eph, t_tx)
            dt_sat = satellite_clock_offset(eph, t_tx, relativistic)
        except EphemerisError as exc:
            log.debug("epoch %.1f PRN %d skipped: %s", t_rx, prn, exc)
            continue
        meas.append(RangingMeasurement(SATELLITE, f"G{prn:02d}", pr, pos, dt_sat))
    return meas


def _corrected_at_truth(scenario: Scenario, meas: list[RangingMeasurement], truth: np.ndarray, iono, sow: float):
    """Satellite measurements corrected with the atmosphere seen from the true position."""
    g = ecef_to_geodetic(truth)
    rot = ecef_to_local_rotation(g)
    out = []
    for m in meas:
        el, az = elevation_azimuth_many(rot, truth, m.position[None, :])
        el, az = float(el[0]), float(az[0])
        if el < scenario.solver.mask_rad:
            continue
        pc = m.pseudorange + C * m.clock_offset
        if scenario.solver.tropo:
            pc -= saastamoinen_delay(g, el, scenario.atmosphere)
        if scenario.solver.iono and iono is not None:
            pc -= klobuchar_delay(iono, g, el, az, sow)
        out.append(RangingMeasurement(SATELLITE, m.source_id, pc, m.position))
    return out


def run_experiment(scenario: Scenario, threads: int = 1) -> RunResult:
    exp = scenario.experiment
    if exp is None:
        raise ScenarioError("experiment mode needs an [experiment] table")
    try:
        nav = parse_navigation(exp.navigation)
        obs = parse_observation(exp.observation)
    except OSError as exc:
        raise DataError(f"cannot read RINEX input: {exc}") from None
    except RinexError as exc:
        raise DataError(str(exc)) from None
    times, xyz = read_truth_csv(exp.truth)
    iono = nav.iono if nav.iono is not None else scenario.iono
    if scenario.solver.iono and iono is None:
        raise DataError("no Klobuchar coefficients in the navigation header or the scenario")

    start = scenario.start_week * 604800.0 + scenario.start_sow
    selected = []
    for ep in obs.epochs:
        t = ep.total_seconds - start
        if -1e-6 <= t <= scenario.duration + 1e-6:
            selected.append((round(t, 6), ep))
    if not selected:
        raise DataError("no observation epochs inside the scenario time span")
    for t, _ in selected:
        scenario.environment_at(t)  # raises when the timeline does not cover the data

    def one(k: int) -> EpochResult:
        t, ep = selected[k]
        truth = _interp_truth(times, xyz, t)
        if truth is None:
            raise DataError(f"no ground truth at epoch {t} s")
        t_rx = ep.sow
        sats = _experiment_satellites(nav, ep, t_rx, ep.week, scenario.relativistic_clock)
        corrected = _corrected_at_truth(scenario, sats, truth, iono, t_rx)
        dt_rx = estimate_receiver_clock(truth, corrected) if corrected else 0.0
        env = scenario.environment_at(t)
        meas = list(sats) if scenario.uses_gps else []
        for platform in scenario.active_platforms:
            rho, p_tx = geometric_range(platform, truth, t)
            rot = ecef_to_local_rotation(ecef_to_geodetic(truth))
            el = float(elevation_azimuth_many(rot, truth, p_tx[None, :])[0][0])
            if not _haps_available(scenario, k, platform.id, el, env):
                continue
            noise = gaussian_error(scenario.haps_sigma[env], stream(scenario.seed, "haps-noise", k, platform.id))
            meas.append(RangingMeasurement(HAPS, platform.id, rho + C * dt_rx + noise, p_tx))
        return _finish(scenario, k, t, truth, meas, iono)

    epochs = _map_ordered(one, len(selected), threads)
    result = RunResult(scenario, epochs)
    result.summary = summarize(result)
    return result


# --------------------------------------------------------------------------- entry points


def run_scenario(scenario: Scenario, threads: int = 1, geometry: SimulationGeometry | None = None) -> RunResult:
    if HAPS_DEMAND[scenario.system] > len(scenario.platforms):
        raise ScenarioError(f"system {scenario.system} needs more HAPS platforms than defined")
    if scenario.mode == "simulation":
        return run_simulation(scenario, threads, geometry)
    return run_experiment(scenario, threads)


PERCENTILES = (0.5, 0.68, 0.95)


def compare_systems(scenarios: Sequence[Scenario], threads: int = 1) -> tuple[list[RunResult], list[dict]]:
    """Run scenarios that share trajectory, seed and satellite errors; tabulate CDF percentiles."""
    if not scenarios:
        raise ScenarioError("nothing to compare")
    ref = scenarios[0]
    for sc in scenarios[1:]:
        if sc.mode != ref.mode or sc.trajectory_key() != ref.trajectory_key() or sc.experiment != ref.experiment:
            raise ScenarioError(f"{sc.name}: trajectory differs from {ref.name}")
        if sc.seed != ref.seed:
            raise ScenarioError(f"{sc.name}: seed {sc.seed} differs from {ref.seed}")
        if (sc.sat_sigma, sc.sat_tau, sc.almanac) != (ref.sat_sigma, ref.sat_tau, ref.almanac):
            raise ScenarioError(f"{sc.name}: satellite error configuration differs from {ref.name}")

    cache: dict[tuple, SimulationGeometry] = {}
    results = []
    for sc in scenarios:
        geo = None
        if sc.mode == "simulation":
            key = _geometry_key(sc)
            geo = cache.get(key)
            if geo is None:
                geo = cache[key] = simulation_geometry(sc)
        results.append(run_scenario(sc, threads, geo))

    labels = comparison_labels(results)
    table = []
    for res, label in zip(results, labels):
        series = res.cdf()
        row = {"system": label, "scenario": res.scenario.name, "convergence_rate": res.summary["convergence_rate"]}
        for q in PERCENTILES:
            row[f"p{round(q * 100)}_m"] = series.percentile(q) if series else None
        row["mean_hdop"] = res.summary["mean_hdop"]
        table.append(row)
    return results, table


def comparison_labels(results: Sequence[RunResult]) -> list[str]:
    systems = [r.scenario.system for r in results]
    if len(set(systems)) == len(systems):
        return systems
    return [f"{r.scenario.name}:{r.scenario.system}" for r in results]


def comparison_csv(table: Sequence[dict]) -> str:
    buf = io.StringIO()
    cols = ["system", "scenario", "convergence_rate", *(f"p{round(q * 100)}_m" for q in PERCENTILES), "mean_hdop"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in table:
        w.writerow([row[c] if isinstance(row[c], str) else _fmt(row[c]) for c in cols])
    return buf.getvalue()
