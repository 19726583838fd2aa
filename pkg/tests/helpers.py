"""Scenario documents and synthetic RINEX files for end-to-end tests."""

from __future__ import annotations

import copy
from datetime import timedelta
from importlib import resources
from pathlib import Path

import numpy as np
import tomli

from hapsgnss.atmosphere import klobuchar_delay, saastamoinen_delay
from hapsgnss.ephemeris import satellite_clock_offset, satellite_position
from hapsgnss.geodesy import C, ecef_to_geodetic, elevation_azimuth, sagnac_rotate
from hapsgnss.rinex import GPS_EPOCH, BroadcastEphemeris, IonoParameters, parse_navigation
from hapsgnss.scenario import scenario_from_dict

# above 15 degrees for the whole shipped drive
STEADY_PRNS = (8, 12, 13, 17, 21, 22, 26, 30)


def shipped_doc(name: str = "ottawa_suburban") -> dict:
    text = (resources.files("hapsgnss.scenarios") / f"{name}.toml").read_text(encoding="utf-8")
    return tomli.loads(text)


def build(doc: dict, base_dir: Path | None = None):
    return scenario_from_dict(copy.deepcopy(doc), base_dir)


def noiseless_doc(prns=STEADY_PRNS, duration: float = 599.0) -> dict:
    doc = shipped_doc("ottawa_suburban")
    doc["system"] = "gps_only"
    doc["time"]["duration_s"] = duration
    doc["timeline"] = [{"start_s": 0.0, "end_s": duration, "environment": "suburban"}]
    doc["constellation"]["satellites"] = [s for s in doc["constellation"]["satellites"] if s["prn"] in prns]
    doc["satellite_error"]["sigma_m"] = 0.0
    doc["haps_error"] = {"suburban_sigma_m": 0.0, "dense_urban_sigma_m": 0.0}
    doc["atmosphere"]["inject"] = False
    doc["solver"]["iono"] = False
    doc["solver"]["tropo"] = False
    return doc


# --------------------------------------------------------------------------- RINEX writer


def _d(v: float) -> str:
    return f"{v: .12E}".replace("E", "D")


def _label(text: str, label: str) -> str:
    return f"{text:<60}{label}"


def _when(week: int, sow: float):
    return GPS_EPOCH + timedelta(weeks=week, seconds=sow)


def write_nav(path: Path, ephemerides, iono: IonoParameters | None) -> None:
    lines = [_label("     3.04           N: GNSS NAV DATA    G: GPS", "RINEX VERSION / TYPE")]
    if iono is not None:
        lines.append(_label("GPSA " + "".join(f"{v:12.4E}".replace("E", "D") for v in iono.alpha), "IONOSPHERIC CORR"))
        lines.append(_label("GPSB " + "".join(f"{v:12.4E}".replace("E", "D") for v in iono.beta), "IONOSPHERIC CORR"))
    lines.append(_label("", "END OF HEADER"))
    for e in ephemerides:
        toc = _when(e.toc_week, e.toc)
        lines.append(f"G{e.prn:02d} {toc:%Y %m %d %H %M %S}" + _d(e.af0) + _d(e.af1) + _d(e.af2))
        orbit = [
            e.iode, e.crs, e.delta_n, e.m0, e.cuc, e.e, e.cus, e.sqrt_a, e.toe, e.cic, e.omega0, e.cis,
            e.i0, e.crc, e.omega, e.omega_dot, e.idot, 1.0, float(e.week), 0.0, 2.0, e.health, e.tgd, e.iode,
            e.toe - 3600.0, 4.0,
        ]
        for k in range(0, len(orbit), 4):
            lines.append("    " + "".join(_d(v) for v in orbit[k : k + 4]))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def synth_observations(ephemerides, truth, week, sow0, n, dt_rx, iono=None, atmosphere=None):
    """Pseudoranges a static receiver with clock offset ``dt_rx`` would log.

    Returns ``[(tag_sow, {prn: pr})]``. The receiver time tag runs ahead of
    GPS time by ``dt_rx``, so the logged range carries ``+ c dt_rx``.
    """
    g = ecef_to_geodetic(truth)
    epochs = []
    for k in range(n):
        t_true = sow0 + k
        prs = {}
        for eph in ephemerides:
            tau = 0.07
            for _ in range(5):
                p = sagnac_rotate(satellite_position(eph, t_true - tau), tau)
                tau = float(np.linalg.norm(p - truth)) / C
            el, az = elevation_azimuth(truth, p)
            if el < np.radians(5.0):
                continue
            pr = C * tau + C * dt_rx - C * satellite_clock_offset(eph, t_true - tau)
            if atmosphere is not None:
                pr += saastamoinen_delay(g, el, atmosphere) + klobuchar_delay(iono, g, el, az, t_true + dt_rx)
            prs[eph.prn] = pr
        epochs.append((t_true + dt_rx, prs))
    return epochs


def write_obs(path: Path, week: int, epochs, approx=None) -> None:
    lines = [_label("     3.04           OBSERVATION DATA    G: GPS", "RINEX VERSION / TYPE")]
    if approx is not None:
        lines.append(_label("".join(f"{v:14.4f}" for v in approx), "APPROX POSITION XYZ"))
    lines.append(_label("G    2 C1C S1C", "SYS / # / OBS TYPES"))
    lines.append(_label("", "END OF HEADER"))
    for sow, prs in epochs:
        when = _when(week, sow)
        sec = when.second + when.microsecond * 1e-6
        lines.append(f"> {when:%Y %m %d %H %M}{sec:11.7f}  0{len(prs):3d}")
        for prn, pr in sorted(prs.items()):
            lines.append(f"G{prn:02d}{pr:14.3f}  {45.0:14.3f}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def write_truth(path: Path, rows) -> None:
    out = ["epoch_s,x_m,y_m,z_m"] + [",".join(repr(float(v)) for v in (t, *xyz)) for t, xyz in rows]
    path.write_text("\n".join(out) + "\n", encoding="utf-8")


def experiment_case(tmp: Path, *, n=30, dt_rx=1e-4, system="four_haps_gps", atmosphere=True, haps_sigma=0.0):
    """Synthetic experiment data set on disk plus the scenario document that reads it."""
    sim = build(shipped_doc("ottawa_suburban"))
    week, sow0 = sim.start_week, sim.start_sow
    ephs = [BroadcastEphemeris(**{**e.__dict__, "iode": 7.0}) for e in sim.almanac]
    nav_path = tmp / "nav.rnx"
    write_nav(nav_path, ephs, sim.iono)
    # synthesize from what the parser returns so both sides share rounding
    parsed = parse_navigation(nav_path).ephemerides
    truth = sim.truth_at(599.0)
    epochs = synth_observations(parsed, truth, week, sow0, n, dt_rx, sim.iono, sim.atmosphere if atmosphere else None)
    write_obs(tmp / "obs.rnx", week, epochs, approx=truth + 100.0)
    write_truth(tmp / "truth.csv", [(0.0, truth), (float(n), truth)])

    doc = shipped_doc("ottawa_suburban")
    for key in ("trajectory", "constellation"):
        doc.pop(key)
    doc["mode"] = "experiment"
    doc["system"] = system
    doc["time"]["duration_s"] = float(n - 1) + 0.5
    doc["timeline"] = [{"start_s": 0.0, "end_s": float(n - 1) + 0.5, "environment": "dense_urban"}]
    doc["haps_error"] = {"suburban_sigma_m": haps_sigma, "dense_urban_sigma_m": haps_sigma}
    doc["solver"]["iono"] = atmosphere
    doc["solver"]["tropo"] = atmosphere
    doc["experiment"] = {"observation": "obs.rnx", "navigation": "nav.rnx", "truth": "truth.csv"}
    return doc, truth
