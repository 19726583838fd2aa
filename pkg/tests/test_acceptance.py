"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary,
so ``pytest tests/test_acceptance.py`` shows the verdicts even when output is
captured.
"""

from __future__ import annotations

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import test_rinex
from helpers import STEADY_PRNS, build, experiment_case, noiseless_doc
from hapsgnss.atmosphere import klobuchar_delay, saastamoinen_delay
from hapsgnss.geodesy import (
    C,
    GeodeticCoord,
    ecef_to_geodetic,
    ecef_to_local_rotation,
    geodetic_to_ecef,
    sagnac_rotate,
)
from hapsgnss.error_models import gm_init, gm_series, sample_autocovariance
from hapsgnss.metrics import covariance_to_local, hdop_from_design
from hapsgnss.rinex import IonoParameters, parse_navigation, parse_observation
from hapsgnss.runner import epochs_csv, run_scenario, simulation_geometry, write_outputs
from hapsgnss.scenario import SYSTEMS, load_scenario
from hapsgnss.spp import HAPS

SEEDS = range(20)
SHIPPED = ("ottawa_suburban", "ottawa_dense_urban", "ottawa_drive")

REPORT: list[str] = []


def report(n: int, ok: bool, detail: str, elapsed: float) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f} s]"
    REPORT.append(line)
    print(line)


def median_error(result) -> float:
    m = result.summary["median_err3d_m"]
    return math.inf if m is None else m


def seeded_medians(name: str, systems, seed: int, geometry) -> dict[str, float]:
    base = replace(load_scenario(name), seed=seed)
    return {s: median_error(run_scenario(base.for_system(s), geometry=geometry)) for s in systems}


# --------------------------------------------------------------------------- 1


def test_c1_noiseless_oracle():
    t0 = time.perf_counter()
    result = run_scenario(build(noiseless_doc(STEADY_PRNS, 599.0)))
    elapsed = time.perf_counter() - t0
    sols = [e.solution for e in result.epochs]
    ok_status = all(e.status == "ok" for e in result.epochs) and all(s is not None for s in sols)
    max_err = max(e.err3d for e in result.epochs)
    max_clock = max(abs(s.clock_offset) for s in sols)
    max_iter = max(s.iterations for s in sols)
    n_sat = {s.n_sat for s in sols}
    ok = (
        ok_status
        and len(result.epochs) == 600
        and max_err < 0.02
        and max_clock < 1e-9
        and max_iter <= 10
        and n_sat == {8}
        and elapsed < 5.0
    )
    report(1, ok, f"max 3D error {max_err:.2e} m, max clock {max_clock:.1e} s, max iterations {max_iter}", elapsed)
    assert ok


# --------------------------------------------------------------------------- 2


def test_c2_gauss_markov_fidelity():
    t0 = time.perf_counter()
    x = gm_series(gm_init(6.0, 10.0, 2024), 1.0, 1_000_000)
    std = float(np.std(x))
    lag10 = sample_autocovariance(x, 10)
    elapsed = time.perf_counter() - t0
    target = 36.0 * math.exp(-1.0)
    ok = abs(std - 6.0) <= 0.05 * 6.0 and abs(lag10 - target) <= 0.10 * target and elapsed < 10.0
    report(2, ok, f"std {std:.4f} m, lag-10 s autocovariance {lag10:.3f} vs {target:.3f} m^2", elapsed)
    assert ok


# --------------------------------------------------------------------------- 3, 4


def test_c3_suburban_ordering():
    t0 = time.perf_counter()
    geo = simulation_geometry(load_scenario("ottawa_suburban"))
    better, not_worse = 0, 0
    for seed in SEEDS:
        m = seeded_medians("ottawa_suburban", ("gps_only", "four_haps_gps", "four_haps_only"), seed, geo)
        better += m["four_haps_gps"] < m["gps_only"]
        not_worse += m["four_haps_gps"] <= m["four_haps_only"]
    elapsed = time.perf_counter() - t0
    ok = better >= 18 and not_worse >= 16 and elapsed < 120.0
    report(
        3,
        ok,
        f"four_haps_gps < gps_only in {better}/20, four_haps_gps <= four_haps_only in {not_worse}/20",
        elapsed,
    )
    assert ok


def test_c4_dense_urban_ordering():
    t0 = time.perf_counter()
    geo = simulation_geometry(load_scenario("ottawa_dense_urban"))
    worst = 0
    for seed in SEEDS:
        m = seeded_medians("ottawa_dense_urban", SYSTEMS, seed, geo)
        worst += all(m["four_haps_only"] > m[s] for s in SYSTEMS if s != "four_haps_only")
    elapsed = time.perf_counter() - t0
    ok = worst >= 16
    report(4, ok, f"four_haps_only worst in {worst}/20", elapsed)
    assert ok


# --------------------------------------------------------------------------- 5


def hdop_or_inf(h: np.ndarray, site: GeodeticCoord) -> float:
    if h.shape[0] < 4 or np.linalg.matrix_rank(h) < 4:
        return math.inf
    return hdop_from_design(h, site)


def test_c5_hdop_monotone_with_haps_rows():
    t0 = time.perf_counter()
    checked, violations, worst = 0, 0, -math.inf
    for name in SHIPPED:
        sc = load_scenario(name)
        for system in ("one_haps_gps", "four_haps_gps"):
            for e in run_scenario(sc.for_system(system)).epochs:
                if e.status != "ok":
                    continue
                sol = e.solution
                keep = np.array([k != HAPS for k in sol.kinds])
                if keep.all():
                    continue
                site = sol.geodetic
                with_haps = hdop_from_design(sol.design_matrix, site)
                without = hdop_or_inf(sol.design_matrix[keep], site)
                checked += 1
                worst = max(worst, with_haps - without)
                violations += with_haps > without + 1e-9
    elapsed = time.perf_counter() - t0
    ok = checked > 0 and violations == 0
    report(5, ok, f"{checked} converged epochs with HAPS rows, {violations} violations, max excess {worst:.1e}", elapsed)
    assert ok


# --------------------------------------------------------------------------- 6


def test_c6_gps_only_invariant_across_environments(tmp_path):
    t0 = time.perf_counter()
    outs = []
    for name in ("ottawa_suburban", "ottawa_dense_urban"):
        sc = replace(load_scenario(name), seed=11).for_system("gps_only")
        write_outputs(run_scenario(sc), tmp_path / name)
        outs.append((tmp_path / name / "epochs.csv").read_bytes())
    elapsed = time.perf_counter() - t0
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    report(6, ok, "GPS-only epochs.csv identical between suburban and dense urban", elapsed)
    assert ok


# --------------------------------------------------------------------------- 7

CASES = 10_000
lats = st.floats(-math.pi / 2, math.pi / 2)
lons = st.floats(-math.pi, math.pi, exclude_min=True)


@settings(max_examples=CASES, deadline=None, database=None)
@given(lats, lons)
def prop_local_rotation_orthonormal(lat, lon):
    r = ecef_to_local_rotation(GeodeticCoord(lat, lon, 0.0))
    np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=CASES, deadline=None, database=None)
@given(st.integers(0, 2**32 - 1), lats, lons)
def prop_covariance_trace_preserved(seed, lat, lon):
    a = np.random.default_rng(seed).normal(size=(4, 4))
    q = a @ a.T
    out = covariance_to_local(q, GeodeticCoord(lat, lon, 0.0))
    assert np.trace(out) == pytest.approx(np.trace(q[:3, :3]), rel=1e-12, abs=1e-12)


@settings(max_examples=CASES, deadline=None, database=None)
@given(st.lists(st.floats(-3e7, 3e7), min_size=3, max_size=3), st.floats(0.0, 0.45))
def prop_sagnac_preserves_norm(p, transit):
    p = np.array(p)
    assert np.linalg.norm(sagnac_rotate(p, transit)) == pytest.approx(np.linalg.norm(p), rel=1e-12, abs=1e-9)


@settings(max_examples=CASES, deadline=None, database=None)
@given(lats, lons, st.floats(-5000.0, 2.0e7))
def prop_geodetic_round_trip(lat, lon, h):
    p = geodetic_to_ecef(GeodeticCoord(lat, lon, h))
    assert np.linalg.norm(geodetic_to_ecef(ecef_to_geodetic(p)) - p) < 1e-6


def test_c7_property_suites():
    props = (
        prop_local_rotation_orthonormal,
        prop_covariance_trace_preserved,
        prop_sagnac_preserves_norm,
        prop_geodetic_round_trip,
    )
    t0 = time.perf_counter()
    errors = []
    for prop in props:
        try:
            prop()
        except Exception as exc:  # hypothesis re-raises the falsifying example
            errors.append(f"{prop.__name__}: {type(exc).__name__}: {exc}")
    elapsed = time.perf_counter() - t0
    ok = not errors
    report(7, ok, f"{len(props)} properties x {CASES} cases" + (f", failing: {errors}" if errors else ""), elapsed)
    assert ok


# --------------------------------------------------------------------------- 8


def test_c8_parser_golden_and_fuzz():
    t0 = time.perf_counter()
    test_rinex.test_nav_v2_fields()
    test_rinex.test_nav_v3_mixed_skips_other_systems()
    for name in ("obs_v2.22o", "obs_v3.rnx"):
        test_rinex.test_obs_golden(name)
    targets = [
        (parse_navigation, "nav_v2.22n"),
        (parse_navigation, "nav_v3.rnx"),
        (parse_observation, "obs_v2.22o"),
        (parse_observation, "obs_v3.rnx"),
    ]
    total, crashes = 0, []
    for k, (parser, name) in enumerate(targets):
        ok_n, rejected, bad = test_rinex.fuzz(parser, test_rinex.FIXTURES / name, 25_000, seed=100 + k)
        total += ok_n + rejected + len(bad)
        crashes += bad
    elapsed = time.perf_counter() - t0
    ok = total == 100_000 and not crashes
    report(8, ok, f"golden fields match, {total} mutated inputs, {len(crashes)} crashes", elapsed)
    assert ok, crashes[:5]


# --------------------------------------------------------------------------- 9

IONO = IonoParameters((1.1176e-08, 7.4506e-09, -5.9605e-08, -5.9605e-08), (90112.0, 0.0, -196608.0, -65536.0))


def test_c9_atmospheric_sanity():
    t0 = time.perf_counter()
    sea = GeodeticCoord.from_degrees(45.0, 0.0, 0.0)
    zenith_tropo = float(saastamoinen_delay(sea, math.pi / 2))
    # 02:00 local time sits on the night floor
    night = 7200.0
    floor = float(klobuchar_delay(IONO, sea, math.pi / 2, 0.0, night))
    sweep = np.radians(np.linspace(5.0, 90.0, 500))
    tropo_ok = bool(np.all(np.diff(saastamoinen_delay(sea, sweep)) <= 0.0))
    iono_ok = all(
        np.all(np.diff(klobuchar_delay(IONO, sea, sweep, math.radians(az), night)) <= 0.0) for az in range(0, 360, 15)
    )
    elapsed = time.perf_counter() - t0
    ok = 2.2 <= zenith_tropo <= 2.5 and abs(floor - C * 5e-9) <= 1e-3 and tropo_ok and iono_ok
    report(
        9,
        ok,
        f"zenith tropo {zenith_tropo:.3f} m, night floor {floor:.4f} m, monotone tropo {tropo_ok} iono {iono_ok}",
        elapsed,
    )
    assert ok


# --------------------------------------------------------------------------- 10


def test_c10_determinism_across_threads(tmp_path):
    t0 = time.perf_counter()
    doc, _ = experiment_case(tmp_path, n=30, haps_sigma=3.0)
    cases = [load_scenario(name) for name in SHIPPED] + [build(doc, tmp_path)]
    mismatched = []
    for k, sc in enumerate(cases):
        blobs = []
        for threads in (1, 4, 1):
            out = tmp_path / f"{k}_{threads}_{len(blobs)}"
            write_outputs(run_scenario(sc, threads=threads), out)
            blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        if not blobs[0] == blobs[1] == blobs[2]:
            mismatched.append(sc.name)
    elapsed = time.perf_counter() - t0
    ok = not mismatched
    report(10, ok, f"{len(cases)} scenarios byte-identical with 1 and 4 threads" if ok else f"mismatch: {mismatched}", elapsed)
    assert ok


def test_gps_only_csv_is_not_trivially_empty():
    # guards criterion 6 against passing on two empty runs
    text = epochs_csv(run_scenario(load_scenario("ottawa_suburban").for_system("gps_only")))
    assert text.count("\n") == 601 and ",ok," in text


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
