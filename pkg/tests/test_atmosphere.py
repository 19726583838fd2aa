import math

import numpy as np
import pytest

import oracles
from hapsgnss.atmosphere import (
    AtmosphereError,
    AtmosphericDelays,
    StandardAtmosphere,
    klobuchar_delay,
    meteo_at_height,
    saastamoinen_delay,
)
from hapsgnss.geodesy import C, GeodeticCoord
from hapsgnss.rinex import IonoParameters

IONO = IonoParameters(
    (1.1176e-08, 7.4506e-09, -5.9605e-08, -5.9605e-08),
    (90112.0, 0.0, -196608.0, -65536.0),
)
OTTAWA = GeodeticCoord.from_degrees(45.4215, -75.6972, 70.0)
SEA = GeodeticCoord.from_degrees(45.0, 0.0, 0.0)


def test_night_floor_at_zenith():
    # 02:00 local time at lon 0 is deep in the night window
    d = klobuchar_delay(IONO, SEA, math.pi / 2, 0.0, 7200.0)
    assert d == pytest.approx(C * 5e-9, abs=1e-3)
    assert d == pytest.approx(1.499, abs=1e-3)


@pytest.mark.parametrize(
    "lat, lon, el, az, sow",
    [
        (40.0, -100.0, 20.0, 210.0, 593100.0),
        (45.4215, -75.6972, 35.0, 45.0, 345600.0 + 18 * 3600),
        (-33.9, 18.4, 60.0, 300.0, 50400.0),
        (70.0, 25.0, 10.0, 0.0, 12345.0),
        (0.0, 120.0, 89.0, 90.0, 3 * 86400.0 + 3600.0),
    ],
)
def test_klobuchar_matches_stepwise_oracle(lat, lon, el, az, sow):
    r = [math.radians(v) for v in (lat, lon, el, az)]
    ref = float(oracles.klobuchar(IONO.alpha, IONO.beta, *r, sow))
    got = klobuchar_delay(IONO, GeodeticCoord(r[0], r[1], 0.0), r[2], r[3], sow)
    assert abs(got - ref) < 0.01
    assert abs(got - ref) < 1e-9  # agreement is in fact at round-off level


def test_klobuchar_vectorised():
    el = np.radians([15.0, 30.0, 60.0])
    az = np.radians([0.0, 120.0, 240.0])
    vec = klobuchar_delay(IONO, OTTAWA, el, az, 50000.0)
    for k in range(3):
        assert vec[k] == pytest.approx(klobuchar_delay(IONO, OTTAWA, el[k], az[k], 50000.0), abs=1e-12)


def test_klobuchar_domain():
    for bad in (0.0, -0.1, math.pi / 2 + 0.01):
        with pytest.raises(AtmosphereError):
            klobuchar_delay(IONO, OTTAWA, bad, 0.0, 0.0)


def test_saastamoinen_zenith_sea_level():
    d = saastamoinen_delay(SEA, math.pi / 2)
    assert 2.2 <= d <= 2.5
    assert round(d, 1) == 2.4
    assert d == pytest.approx(float(oracles.saastamoinen(SEA.lat, 0.0, math.pi / 2)), abs=1e-9)


@pytest.mark.parametrize("h, el", [(70.0, 15.0), (1200.0, 40.0), (5000.0, 7.0)])
def test_saastamoinen_matches_oracle(h, el):
    g = GeodeticCoord(OTTAWA.lat, OTTAWA.lon, h)
    ref = float(oracles.saastamoinen(g.lat, h, math.radians(el)))
    assert saastamoinen_delay(g, math.radians(el)) == pytest.approx(ref, abs=1e-9)


def test_saastamoinen_height_and_floor():
    high = GeodeticCoord(SEA.lat, SEA.lon, 5000.0)
    assert saastamoinen_delay(high, math.pi / 2) < saastamoinen_delay(SEA, math.pi / 2)
    with pytest.raises(AtmosphereError, match="below model validity"):
        saastamoinen_delay(SEA, math.radians(4.9))


def test_custom_atmosphere_changes_delay():
    dry = StandardAtmosphere(humidity=0.0)
    assert saastamoinen_delay(SEA, 1.0, dry) < saastamoinen_delay(SEA, 1.0)
    with pytest.raises(ValueError):
        StandardAtmosphere(humidity=1.5)


def test_meteo_clipped_above_tropopause():
    assert meteo_at_height(30_000.0) == meteo_at_height(11_000.0)
    p, t, e = meteo_at_height(0.0)
    assert (p, t) == (1013.25, 291.15) and e > 0


def test_delays_monotone_and_positive():
    sweep = np.radians(np.linspace(5.0, 90.0, 500))
    tropo = saastamoinen_delay(OTTAWA, sweep)
    iono_night = klobuchar_delay(IONO, OTTAWA, sweep, 0.3, 345600.0 + 8 * 3600)
    for d in (tropo, iono_night):
        assert np.all(d > 0) and np.all(np.isfinite(d))
        assert np.all(np.diff(d) <= 1e-12)
    assert klobuchar_delay(IONO, OTTAWA, math.radians(15), 0.0, 0.0) >= klobuchar_delay(IONO, OTTAWA, math.pi / 2, 0.0, 0.0)


@pytest.mark.parametrize("az_deg", [90.0, 180.0, 270.0])
def test_daytime_iono_monotone_off_north(az_deg):
    sweep = np.radians(np.linspace(5.0, 90.0, 500))
    d = klobuchar_delay(IONO, OTTAWA, sweep, math.radians(az_deg), 345600.0 + 19 * 3600)
    assert np.all(np.diff(d) <= 1e-12)


def test_daytime_iono_north_follows_pierce_point():
    # looking north in the afternoon the pierce point slides poleward as elevation
    # drops, so the delay is not monotone there; it still tracks the oracle exactly
    sweep = np.radians(np.linspace(5.0, 90.0, 60))
    sow = 345600.0 + 19 * 3600
    d = klobuchar_delay(IONO, OTTAWA, sweep, 0.0, sow)
    assert np.any(np.diff(d) > 0)
    ref = [float(oracles.klobuchar(IONO.alpha, IONO.beta, OTTAWA.lat, OTTAWA.lon, e, 0.0, sow)) for e in sweep]
    np.testing.assert_allclose(d, ref, rtol=0, atol=1e-9)
    assert d[0] > d[-1]


def test_delay_record_bounds():
    AtmosphericDelays(3.0, 2.4)
    with pytest.raises(ValueError):
        AtmosphericDelays(-0.1, 2.0)
    with pytest.raises(ValueError):
        AtmosphericDelays(1.0, 250.0)
