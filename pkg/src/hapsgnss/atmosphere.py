"""Klobuchar ionosphere and Saastamoinen troposphere delays for GPS L1.

Both functions accept scalars or numpy arrays for the look angles so the
solver can evaluate every source of an iteration in one call.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geodesy import C, GeodeticCoord
from .rinex import IonoParameters

MIN_TROPO_ELEVATION = math.radians(5.0)
NIGHT_DELAY_S = 5e-9
MIN_METEO_HEIGHT = -1000.0
MAX_METEO_HEIGHT = 11000.0


class AtmosphereError(ValueError):
    pass


@dataclass(frozen=True)
class AtmosphericDelays:
    d_ion: float
    d_trop: float

    def __post_init__(self) -> None:
        for name in ("d_ion", "d_trop"):
            v = getattr(self, name)
            if not 0.0 <= v <= 200.0:
                raise ValueError(f"{name}={v} m outside [0, 200]")


@dataclass(frozen=True)
class StandardAtmosphere:
    """Sea-level meteorology; values at height follow the standard lapse."""

    pressure_hpa: float = 1013.25
    temperature_k: float = 291.15
    humidity: float = 0.5

    def __post_init__(self) -> None:
        if self.pressure_hpa <= 0 or self.temperature_k <= 0 or not 0.0 <= self.humidity <= 1.0:
            raise ValueError(f"invalid atmosphere {self}")


DEFAULT_ATMOSPHERE = StandardAtmosphere()


def klobuchar_delay(iono: IonoParameters, user: GeodeticCoord, elevation, azimuth, gps_sow):
    """L1 ionospheric delay [m] from the broadcast Klobuchar model.

    Angles in radians; ``gps_sow`` is GPS seconds of week. Internally works in
    semicircles exactly as the GPS ICD prescribes.
    """
    el = np.asarray(elevation, dtype=float)
    if not (el.min(initial=math.inf) > 0.0 and el.max(initial=0.0) <= math.pi / 2 + 1e-12):
        raise AtmosphereError("Klobuchar model needs elevation in (0, pi/2]")
    el_sc = el / math.pi
    az = np.asarray(azimuth, dtype=float)
    lat_u = user.lat / math.pi
    lon_u = user.lon / math.pi

    psi = 0.0137 / (el_sc + 0.11) - 0.022
    lat_i = np.minimum(np.maximum(lat_u + psi * np.cos(az), -0.416), 0.416)
    lon_i = lon_u + psi * np.sin(az) / np.cos(lat_i * math.pi)
    lat_m = lat_i + 0.064 * np.cos((lon_i - 1.617) * math.pi)

    local_t = np.mod(4.32e4 * lon_i + gps_sow, 86400.0)
    obliquity = 1.0 + 16.0 * (0.53 - el_sc) ** 3

    a, b = iono.alpha, iono.beta
    amp = np.maximum(a[0] + lat_m * (a[1] + lat_m * (a[2] + lat_m * a[3])), 0.0)
    per = np.maximum(b[0] + lat_m * (b[1] + lat_m * (b[2] + lat_m * b[3])), 72000.0)
    x = 2.0 * math.pi * (local_t - 50400.0) / per

    day = NIGHT_DELAY_S + amp * (1.0 - x * x / 2.0 + x**4 / 24.0)
    delay_s = obliquity * np.where(np.abs(x) < 1.57, day, NIGHT_DELAY_S)
    out = C * delay_s
    return float(out) if out.ndim == 0 else out


def meteo_at_height(height: float, atm: StandardAtmosphere = DEFAULT_ATMOSPHERE) -> tuple[float, float, float]:
    """Pressure [hPa], temperature [K] and water vapour pressure [hPa] at ``height``.

    Height is clipped to [-1 km, 11 km]: above the tropopause the linear lapse
    drives the humidity formula through its pole near 38 K.
    """
    h = min(max(height, MIN_METEO_HEIGHT), MAX_METEO_HEIGHT)
    pressure = atm.pressure_hpa * (1.0 - 2.2557e-5 * h) ** 5.2568
    temp = atm.temperature_k - 6.5e-3 * h
    e_wv = 6.108 * atm.humidity * math.exp((17.15 * temp - 4684.0) / (temp - 38.45))
    return pressure, temp, e_wv


def saastamoinen_delay(user: GeodeticCoord, elevation, atm: StandardAtmosphere = DEFAULT_ATMOSPHERE):
    """Total (hydrostatic + wet) slant tropospheric delay [m]."""
    el = np.asarray(elevation, dtype=float)
    if el.min(initial=math.inf) < MIN_TROPO_ELEVATION - 1e-12:
        raise AtmosphereError("elevation below model validity")
    pressure, temp, e_wv = meteo_at_height(user.height, atm)
    h_km = min(max(user.height, MIN_METEO_HEIGHT), MAX_METEO_HEIGHT) / 1000.0
    cos_z = np.sin(np.minimum(el, math.pi / 2))
    hydro = 0.0022768 * pressure / (1.0 - 0.00266 * math.cos(2.0 * user.lat) - 0.00028 * h_km)
    wet = 0.002277 * (1255.0 / temp + 0.05) * e_wv
    out = (hydro + wet) / cos_z
    return float(out) if out.ndim == 0 else out
