"""WGS-84 coordinate frames, local rotation, look angles and Earth-rotation correction.

ECEF vectors are plain ``numpy`` arrays of shape ``(3,)`` in meters. Geodetic
coordinates use radians for latitude/longitude and meters for ellipsoidal height.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# GPS-ICD / WGS-84 constants
C = 299_792_458.0  # speed of light [m/s]
OMEGA_E = 7.2921151467e-5  # Earth rotation rate [rad/s]
MU = 3.986005e14  # Earth gravitational parameter [m^3/s^2]
WGS84_A = 6_378_137.0  # semi-major axis [m]
WGS84_F = 1.0 / 298.257223563  # flattening
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)  # first eccentricity squared

# max signal transit time accepted by sagnac_rotate [s]
MAX_TRANSIT_S = 1.0


@dataclass(frozen=True)
class GeodeticCoord:
    """Latitude/longitude in radians, height in meters above the WGS-84 ellipsoid."""

    lat: float
    lon: float
    height: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.lat, self.lon, self.height)):
            raise ValueError("geodetic coordinate must be finite")
        if not -math.pi / 2 <= self.lat <= math.pi / 2:
            raise ValueError(f"latitude {self.lat} rad outside [-pi/2, pi/2]")
        if not -math.pi < self.lon <= math.pi:
            raise ValueError(f"longitude {self.lon} rad outside (-pi, pi]")

    @classmethod
    def from_degrees(cls, lat_deg: float, lon_deg: float, height: float) -> GeodeticCoord:
        return cls(math.radians(lat_deg), math.radians(lon_deg), float(height))

    @property
    def lat_deg(self) -> float:
        return math.degrees(self.lat)

    @property
    def lon_deg(self) -> float:
        return math.degrees(self.lon)


def as_ecef(p) -> np.ndarray:
    """Coerce ``p`` to a finite float ECEF vector of shape (3,)."""
    v = np.asarray(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"ECEF vector must be finite, got {v}")
    return v


def geodetic_to_ecef(g: GeodeticCoord) -> np.ndarray:
    sin_lat, cos_lat = math.sin(g.lat), math.cos(g.lat)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_lat * sin_lat)
    return np.array(
        [
            (n + g.height) * cos_lat * math.cos(g.lon),
            (n + g.height) * cos_lat * math.sin(g.lon),
            (n * (1.0 - WGS84_E2) + g.height) * sin_lat,
        ]
    )


def ecef_to_geodetic(p, tol: float = 1e-12, max_iter: int = 10) -> GeodeticCoord:
    """Invert :func:`geodetic_to_ecef` by fixed-point iteration on latitude.

    The iteration stops once the latitude update falls below ``tol`` radians.
    """
    x, y, z = as_ecef(p)
    r_xy = math.hypot(x, y)
    if r_xy == 0.0 and z == 0.0:
        raise ValueError("geodetic coordinates undefined at the Earth's center")

    lon = math.atan2(y, x)
    if lon <= -math.pi:
        lon = math.pi

    if r_xy < 1e-9:
        lat = math.copysign(math.pi / 2, z)
        return GeodeticCoord(lat, lon if r_xy else 0.0, abs(z) - WGS84_B)

    lat = math.atan2(z, r_xy * (1.0 - WGS84_E2))
    for _ in range(max_iter):
        sin_lat = math.sin(lat)
        n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_lat * sin_lat)
        new_lat = math.atan2(z + n * WGS84_E2 * sin_lat, r_xy)
        done = abs(new_lat - lat) < tol
        lat = new_lat
        if done:
            break

    sin_lat, cos_lat = math.sin(lat), math.cos(lat)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * sin_lat * sin_lat)
    # pick the better-conditioned height formula
    if abs(cos_lat) > 0.5:
        h = r_xy / cos_lat - n
    else:
        h = z / sin_lat - n * (1.0 - WGS84_E2)
    return GeodeticCoord(lat, lon, h)


def ecef_to_local_rotation(g: GeodeticCoord) -> np.ndarray:
    """Rotation from ECEF to the receiver's local frame.

    Rows are the local east, north and up axes expressed in ECEF.
    """
    sl, cl = math.sin(g.lon), math.cos(g.lon)
    sp, cp = math.sin(g.lat), math.cos(g.lat)
    return np.array(
        [
            [-sl, cl, 0.0],
            [-cl * sp, -sl * sp, cp],
            [cl * cp, sl * cp, sp],
        ]
    )


def elevation_azimuth(receiver, source) -> tuple[float, float]:
    """Elevation in [-pi/2, pi/2] and azimuth in [0, 2pi) of ``source`` seen from ``receiver``."""
    rx = as_ecef(receiver)
    los = as_ecef(source) - rx
    dist = float(np.linalg.norm(los))
    if dist == 0.0:
        raise ValueError("receiver and source coincide")
    enu = ecef_to_local_rotation(ecef_to_geodetic(rx)) @ (los / dist)
    el = math.asin(max(-1.0, min(1.0, enu[2])))
    az = math.atan2(enu[0], enu[1]) % (2.0 * math.pi)
    return el, az


def elevation_azimuth_many(rotation: np.ndarray, receiver: np.ndarray, sources: np.ndarray):
    """Vectorised look angles for an ``(n, 3)`` array of sources.

    ``rotation`` is the local rotation at ``receiver``; rows of ``sources`` must
    not coincide with the receiver.
    """
    los = np.atleast_2d(sources) - receiver
    dist = np.linalg.norm(los, axis=1)
    if np.any(dist == 0.0):
        raise ValueError("receiver and source coincide")
    enu = (los / dist[:, None]) @ rotation.T
    el = np.arcsin(np.minimum(np.maximum(enu[:, 2], -1.0), 1.0))
    az = np.mod(np.arctan2(enu[:, 0], enu[:, 1]), 2.0 * np.pi)
    return el, az


def rotation_about_z(angle: float) -> np.ndarray:
    """Frame rotation by ``angle`` about the z axis (positive angle turns the frame eastward)."""
    ca, sa = math.cos(angle), math.sin(angle)
    return np.array([[ca, sa, 0.0], [-sa, ca, 0.0], [0.0, 0.0, 1.0]])


def sagnac_rotate(p_tx, transit_time: float) -> np.ndarray:
    """Express a position given in the ECEF frame at emission in the frame at reception."""
    if not 0.0 <= transit_time < MAX_TRANSIT_S:
        raise ValueError(f"transit time {transit_time} s outside [0, {MAX_TRANSIT_S})")
    return rotation_about_z(OMEGA_E * transit_time) @ as_ecef(p_tx)


def sagnac_rotate_many(p_tx: np.ndarray, transit_times: np.ndarray) -> np.ndarray:
    """Row-wise :func:`sagnac_rotate` for ``(n, 3)`` positions."""
    tt = np.asarray(transit_times, dtype=float)
    if not (tt.min(initial=0.0) >= 0.0 and tt.max(initial=0.0) < MAX_TRANSIT_S):
        raise ValueError(f"transit time outside [0, {MAX_TRANSIT_S})")
    return rotate_rows_unchecked(np.atleast_2d(p_tx), tt)


def rotate_rows_unchecked(p: np.ndarray, transit_times: np.ndarray) -> np.ndarray:
    """:func:`sagnac_rotate_many` without the transit-time range check (hot loops)."""
    theta = OMEGA_E * transit_times
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty_like(p, dtype=float)
    out[:, 0] = c * p[:, 0] + s * p[:, 1]
    out[:, 1] = -s * p[:, 0] + c * p[:, 1]
    out[:, 2] = p[:, 2]
    return out


def enu_offset_to_ecef(origin: GeodeticCoord, east: float, north: float, up: float = 0.0) -> np.ndarray:
    """ECEF position of a point displaced from ``origin`` in its local east/north/up axes."""
    r = ecef_to_local_rotation(origin)
    return geodetic_to_ecef(origin) + r.T @ np.array([east, north, up])


def emission_geometry(positions_at, receiver, t_rx: float, iterations: int = 4):
    """Solve the light-time equation for one or more sources.

    ``positions_at(t)`` returns ``(n, 3)`` Earth-fixed source positions at the
    (per-source) emission times ``t``. Returns ``(p_tx, transit, rho)``: the
    positions at emission in the emission-time frame, the transit times and
    the geometric ranges in the reception-time frame.
    """
    rx = as_ecef(receiver)
    transit = np.zeros(np.atleast_2d(positions_at(np.asarray(t_rx, dtype=float))).shape[0])
    for _ in range(iterations):
        p_tx = np.atleast_2d(positions_at(t_rx - transit))
        rho = np.linalg.norm(sagnac_rotate_many(p_tx, transit) - rx, axis=1)
        transit = rho / C
    p_tx = np.atleast_2d(positions_at(t_rx - transit))
    rho = np.linalg.norm(sagnac_rotate_many(p_tx, transit) - rx, axis=1)
    return p_tx, transit, rho
