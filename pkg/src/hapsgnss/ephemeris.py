"""Broadcast ephemeris evaluation following the GPS interface specification."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geodesy import MU, OMEGA_E
from .rinex import SECONDS_PER_WEEK, BroadcastEphemeris

F_REL = -4.442807633e-10  # relativistic clock constant [s/m^0.5]
MAX_EPHEMERIS_AGE = 4 * 3600.0
KEPLER_TOL = 1e-12
KEPLER_MAX_ITER = 30
HALF_WEEK = SECONDS_PER_WEEK / 2


class EphemerisError(ValueError):
    pass


@dataclass(frozen=True)
class SatelliteState:
    prn: int
    position: np.ndarray
    clock_offset: float

    def __post_init__(self) -> None:
        r = float(np.linalg.norm(self.position))
        if not 2.0e7 <= r <= 3.0e7:
            raise ValueError(f"PRN {self.prn}: orbit radius {r} m out of range")
        if abs(self.clock_offset) >= 1e-2:
            raise ValueError(f"PRN {self.prn}: clock offset {self.clock_offset} s out of range")


def week_wrap(dt):
    """Fold a time difference into [-half week, half week) to undo week rollover."""
    return (np.asarray(dt) + HALF_WEEK) % SECONDS_PER_WEEK - HALF_WEEK


def select_ephemeris(
    ephemerides: Sequence[BroadcastEphemeris], prn: int, t: float, week: int | None = None
) -> BroadcastEphemeris:
    """Record for ``prn`` whose toe is nearest to ``t`` (GPS seconds of week).

    With ``week`` given the comparison uses full GPS time, otherwise the
    difference is folded across the week boundary.
    """
    if not ephemerides:
        raise EphemerisError("empty ephemeris set")
    candidates = [eph for eph in ephemerides if eph.prn == prn]
    if not candidates:
        raise EphemerisError(f"no ephemeris for PRN {prn}")

    def age(eph: BroadcastEphemeris) -> float:
        if week is None:
            return abs(float(week_wrap(t - eph.toe)))
        return abs(week * SECONDS_PER_WEEK + t - eph.toe_total)

    best = min(candidates, key=age)
    if age(best) > MAX_EPHEMERIS_AGE:
        raise EphemerisError(f"stale ephemeris for PRN {prn}: {age(best):.0f} s from toe")
    return best


def solve_kepler(mean_anomaly, e):
    """Eccentric anomaly for ``E - e sin E = M`` by Newton iteration seeded at M."""
    m = np.asarray(mean_anomaly, dtype=float)
    e = np.asarray(e, dtype=float)
    ecc = m.copy()
    for _ in range(KEPLER_MAX_ITER):
        step = (ecc - e * np.sin(ecc) - m) / (1.0 - e * np.cos(ecc))
        ecc = ecc - step
        if np.all(np.abs(step) < KEPLER_TOL):
            return ecc
    raise ArithmeticError("Kepler iteration did not converge")


class EphemerisArray:
    """Column-wise view of several ephemerides for batch evaluation."""

    _FIELDS = (
        "toe", "toc", "af0", "af1", "af2", "sqrt_a", "e", "i0", "omega0", "omega", "m0",
        "delta_n", "idot", "omega_dot", "cuc", "cus", "crc", "crs", "cic", "cis",
    )

    def __init__(self, ephemerides: Sequence[BroadcastEphemeris]):
        self.prns = np.array([eph.prn for eph in ephemerides], dtype=int)
        for name in self._FIELDS:
            setattr(self, name, np.array([getattr(eph, name) for eph in ephemerides], dtype=float))

    def __len__(self) -> int:
        return len(self.prns)

    def eccentric_anomaly(self, t) -> np.ndarray:
        tk = week_wrap(np.asarray(t, dtype=float) - self.toe)
        a = self.sqrt_a**2
        n = math.sqrt(MU) / (a * self.sqrt_a) + self.delta_n
        return solve_kepler(self.m0 + n * tk, self.e)

    def positions(self, t) -> np.ndarray:
        """ECEF positions ``(n, 3)`` at GPS seconds of week ``t`` (scalar or per-satellite)."""
        tk = week_wrap(np.asarray(t, dtype=float) - self.toe)
        a = self.sqrt_a**2
        ecc = self.eccentric_anomaly(t)
        e = self.e

        nu = np.arctan2(np.sqrt(1.0 - e * e) * np.sin(ecc), np.cos(ecc) - e)
        phi = nu + self.omega
        s2, c2 = np.sin(2.0 * phi), np.cos(2.0 * phi)
        u = phi + self.cus * s2 + self.cuc * c2
        r = a * (1.0 - e * np.cos(ecc)) + self.crs * s2 + self.crc * c2
        inc = self.i0 + self.idot * tk + self.cis * s2 + self.cic * c2

        x_orb = r * np.cos(u)
        y_orb = r * np.sin(u)
        node = self.omega0 + (self.omega_dot - OMEGA_E) * tk - OMEGA_E * self.toe
        cn, sn, ci = np.cos(node), np.sin(node), np.cos(inc)
        return np.column_stack(
            [x_orb * cn - y_orb * ci * sn, x_orb * sn + y_orb * ci * cn, y_orb * np.sin(inc)]
        )

    def clock_offsets(self, t, relativistic: bool = True) -> np.ndarray:
        tc = week_wrap(np.asarray(t, dtype=float) - self.toc)
        poly = self.af0 + self.af1 * tc + self.af2 * tc * tc
        if not relativistic:
            return poly
        return poly + F_REL * self.e * self.sqrt_a * np.sin(self.eccentric_anomaly(t))


def _check_age(eph: BroadcastEphemeris, t: float) -> None:
    if abs(float(week_wrap(t - eph.toe))) > MAX_EPHEMERIS_AGE:
        raise EphemerisError(f"PRN {eph.prn}: t={t} more than 4 h from toe={eph.toe}")


def satellite_position(eph: BroadcastEphemeris, t_tx: float) -> np.ndarray:
    """ECEF position [m] in the Earth-fixed frame at emission time ``t_tx`` (seconds of week)."""
    _check_age(eph, t_tx)
    return EphemerisArray([eph]).positions(t_tx)[0]


def satellite_clock_offset(eph: BroadcastEphemeris, t: float, relativistic: bool = True) -> float:
    """Broadcast clock polynomial plus (optionally) the relativistic eccentricity term [s]."""
    _check_age(eph, t)
    tc = float(week_wrap(t - eph.toc))
    dt = eph.af0 + eph.af1 * tc + eph.af2 * tc * tc
    if relativistic:
        ecc = float(EphemerisArray([eph]).eccentric_anomaly(t)[0])
        dt += F_REL * eph.e * eph.sqrt_a * math.sin(ecc)
    return dt


def satellite_state(eph: BroadcastEphemeris, t_tx: float, relativistic: bool = True) -> SatelliteState:
    return SatelliteState(eph.prn, satellite_position(eph, t_tx), satellite_clock_offset(eph, t_tx, relativistic))
