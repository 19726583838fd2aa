"""Single point positioning over combined satellite and HAPS pseudoranges.

The solver is an unweighted iterative least-squares loop started at the
Earth's center. Elevations, the elevation mask and the atmospheric
corrections are recomputed from the latest estimate on every iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .atmosphere import (
    DEFAULT_ATMOSPHERE,
    MIN_TROPO_ELEVATION,
    StandardAtmosphere,
    klobuchar_delay,
    saastamoinen_delay,
)
from .geodesy import (
    C,
    MAX_TRANSIT_S,
    GeodeticCoord,
    as_ecef,
    ecef_to_geodetic,
    ecef_to_local_rotation,
    elevation_azimuth_many,
    rotate_rows_unchecked,
    sagnac_rotate_many,
)
from .rinex import IonoParameters

SATELLITE = "satellite"
HAPS = "haps"
MAX_CONDITION = 1e12


class SolverError(Exception):
    status = "error"


class InsufficientSources(SolverError):
    status = "insufficient_sources"


class DegenerateGeometry(SolverError):
    status = "degenerate_geometry"


class Diverged(SolverError):
    status = "diverged"


@dataclass(frozen=True)
class RangingMeasurement:
    """One raw pseudorange and its source position at emission (emission-time ECEF frame)."""

    kind: str
    source_id: str
    pseudorange: float
    position: np.ndarray
    clock_offset: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in (SATELLITE, HAPS):
            raise ValueError(f"unknown source kind {self.kind!r}")
        if not self.pseudorange > 0:
            raise ValueError(f"{self.source_id}: pseudorange must be positive")
        if self.kind == HAPS and self.clock_offset != 0.0:
            raise ValueError(f"{self.source_id}: HAPS clock offsets are not modelled")
        object.__setattr__(self, "position", as_ecef(self.position))


@dataclass(frozen=True)
class SolverConfig:
    elevation_mask_deg: float = 15.0
    threshold_m: float = 0.01
    max_iterations: int = 20
    iono: bool = True
    tropo: bool = True
    atmosphere: StandardAtmosphere = DEFAULT_ATMOSPHERE
    # masking starts once the estimate is this close to the ellipsoid [m]
    bootstrap_band_m: float = 1e5

    def __post_init__(self) -> None:
        if not 0.0 <= self.elevation_mask_deg < 90.0:
            raise ValueError("elevation mask must lie in [0, 90) degrees")
        if not self.threshold_m > 0:
            raise ValueError("convergence threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    @property
    def mask_rad(self) -> float:
        mask = math.radians(self.elevation_mask_deg)
        # the troposphere model is undefined below its validity floor
        return max(mask, MIN_TROPO_ELEVATION) if self.tropo else mask


@dataclass
class IterationRecord:
    position: np.ndarray
    clock_m: float
    used_mask: np.ndarray  # over the input measurement order
    masking: bool
    step_norm: float
    source_ids: tuple[str, ...] = field(repr=False, default=())

    @property
    def used(self) -> tuple[str, ...]:
        return tuple(i for i, u in zip(self.source_ids, self.used_mask) if u)


@dataclass
class PositionSolution:
    position: np.ndarray
    clock_offset: float
    covariance: np.ndarray
    iterations: int
    converged: bool
    residuals: dict[str, float]
    n_sat: int
    n_haps: int
    design_matrix: np.ndarray
    kinds: tuple[str, ...]
    trace: list[IterationRecord] = field(default_factory=list)

    @property
    def geodetic(self) -> GeodeticCoord:
        return ecef_to_geodetic(self.position)


def correct_pseudorange(
    m: RangingMeasurement,
    est_receiver: GeodeticCoord,
    elevation: float,
    azimuth: float,
    iono: IonoParameters | None,
    t: float,
    *,
    use_iono: bool = True,
    use_tropo: bool = True,
    atmosphere: StandardAtmosphere = DEFAULT_ATMOSPHERE,
) -> float:
    """Satellite clock and atmosphere corrected pseudorange; HAPS ranges pass through."""
    if m.kind == HAPS:
        return m.pseudorange
    pc = m.pseudorange + C * m.clock_offset
    if use_tropo:
        pc -= saastamoinen_delay(est_receiver, elevation, atmosphere)
    if use_iono and iono is not None:
        pc -= klobuchar_delay(iono, est_receiver, elevation, azimuth, t)
    return pc


def _norms(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", v, v))


def _near_surface(x: np.ndarray, band: float) -> GeodeticCoord | None:
    if not np.any(x):
        return None
    g = ecef_to_geodetic(x)
    return g if abs(g.height) <= band else None


def solve_epoch(
    measurements: Sequence[RangingMeasurement],
    cfg: SolverConfig,
    iono: IonoParameters | None,
    t: float,
) -> PositionSolution:
    """Position and receiver clock from one epoch of pseudoranges.

    ``t`` is the GPS seconds of week of reception (used by the ionosphere model).
    Raises :class:`InsufficientSources` when fewer than four sources survive the
    mask and :class:`DegenerateGeometry` when the normal matrix is singular.
    """
    if len(measurements) < 4:
        raise InsufficientSources(f"{len(measurements)} ranging sources, at least 4 required")

    ids = tuple(m.source_id for m in measurements)
    kinds = np.array([m.kind for m in measurements])
    is_sat = kinds == SATELLITE
    p_tx = np.array([m.position for m in measurements])
    pr = np.array([m.pseudorange for m in measurements])
    pr_clock = pr + C * np.array([m.clock_offset for m in measurements])

    x = np.zeros(3)
    clock_m = 0.0
    converged = False
    bootstrapped = False
    solved = False
    trace: list[IterationRecord] = []

    for iteration in range(1, cfg.max_iterations + 1):
        transit = _norms(p_tx - x) / C
        if not (transit.max() < MAX_TRANSIT_S and math.isfinite(x[0] + x[1] + x[2])):
            raise Diverged(f"estimate left the plausible region at iteration {iteration}")
        p_rx = rotate_rows_unchecked(p_tx, transit)
        transit = _norms(p_rx - x) / C
        p_rx = rotate_rows_unchecked(p_tx, transit)

        g = _near_surface(x, cfg.bootstrap_band_m)
        pc = pr_clock.copy()
        if g is not None:
            el, az = elevation_azimuth_many(ecef_to_local_rotation(g), x, p_rx)
            use = el >= cfg.mask_rad
            sat = use & is_sat
            any_sat = bool(sat.any())
            if cfg.tropo and any_sat:
                pc[sat] -= saastamoinen_delay(g, el[sat], cfg.atmosphere)
            if cfg.iono and iono is not None and any_sat:
                pc[sat] -= klobuchar_delay(iono, g, el[sat], az[sat], t)
        else:
            use = np.ones(len(measurements), dtype=bool)

        if np.count_nonzero(use) < 4:
            raise InsufficientSources(
                f"{np.count_nonzero(use)} sources above the elevation mask, at least 4 required"
            )

        los = x - p_rx[use]
        rho = _norms(los)
        h = np.ones((len(rho), 4))
        h[:, :3] = los / rho[:, None]
        b = pc[use] - rho

        # SVD-based least squares; its singular values also give cond(H^T H)
        dx, _, _, sv = np.linalg.lstsq(h, b, rcond=None)
        if not sv[-1] > 0 or (sv[0] / sv[-1]) ** 2 > MAX_CONDITION:
            if g is not None or bootstrapped:
                raise DegenerateGeometry("normal matrix is singular to working precision")
            # sources clustered as seen from the Earth's center (e.g. HAPS only):
            # restart from the closed-form fix instead
            new_x, clock_m = bancroft(p_rx[use], pc[use])
            step = float(np.linalg.norm(new_x - x))
            x = new_x
            bootstrapped = True
            solved = False
            trace.append(IterationRecord(x, clock_m, use, False, step, ids))
            continue

        x = x + dx[:3]
        clock_m = float(dx[3])
        solved = True
        step = math.sqrt(float(dx[:3] @ dx[:3]))
        trace.append(IterationRecord(x, clock_m, use, g is not None, step, ids))
        if step < cfg.threshold_m:
            converged = True
            break

    if not solved:
        raise SolverError("iteration budget ended before a least-squares step")
    cov = np.linalg.inv(h.T @ h)
    cov = 0.5 * (cov + cov.T)
    resid = b - h @ dx
    return PositionSolution(
        position=x,
        clock_offset=clock_m / C,
        covariance=cov,
        iterations=iteration,
        converged=converged,
        residuals=dict(zip(trace[-1].used, (float(r) for r in resid))),
        n_sat=int(np.count_nonzero(use & is_sat)),
        n_haps=int(np.count_nonzero(use & ~is_sat)),
        design_matrix=h,
        kinds=tuple(kinds[use]),
        trace=trace,
    )


def estimate_receiver_clock(truth, sat_measurements: Sequence[RangingMeasurement]) -> float:
    """Receiver clock offset [s] implied by corrected satellite pseudoranges at a known position.

    ``sat_measurements`` carry corrected pseudoranges; source positions are
    rotated to the reception frame before taking the range.
    """
    if not sat_measurements:
        raise ValueError("no satellite measurements to estimate the receiver clock from")
    rx = as_ecef(truth)
    p_tx = np.array([m.position for m in sat_measurements])
    pc = np.array([m.pseudorange for m in sat_measurements])
    transit = np.linalg.norm(p_tx - rx, axis=1) / C
    transit = np.linalg.norm(sagnac_rotate_many(p_tx, transit) - rx, axis=1) / C
    rho = np.linalg.norm(sagnac_rotate_many(p_tx, transit) - rx, axis=1)
    return float(np.mean((pc - rho) / C))


def _minkowski(a: np.ndarray, b: np.ndarray):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2] - a[..., 3] * b[..., 3]


def bancroft(positions: np.ndarray, pseudoranges: np.ndarray) -> tuple[np.ndarray, float]:
    """Closed-form position and clock bias [m] from four or more pseudoranges.

    Of the two algebraic roots the one closest to the ellipsoid is returned.
    Positions are re-centred on their mean first, which keeps the system well
    scaled for clustered sources.
    """
    origin = positions.mean(axis=0)
    b_mat = np.column_stack([positions - origin, pseudoranges])
    if np.linalg.matrix_rank(b_mat / np.abs(b_mat).max(axis=0).clip(min=1.0)) < 4:
        raise DegenerateGeometry("source geometry is rank deficient")
    pinv = np.linalg.pinv(b_mat)
    u = pinv @ np.ones(len(pseudoranges))
    v = pinv @ (0.5 * _minkowski(b_mat, b_mat))
    qa, qb, qc = _minkowski(u, u), 2.0 * (_minkowski(u, v) - 1.0), _minkowski(v, v)
    if qa == 0.0:
        roots = [-qc / qb]
    else:
        disc = math.sqrt(max(qb * qb - 4.0 * qa * qc, 0.0))
        roots = [(-qb + disc) / (2.0 * qa), (-qb - disc) / (2.0 * qa)]

    best = None
    for lam in roots:
        y = lam * u + v
        pos = y[:3] + origin
        if not np.any(pos):
            continue
        height = abs(ecef_to_geodetic(pos).height)
        if best is None or height < best[0]:
            best = (height, pos, -float(y[3]))
    if best is None:
        raise DegenerateGeometry("closed-form fix failed")
    return best[1], best[2]
