"""Stratospheric platforms as ranging sources: trajectories and pseudorange synthesis.

HAPS signals originate below the ionosphere, so nothing in this module (or the
solver) ever applies an ionospheric delay to a HAPS pseudorange.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .error_models import gaussian_error
from .geodesy import (
    C,
    GeodeticCoord,
    ecef_to_local_rotation,
    emission_geometry,
    geodetic_to_ecef,
)

DEFAULT_HAPS_HEIGHT = 20_000.0


@dataclass(frozen=True)
class HapsPlatform:
    """Platform circling ``center`` in the center's local horizontal plane."""

    id: str
    center: GeodeticCoord
    radius: float = 0.0
    angular_rate: float = 0.0
    initial_phase: float = 0.0
    clock_offset: float = 0.0

    def __post_init__(self) -> None:
        if self.radius < 0:
            raise ValueError(f"HAPS {self.id}: negative circle radius")
        if self.clock_offset != 0.0:
            raise ValueError(f"HAPS {self.id}: platform clock offsets are not modelled")

    @cached_property
    def _frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rot = ecef_to_local_rotation(self.center)
        return geodetic_to_ecef(self.center), rot[0], rot[1]


@dataclass(frozen=True)
class HapsMeasurement:
    haps_id: str
    pseudorange: float
    position: np.ndarray  # ECEF at emission, emission-time frame

    def __post_init__(self) -> None:
        if not 0.0 < self.pseudorange < 1e6:
            raise ValueError(f"HAPS {self.haps_id}: pseudorange {self.pseudorange} m out of range")


def haps_position(platform: HapsPlatform, t) -> np.ndarray:
    """ECEF position at time ``t`` [s]; an array of times gives an ``(n, 3)`` array."""
    center, east, north = platform._frame
    theta = platform.initial_phase + platform.angular_rate * np.asarray(t, dtype=float)
    offset = platform.radius * (np.multiply.outer(np.cos(theta), east) + np.multiply.outer(np.sin(theta), north))
    return center + offset


def geometric_range(platform: HapsPlatform, receiver_truth, t: float) -> tuple[float, np.ndarray]:
    """Signal path length to ``receiver_truth`` for reception at ``t``.

    Returns the range and the platform position at emission. The light-time
    and Earth-rotation terms are included so that a solver applying the
    rotation correction reproduces this range exactly.
    """
    p_tx, _, rho = emission_geometry(
        lambda ts: np.atleast_2d(haps_position(platform, ts)), receiver_truth, t
    )
    return float(rho[0]), p_tx[0]


def synth_pseudorange_sim(platform: HapsPlatform, receiver_truth, t: float, sigma: float, rng) -> HapsMeasurement:
    """Geometric range plus Gaussian error lumping every residual effect."""
    rho, p_tx = geometric_range(platform, receiver_truth, t)
    return HapsMeasurement(platform.id, rho + gaussian_error(sigma, rng), p_tx)


def synth_pseudorange_exp(
    platform: HapsPlatform, receiver_truth, dt_rx: float, t: float, sigma: float, rng
) -> HapsMeasurement:
    """As :func:`synth_pseudorange_sim` but biased by the receiver clock ``dt_rx`` [s]."""
    rho, p_tx = geometric_range(platform, receiver_truth, t)
    return HapsMeasurement(platform.id, rho + C * dt_rx + gaussian_error(sigma, rng), p_tx)


def platform_from_degrees(
    id: str,
    lat_deg: float,
    lon_deg: float,
    height: float = DEFAULT_HAPS_HEIGHT,
    radius: float = 0.0,
    period_s: float | None = None,
    phase_deg: float = 0.0,
) -> HapsPlatform:
    rate = 0.0 if not period_s else 2.0 * math.pi / period_s
    return HapsPlatform(
        id=id,
        center=GeodeticCoord.from_degrees(lat_deg, lon_deg, height),
        radius=radius,
        angular_rate=rate,
        initial_phase=math.radians(phase_deg),
    )
