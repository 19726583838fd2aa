"""Dilution of precision, 3D accuracy and empirical CDFs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geodesy import GeodeticCoord, as_ecef, ecef_to_local_rotation

PSD_TOL = 1e-9


def _check_psd(m: np.ndarray, name: str) -> None:
    scale = max(float(np.abs(m).max()), 1e-300)
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} must be finite")
    if np.abs(m - m.T).max() > PSD_TOL * scale:
        raise ValueError(f"{name} is not symmetric")
    if np.linalg.eigvalsh(0.5 * (m + m.T)).min() < -PSD_TOL * scale:
        raise ValueError(f"{name} is not positive semi-definite")


def covariance_to_local(q: np.ndarray, receiver: GeodeticCoord) -> np.ndarray:
    """Rotate the position block of a 4x4 (or 3x3) ECEF covariance into east/north/up.

    Returns ``R Q R^T`` where the rows of ``R`` are the local east, north and
    up unit vectors, so entry (0, 0) is the east variance, (1, 1) north and
    (2, 2) up.
    """
    q = np.asarray(q, dtype=float)
    if q.shape not in ((4, 4), (3, 3)):
        raise ValueError(f"covariance must be 3x3 or 4x4, got {q.shape}")
    _check_psd(q, "covariance")
    rot = ecef_to_local_rotation(receiver)
    local = rot @ q[:3, :3] @ rot.T
    return 0.5 * (local + local.T)


def hdop(local_cov: np.ndarray) -> float:
    return math.sqrt(max(local_cov[0, 0] + local_cov[1, 1], 0.0))


def vdop(local_cov: np.ndarray) -> float:
    return math.sqrt(max(local_cov[2, 2], 0.0))


def pdop(local_cov: np.ndarray) -> float:
    return math.sqrt(max(float(np.trace(local_cov)), 0.0))


def hdop_from_design(h: np.ndarray, receiver: GeodeticCoord) -> float:
    """HDOP of an unweighted design matrix ``h`` (rows ``[u_x, u_y, u_z, 1]``)."""
    return hdop(covariance_to_local(np.linalg.inv(h.T @ h), receiver))


def error_3d(est, truth) -> float:
    return float(np.linalg.norm(as_ecef(est) - as_ecef(truth)))


@dataclass(frozen=True)
class CdfSeries:
    """Empirical CDF; ``probs[i] = (i + 1) / N`` for the sorted ``values``."""

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        if len(self.values) != len(self.probs) or len(self.values) == 0:
            raise ValueError("CDF needs equally long, non-empty values and probabilities")
        if np.any(np.diff(self.values) < 0):
            raise ValueError("CDF values must be non-decreasing")
        if np.any(np.diff(self.probs) <= 0) or self.probs[0] <= 0 or self.probs[-1] != 1.0:
            raise ValueError("CDF probabilities must rise strictly to exactly 1")

    def percentile(self, q: float) -> float:
        """Value at cumulative probability ``q`` in [0, 1], linear between order statistics.

        Below the first step the smallest sample is returned.
        """
        if not 0.0 <= q <= 1.0:
            raise ValueError(f"probability {q} outside [0, 1]")
        return float(np.interp(q, self.probs, self.values))

    def probability(self, value: float) -> float:
        """Right-continuous step CDF evaluated at ``value``."""
        return float(np.searchsorted(self.values, value, side="right")) / len(self.values)


def cdf(samples: Sequence[float]) -> CdfSeries:
    values = np.sort(np.asarray(samples, dtype=float))
    if values.size == 0:
        raise ValueError("empirical CDF needs at least one sample")
    if not np.all(np.isfinite(values)):
        raise ValueError("CDF samples must be finite")
    n = values.size
    return CdfSeries(values, np.arange(1, n + 1) / n)


@dataclass(frozen=True)
class EpochMetrics:
    epoch: float
    status: str
    hdop: float = math.nan
    pdop: float = math.nan
    vdop: float = math.nan
    error_3d: float = math.nan
    n_sat: int = 0
    n_haps: int = 0
    converged: bool = False
    clock_offset: float = math.nan
    iterations: int = 0

    def __post_init__(self) -> None:
        if not (math.isnan(self.error_3d) or self.error_3d >= 0):
            raise ValueError("3D error must be non-negative")
        for name in ("hdop", "pdop", "vdop"):
            v = getattr(self, name)
            if not (math.isnan(v) or v > 0):
                raise ValueError(f"{name} must be positive when defined")
        if self.hdop > self.pdop * (1 + 1e-12):
            raise ValueError("hdop cannot exceed pdop")
