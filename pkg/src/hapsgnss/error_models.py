"""Seeded stochastic pseudorange errors.

Every random draw comes from a :class:`numpy.random.Generator` obtained via
:func:`stream`, which keys a child seed sequence on the master seed plus a
tuple of labels (role, epoch, source, ...). Streams are therefore independent
of the order in which they are requested.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np


def _key(label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError("stream labels must be non-negative")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def stream(seed: int, *labels) -> np.random.Generator:
    """Deterministic generator for ``(seed, *labels)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(_key(x) for x in labels)))


@dataclass
class GaussMarkovState:
    """First-order Gauss-Markov process with stationary std ``sigma`` and correlation time ``tau``."""

    x: float
    tau: float
    sigma: float
    rng: np.random.Generator

    def __post_init__(self) -> None:
        if not self.tau > 0:
            raise ValueError(f"correlation time must be positive, got {self.tau}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")


def gm_init(sigma: float, tau: float, seed) -> GaussMarkovState:
    """Start a process in its stationary distribution N(0, sigma^2).

    ``seed`` is an int or an existing generator.
    """
    if not tau > 0:
        raise ValueError(f"correlation time must be positive, got {tau}")
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return GaussMarkovState(sigma * float(rng.standard_normal()), tau, sigma, rng)


def gm_step(state: GaussMarkovState, dt: float) -> tuple[GaussMarkovState, float]:
    """Advance by ``dt`` with the exact discretisation of the continuous process."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    phi = math.exp(-dt / state.tau)
    q = state.sigma * math.sqrt(1.0 - phi * phi)
    x = phi * state.x + q * float(state.rng.standard_normal())
    return GaussMarkovState(x, state.tau, state.sigma, state.rng), x


def gm_series(state: GaussMarkovState, dt: float, n: int) -> np.ndarray:
    """``n`` successive samples; identical to calling :func:`gm_step` ``n`` times."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    phi = math.exp(-dt / state.tau)
    q = state.sigma * math.sqrt(1.0 - phi * phi)
    noise = (q * state.rng.standard_normal(n)).tolist()
    out = np.empty(n)
    x = state.x
    for k, w in enumerate(noise):
        x = phi * x + w
        out[k] = x
    state.x = x
    return out


def gaussian_error(sigma: float, rng: np.random.Generator) -> float:
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    return sigma * float(rng.standard_normal())


@dataclass(frozen=True)
class LosProbabilityTable:
    """Piecewise-linear LOS probability versus elevation (degrees)."""

    environment: str
    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        pts = tuple((float(el), float(p)) for el, p in self.breakpoints)
        if not pts:
            raise ValueError("LOS table needs at least one breakpoint")
        els = [el for el, _ in pts]
        probs = [p for _, p in pts]
        if any(b <= a for a, b in zip(els, els[1:])):
            raise ValueError("LOS table elevations must be strictly increasing")
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ValueError("LOS probabilities must lie in [0, 1]")
        if any(b < a for a, b in zip(probs, probs[1:])):
            raise ValueError("LOS probability must not decrease with elevation")
        object.__setattr__(self, "breakpoints", pts)

    def probability(self, elevation: float) -> float:
        els, probs = zip(*self.breakpoints)
        return float(np.interp(math.degrees(elevation), els, probs))


# illustrative values only; real deployments should supply measured tables
DEFAULT_LOS_TABLES = {
    "suburban": LosProbabilityTable("suburban", ((15.0, 0.8), (90.0, 1.0))),
    "dense_urban": LosProbabilityTable("dense_urban", ((15.0, 0.35), (90.0, 1.0))),
}


def los_gate(table: LosProbabilityTable, elevation: float, rng: np.random.Generator) -> bool:
    """Bernoulli draw: True when the platform is in line of sight this epoch."""
    if not table.breakpoints:
        raise ValueError("empty LOS table")
    if not 0.0 <= elevation <= math.pi / 2 + 1e-12:
        raise ValueError(f"elevation {elevation} rad outside [0, pi/2]")
    return bool(rng.random() < table.probability(elevation))


def sample_autocovariance(samples: Sequence[float], lag: int) -> float:
    x = np.asarray(samples, dtype=float)
    x = x - x.mean()
    if lag == 0:
        return float(np.mean(x * x))
    return float(np.mean(x[:-lag] * x[lag:]))
