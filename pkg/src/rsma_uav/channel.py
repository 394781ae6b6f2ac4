"""Air-to-ground channel generation.

Two models are supported: the deterministic free-space LoS channel, where
every antenna of the UAV sees the same real gain ``d**(-beta/2)``, and a
Rician extension whose K-factor grows exponentially with the elevation
angle between the user and the UAV.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DegenerateGeometryError(ValueError):
    """Raised when the UAV and a user occupy the same point."""


@dataclass(frozen=True)
class Position3D:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, a) -> "Position3D":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class ChannelVector:
    coefficients: np.ndarray
    distance: float
    user_index: int = 0

    @property
    def n_t(self) -> int:
        return self.coefficients.shape[0]


@dataclass(frozen=True)
class RicianParams:
    """Elevation-dependent K-factor ``a1 * exp(b1 * theta)``.

    The defaults are the constants ``(10**0.5, 10**1.5)`` used in the
    numerical study; with theta in radians they make the K-factor huge for
    all but grazing angles.
    """

    a1: float = 10 ** 0.5
    b1: float = 10 ** 1.5
    beta: float = 2.0

    def __post_init__(self):
        if not (self.a1 > 0 and self.b1 > 0):
            raise ValueError("Rician constants a1 and b1 must be positive")
        if not self.beta > 0:
            raise ValueError("path-loss exponent must be positive")


def _as_xyz(p) -> np.ndarray:
    if isinstance(p, Position3D):
        return p.as_array()
    return np.asarray(p, dtype=float)


def distance(uav, user) -> float:
    """Euclidean distance between the UAV and a user, in meters."""
    diff = _as_xyz(uav) - _as_xyz(user)
    if not np.all(np.isfinite(diff)):
        raise ValueError("positions must be finite")
    d = math.hypot(*diff)
    if d == 0.0:
        raise DegenerateGeometryError("degenerate geometry: UAV coincides with user")
    return d


def los_channel(uav, user, beta: float = 2.0, n_t: int = 1, user_index: int = 0) -> ChannelVector:
    if n_t < 1:
        raise ValueError("n_t must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    d = distance(uav, user)
    gain = d ** (-beta / 2.0)
    return ChannelVector(np.full(n_t, gain, dtype=complex), d, user_index)


def elevation_angle(uav, user) -> float:
    """Elevation of the UAV seen from the user, radians in [-pi/2, pi/2]."""
    uav_a, user_a = _as_xyz(uav), _as_xyz(user)
    d = distance(uav_a, user_a)
    dz = uav_a[2] - user_a[2]
    # exact values at the poles, arcsin(1.0) is already pi/2
    return math.asin(max(-1.0, min(1.0, dz / d)))


def rician_k_factor(theta: float, params: RicianParams) -> float:
    return params.a1 * math.exp(params.b1 * theta)


def _rician_mix(k_factor: float) -> tuple[float, float]:
    # K/(K+1) and 1/(K+1) written so that K -> inf stays finite
    if math.isinf(k_factor):
        return 1.0, 0.0
    inv = 1.0 / (k_factor + 1.0)
    return math.sqrt(k_factor * inv), math.sqrt(inv)


def scatter_draw(n_t: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean, unit-variance circularly-symmetric complex normal vector."""
    return (rng.standard_normal(n_t) + 1j * rng.standard_normal(n_t)) / math.sqrt(2.0)


def rician_small_scale(k_factor: float, scatter: np.ndarray) -> np.ndarray:
    """Unit-power Rician coefficients with a zero-phase LoS component."""
    los, nlos = _rician_mix(k_factor)
    return los + nlos * np.asarray(scatter, dtype=complex)


def rician_channel(uav, user, params: RicianParams, scatter: np.ndarray,
                   user_index: int = 0) -> ChannelVector:
    """Rician channel for a fixed scatter realization.

    Keeping ``scatter`` fixed while the UAV moves lets an optimizer see a
    channel whose K-factor follows the geometry but whose random part does
    not change between iterations.
    """
    d = distance(uav, user)
    theta = elevation_angle(uav, user)
    try:
        k_factor = rician_k_factor(theta, params)
    except OverflowError:
        k_factor = math.inf
    g = rician_small_scale(k_factor, scatter)
    return ChannelVector(d ** (-params.beta / 2.0) * g, d, user_index)


def sample_rician_channel(uav, user, params: RicianParams, n_t: int,
                          rng: np.random.Generator, user_index: int = 0) -> ChannelVector:
    if n_t < 1:
        raise ValueError("n_t must be >= 1")
    return rician_channel(uav, user, params, scatter_draw(n_t, rng), user_index)


def channel_matrix(channels) -> np.ndarray:
    """Stack channel vectors into an ``(K, N_t)`` complex array."""
    return np.stack([np.asarray(getattr(h, "coefficients", h), dtype=complex) for h in channels])


def large_scale_channels(uav, users, beta: float, n_t: int) -> list[ChannelVector]:
    return [los_channel(uav, u, beta, n_t, k) for k, u in enumerate(users)]
