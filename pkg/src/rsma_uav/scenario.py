"""Problem instances: users, budgets and the UAV placement box."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import (ChannelVector, RicianParams, large_scale_channels, rician_channel,
                      scatter_draw)


@dataclass(frozen=True)
class PlacementBox:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float

    def __post_init__(self):
        for lo, hi, axis in ((self.x_min, self.x_max, "x"), (self.y_min, self.y_max, "y"),
                             (self.z_min, self.z_max, "z")):
            if not lo < hi:
                raise ValueError(f"placement box: {axis}_min must be below {axis}_max")
        if self.z_min <= 0:
            raise ValueError("placement box: z_min must be positive")

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.x_min, self.y_min, self.z_min])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.x_max, self.y_max, self.z_max])

    def contains(self, q, tol: float = 0.0) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def corners(self) -> np.ndarray:
        lo, hi = self.lower, self.upper
        return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1])
                         for z in (lo[2], hi[2])])


@dataclass(frozen=True)
class Scenario:
    """One problem instance.

    ``power`` and ``sigma2`` are in watts, ``bandwidth`` in Hz and
    ``rate_thresholds`` in bits/s. ``rician`` selects the Rician channel
    model; ``None`` means pure LoS.
    """

    users: np.ndarray
    weights: np.ndarray
    power: float
    sigma2: float
    bandwidth: float
    rate_thresholds: np.ndarray
    box: PlacementBox
    n_t: int
    rician: RicianParams | None = None
    beta: float = 2.0
    scatter: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        users = np.atleast_2d(np.asarray(self.users, dtype=float))
        if users.shape[1] != 3 or users.shape[0] < 1:
            raise ValueError("users must be a (K, 3) array with K >= 1")
        k = users.shape[0]
        weights = np.broadcast_to(np.asarray(self.weights, dtype=float), (k,)).copy()
        thr = np.broadcast_to(np.asarray(self.rate_thresholds, dtype=float), (k,)).copy()
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if self.n_t < 1:
            raise ValueError("n_t must be >= 1")
        if not self.power > 0:
            raise ValueError("transmit power must be positive")
        if not self.sigma2 > 0:
            raise ValueError("noise power must be positive")
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "rate_thresholds", thr)

    @property
    def n_users(self) -> int:
        return self.users.shape[0]

    @property
    def thresholds_per_hz(self) -> np.ndarray:
        return self.rate_thresholds / self.bandwidth

    def with_power(self, power: float) -> "Scenario":
        return replace(self, power=power)

    def with_scatter(self, rng: np.random.Generator) -> "Scenario":
        """Freeze one small-scale fading realization (Rician model only)."""
        if self.rician is None:
            return self
        draws = np.stack([scatter_draw(self.n_t, rng) for _ in range(self.n_users)])
        return replace(self, scatter=draws)

    def channels(self, q) -> list[ChannelVector]:
        """Channels the precoder sees at UAV position ``q``."""
        if self.rician is None:
            return large_scale_channels(q, self.users, self.beta, self.n_t)
        if self.scatter is None:
            raise ValueError("Rician scenario needs a scatter realization; call with_scatter")
        return [rician_channel(q, u, self.rician, self.scatter[k], k)
                for k, u in enumerate(self.users)]

    def channel_array(self, q) -> np.ndarray:
        return np.stack([h.coefficients for h in self.channels(q)])

    def centroid(self, altitude: float) -> np.ndarray:
        c = self.users.mean(axis=0)
        return np.array([c[0], c[1], altitude])
