"""RSMA signal model: SINRs, rates and the weighted sum rate.

Channels are handled as a ``(K, N_t)`` complex array ``H`` (row ``k`` is
``h_k``) and precoders as an ``(N_t, K+1)`` complex array ``P`` whose
column 0 is the common precoder. All rates are spectral efficiencies in
bits/s/Hz; multiply by the bandwidth only when reporting.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import channel_matrix

FEAS_TOL = 1e-6


class InfeasibleSplitError(ValueError):
    """The common-rate portions exceed what every user can decode."""


def as_channels(channels) -> np.ndarray:
    if isinstance(channels, np.ndarray):
        H = np.asarray(channels, dtype=complex)
        return H[None, :] if H.ndim == 1 else H
    return channel_matrix(channels)


def _as_vector(h) -> np.ndarray:
    return np.asarray(getattr(h, "coefficients", h), dtype=complex).ravel()


def _check_dims(h: np.ndarray, P: np.ndarray):
    if P.ndim != 2 or P.shape[0] != h.shape[-1]:
        raise ValueError(
            f"dimension mismatch: channel has {h.shape[-1]} antennas, "
            f"precoder has shape {P.shape}")


def received_gains(H, P) -> np.ndarray:
    """``|h_k^H p_i|**2`` for every user ``k`` (rows) and stream ``i`` (columns)."""
    H = as_channels(H)
    P = np.asarray(P, dtype=complex)
    _check_dims(H, P)
    return np.abs(H.conj() @ P) ** 2


def common_sinr(h, P, sigma2: float) -> float:
    h = _as_vector(h)
    P = np.asarray(P, dtype=complex)
    _check_dims(h, P)
    g = np.abs(h.conj() @ P) ** 2
    return float(g[0] / (g[1:].sum() + sigma2))


def private_sinr(h, P, k: int, sigma2: float) -> float:
    """SINR of private stream ``k`` (1-based) after the common stream is removed."""
    h = _as_vector(h)
    P = np.asarray(P, dtype=complex)
    _check_dims(h, P)
    n_users = P.shape[1] - 1
    if not 1 <= k <= n_users:
        raise IndexError(f"user index {k} outside 1..{n_users}")
    g = np.abs(h.conj() @ P) ** 2
    interference = g[1:].sum() - g[k]
    return float(g[k] / (interference + sigma2))


def rate_from_sinr(sinr):
    """``log2(1 + sinr)``; scalars in, scalars out."""
    s = np.asarray(sinr, dtype=float)
    if np.any(s < 0):
        raise ValueError("SINR must be nonnegative")
    r = np.log2(1.0 + s)
    return float(r) if r.ndim == 0 else r


def common_sinrs(H, P, sigma2: float) -> np.ndarray:
    g = received_gains(H, P)
    return g[:, 0] / (g[:, 1:].sum(axis=1) + sigma2)


def private_sinrs(H, P, sigma2: float) -> np.ndarray:
    g = received_gains(H, P)
    priv = g[:, 1:]
    desired = np.diagonal(priv)
    return desired / (priv.sum(axis=1) - desired + sigma2)


def common_rates(H, P, sigma2: float) -> np.ndarray:
    return np.log2(1.0 + common_sinrs(H, P, sigma2))


def private_rates(H, P, sigma2: float) -> np.ndarray:
    return np.log2(1.0 + private_sinrs(H, P, sigma2))


def common_rate_cap(channels, P, sigma2: float) -> float:
    """Largest common rate every user can decode."""
    H = as_channels(channels)
    if H.shape[0] < 1:
        raise ValueError("need at least one user")
    return float(common_rates(H, P, sigma2).min())


@dataclass(frozen=True)
class RateReport:
    common_rates: np.ndarray
    private_rates: np.ndarray
    common_portions: np.ndarray
    overall_rates: np.ndarray
    wsr: float

    def scaled(self, bandwidth: float) -> dict:
        """Rates in bits/s."""
        return {
            "common_rates": self.common_rates * bandwidth,
            "private_rates": self.private_rates * bandwidth,
            "overall_rates": self.overall_rates * bandwidth,
            "wsr": self.wsr * bandwidth,
        }


def rate_report(channels, P, split, weights, sigma2: float, tol: float = FEAS_TOL) -> RateReport:
    H = as_channels(channels)
    split = np.asarray(split, dtype=float)
    weights = np.asarray(weights, dtype=float)
    rc = common_rates(H, P, sigma2)
    rp = private_rates(H, P, sigma2)
    if np.any(split < -tol):
        raise InfeasibleSplitError("common-rate portions must be nonnegative")
    if split.sum() > rc.min() + tol:
        raise InfeasibleSplitError(
            f"common-rate portions sum to {split.sum():.6g} but the common "
            f"rate cap is {rc.min():.6g}")
    overall = split + rp
    return RateReport(rc, rp, split, overall, float(weights @ overall))


def best_split(cap: float, weights) -> np.ndarray:
    """Split ``cap`` maximizing the weighted sum: all of it to one max-weight user."""
    weights = np.asarray(weights, dtype=float)
    r = np.zeros_like(weights)
    r[int(np.argmax(weights))] = max(cap, 0.0)
    return r


def sic_chain_rates(channels, P, order, sigma2: float) -> np.ndarray:
    """Per-user rates of superposition coding with successive decoding.

    ``order`` lists users (0-based) from first-decoded to last-decoded.
    User ``order[j]``'s stream uses precoder column ``order[j] + 1``; it is
    decoded by every user at position ``>= j`` while the streams of
    positions ``> j`` are still present as interference, so its rate is
    the minimum over those decoders.
    """
    g = received_gains(channels, P)
    n_users = g.shape[0]
    order = list(order)
    rates = np.zeros(n_users)
    for j, user in enumerate(order):
        later = [order[i] + 1 for i in range(j + 1, n_users)]
        best = np.inf
        for m in order[j:]:
            sinr = g[m, user + 1] / (g[m, later].sum() + sigma2)
            best = min(best, np.log2(1.0 + sinr))
        rates[user] = best
    return rates
