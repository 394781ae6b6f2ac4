"""WMMSE-based precoder and rate-split optimization for a fixed UAV position.

Every scheme is described by a list of decoding links. A link is a
``(decoder, stream, interferers)`` triple: user ``decoder`` estimates the
stream carried by precoder column ``stream`` while the columns in
``interferers`` are still present. For one-layer RSMA each user has a
common link (column 0, all private columns interfering) and a private link;
SDMA keeps the private links only; NOMA uses the links of a successive
decoding chain.

For fixed equalizers and weights the augmented weighted MSE of every link
is a convex quadratic in the real/imaginary parts of the precoder, so the
precoder block becomes a convex QCQP solved by :mod:`rsma_uav.qcqp`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import qcqp
from .signal_model import (as_channels, best_split, common_rates, private_rates,
                           received_gains, sic_chain_rates)
from .trace import RunTrace

LOG2E = 1.0 / math.log(2.0)
_TINY = 1e-12
# warm starts back off the rate variables so the start is strictly feasible
_INSET = 1.0 - 1e-3


def converged(new: float, old: float, epsilon: float) -> bool:
    """Stopping test shared by the iterative solvers: change within ``epsilon`` relative."""
    return abs(new - old) <= epsilon * max(abs(new), _TINY)


class Scheme(str, Enum):
    RSMA = "rsma"
    SDMA = "sdma"
    NOMA = "noma"


class InitStrategy(str, Enum):
    MATCHED_FILTER_SPLIT = "matched_filter_split"
    RANDOM_SEEDED = "random_seeded"


@dataclass(frozen=True)
class Link:
    decoder: int
    stream: int
    interferers: tuple[int, ...]


@dataclass
class PrecoderOptParams:
    epsilon: float = 1e-4
    max_outer_iterations: int = 200
    init_strategy: InitStrategy = InitStrategy.MATCHED_FILTER_SPLIT
    seed: int = 0
    solver_tol: float = 1e-7
    solver_max_iter: int = 200

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        self.init_strategy = InitStrategy(self.init_strategy)


@dataclass
class WmmseState:
    equalizers: np.ndarray
    weights: np.ndarray
    common_rate_transform: np.ndarray
    precoder: np.ndarray


# ---------------------------------------------------------------------------
# decoding structures

def rsma_links(n_users: int) -> list[Link]:
    private = tuple(range(1, n_users + 1))
    links = [Link(k, 0, private) for k in range(n_users)]
    links += [Link(k, k + 1, tuple(i for i in private if i != k + 1)) for k in range(n_users)]
    return links


def sdma_links(n_users: int) -> list[Link]:
    return rsma_links(n_users)[n_users:]


def noma_order(H) -> list[int]:
    """Decoding order, weakest channel first (ties broken by user index)."""
    H = as_channels(H)
    norms = np.linalg.norm(H, axis=1)
    return sorted(range(H.shape[0]), key=lambda k: (norms[k], -k))


def noma_links(order) -> list[Link]:
    order = list(order)
    links = []
    for j, user in enumerate(order):
        later = tuple(order[i] + 1 for i in range(j + 1, len(order)))
        for m in order[j:]:
            links.append(Link(m, user + 1, later))
    return links


# ---------------------------------------------------------------------------
# MMSE quantities

def received_powers(h, P, sigma2: float) -> tuple[float, float]:
    """Receive power seen when decoding the common stream and, after SIC, the private one."""
    g = received_gains(as_channels(h), P)[0]
    t_common = float(g.sum() + sigma2)
    return t_common, t_common - float(g[0])


def link_powers(H, P, sigma2: float, links) -> tuple[np.ndarray, np.ndarray]:
    """Per link: total receive power ``T`` and the desired signal ``h^H p``."""
    H = as_channels(H)
    HP = H.conj() @ np.asarray(P, dtype=complex)
    gains = np.abs(HP) ** 2
    T = np.array([gains[l.decoder, [l.stream, *l.interferers]].sum() + sigma2 for l in links])
    hp = np.array([HP[l.decoder, l.stream] for l in links])
    return T, hp


def mmse_equalizers(h, P, sigma2: float, k: int = 1) -> tuple[complex, complex]:
    """``(p_0^H h / T_common, p_k^H h / T_private)`` for the user with channel ``h``."""
    P = np.asarray(P, dtype=complex)
    hv = np.asarray(getattr(h, "coefficients", h), dtype=complex).ravel()
    hp = hv.conj() @ P
    g = np.abs(hp) ** 2
    t_c = g.sum() + sigma2
    t_p = t_c - g[0]
    e_p = np.conj(hp[k]) / t_p if P.shape[1] > k else 0.0
    return complex(np.conj(hp[0]) / t_c), complex(e_p)


def link_equalizers(H, P, sigma2: float, links) -> np.ndarray:
    T, hp = link_powers(H, P, sigma2, links)
    return np.conj(hp) / T


def mse(h, p_desired, equalizer, total_power: float) -> float:
    """``|e|^2 T - 2 Re(e h^H p) + 1`` for one stream."""
    hv = np.asarray(getattr(h, "coefficients", h), dtype=complex).ravel()
    hp = hv.conj() @ np.asarray(p_desired, dtype=complex)
    e = complex(equalizer)
    return float(abs(e) ** 2 * total_power - 2.0 * (e * hp).real + 1.0)


def link_mmse(H, P, sigma2: float, links) -> np.ndarray:
    """MMSE of every link, ``I / T``."""
    T, hp = link_powers(H, P, sigma2, links)
    return (T - np.abs(hp) ** 2) / T


def awmse(mse_value, weight):
    weight = np.asarray(weight, dtype=float)
    if np.any(weight <= 0):
        raise ValueError("AWMSE weights must be positive")
    out = weight * mse_value - np.log2(weight)
    return float(out) if out.ndim == 0 else out


def optimal_weights(mmse_values) -> np.ndarray:
    mmse_values = np.asarray(mmse_values, dtype=float)
    if np.any(mmse_values <= 0) or np.any(~np.isfinite(mmse_values)):
        raise FloatingPointError("MMSE values must lie in (0, 1]")
    return 1.0 / mmse_values


# ---------------------------------------------------------------------------
# real lowering of the precoder block

class _Layout:
    """Maps precoder columns to slices of the real decision vector."""

    def __init__(self, n_t: int, columns, n_extra: int, scale: float):
        self.n_t = n_t
        self.columns = list(columns)
        self.pos = {c: i for i, c in enumerate(self.columns)}
        self.n_p = 2 * n_t * len(self.columns)
        self.n = self.n_p + n_extra
        self.scale = scale  # precoder = scale * lowered variable

    def block(self, col) -> slice:
        i = self.pos[col]
        return slice(2 * self.n_t * i, 2 * self.n_t * (i + 1))

    def lower(self, P) -> np.ndarray:
        z = np.zeros(self.n_p)
        for c in self.columns:
            p = np.asarray(P[:, c], dtype=complex) / self.scale
            z[self.block(c)] = np.concatenate([p.real, p.imag])
        return z

    def lift(self, z, n_cols: int) -> np.ndarray:
        P = np.zeros((self.n_t, n_cols), dtype=complex)
        for c in self.columns:
            b = z[self.block(c)]
            P[:, c] = self.scale * (b[:self.n_t] + 1j * b[self.n_t:])
        return P


def _hermitian_real(h: np.ndarray) -> np.ndarray:
    A = np.outer(h, h.conj())
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def zeta_quadratic(layout: _Layout, h, link: Link, u: float, e: complex, sigma2: float) -> qcqp.Quadratic:
    """Upper bound on ``1 - R`` of one link as a quadratic in the lowered variable.

    With ``u = 1/eps0`` this is ``(u*eps(P) - 1)/ln 2 + 1 - log2(u)``: the
    tangent of ``1 + log2(eps)`` at ``eps0``. It equals the AWMSE
    ``u*eps - log2(u)`` (and ``1 - R``) at the MMSE point. Unlike the AWMSE
    it bounds ``1 - R`` from above everywhere, which keeps block updates
    that couple it to rate variables monotone.
    """
    n = layout.n
    Q = np.zeros((n, n))
    c = np.zeros(n)
    s2 = layout.scale ** 2
    g = LOG2E * u
    M = g * abs(e) ** 2 * s2 * _hermitian_real(h)
    for col in (link.stream, *link.interferers):
        if col in layout.pos:
            b = layout.block(col)
            Q[b, b] += M
    if link.stream in layout.pos:
        coef = e * h.conj()
        b = layout.block(link.stream)
        c[b] = -2.0 * g * layout.scale * np.concatenate([coef.real, -coef.imag])
    k = g * (abs(e) ** 2 * sigma2 + 1.0) - LOG2E + 1.0 - math.log2(u)
    return qcqp.Quadratic(Q, c, k)


def _power_constraint(layout: _Layout, power: float) -> qcqp.Quadratic:
    Q = np.zeros((layout.n, layout.n))
    idx = np.arange(layout.n_p)
    Q[idx, idx] = layout.scale ** 2
    return qcqp.Quadratic(Q, np.zeros(layout.n), -power)


# ---------------------------------------------------------------------------
# precoder-block programs

@dataclass
class P5Solution:
    precoder: np.ndarray
    v: np.ndarray
    result: qcqp.SolveResult

    @property
    def status(self) -> str:
        return self.result.status


def _thresholds(rate_thresholds, n_users) -> np.ndarray:
    if rate_thresholds is None:
        return np.zeros(n_users)
    return np.broadcast_to(np.asarray(rate_thresholds, dtype=float), (n_users,)).copy()


def build_p5(H, u, e, weights, power: float, sigma2: float, rate_thresholds=None):
    """Convex program for one-layer RSMA with fixed equalizers/weights.

    Variables are the lowered precoder (all K+1 columns) followed by the
    common-rate transform ``v = -r``. ``u`` and ``e`` are ordered like
    :func:`rsma_links`: K common links then K private links.
    ``rate_thresholds`` are per-Hz.
    """
    H = as_channels(H)
    n_users, n_t = H.shape
    weights = np.asarray(weights, dtype=float)
    thr = _thresholds(rate_thresholds, n_users)
    links = rsma_links(n_users)
    layout = _Layout(n_t, range(n_users + 1), n_users, math.sqrt(power))
    zetas = [zeta_quadratic(layout, H[l.decoder], l, u[i], e[i], sigma2) for i, l in enumerate(links)]
    v_idx = layout.n_p + np.arange(n_users)

    obj_Q = np.zeros((layout.n, layout.n))
    obj_c = np.zeros(layout.n)
    obj_k = 0.0
    for k in range(n_users):
        z = zetas[n_users + k]
        obj_Q += weights[k] * z.Q
        obj_c += weights[k] * z.c
        obj_k += weights[k] * z.k
    obj_c[v_idx] += weights

    constraints, names = [], []
    for k in range(n_users):
        z = zetas[k]
        c = z.c.copy()
        c[v_idx] -= 1.0
        constraints.append(qcqp.Quadratic(z.Q, c, z.k - 1.0))
        names.append(f"common_rate[{k}]")
    for k in range(n_users):
        z = zetas[n_users + k]
        c = z.c.copy()
        c[v_idx[k]] += 1.0
        constraints.append(qcqp.Quadratic(z.Q, c, z.k - (1.0 - thr[k])))
        names.append(f"qos[{k}]")
    constraints.append(_power_constraint(layout, power))
    names.append("power")
    upper = np.full(layout.n, np.inf)
    upper[v_idx] = 0.0
    problem = qcqp.build(qcqp.Quadratic(obj_Q, obj_c, obj_k), constraints, None, upper, names)
    return problem, layout


def build_sdma(H, u, e, weights, power: float, sigma2: float, rate_thresholds=None):
    """Private streams only; ``u``/``e`` follow :func:`sdma_links`."""
    H = as_channels(H)
    n_users, n_t = H.shape
    weights = np.asarray(weights, dtype=float)
    thr = _thresholds(rate_thresholds, n_users)
    links = sdma_links(n_users)
    layout = _Layout(n_t, range(1, n_users + 1), 0, math.sqrt(power))
    zetas = [zeta_quadratic(layout, H[l.decoder], l, u[i], e[i], sigma2) for i, l in enumerate(links)]
    obj = qcqp.Quadratic(sum(w * z.Q for w, z in zip(weights, zetas)),
                         sum(w * z.c for w, z in zip(weights, zetas)),
                         float(sum(w * z.k for w, z in zip(weights, zetas))))
    constraints, names = [], []
    for k, z in enumerate(zetas):
        if thr[k] > 0:
            constraints.append(qcqp.Quadratic(z.Q, z.c, z.k - (1.0 - thr[k])))
            names.append(f"qos[{k}]")
    constraints.append(_power_constraint(layout, power))
    names.append("power")
    return qcqp.build(obj, constraints, names=names), layout


def build_noma(H, order, u, e, weights, power: float, sigma2: float, rate_thresholds=None):
    """Successive-decoding chain with one rate variable per stream.

    Variables: lowered private columns, then ``x_j = -R_j`` for the stream
    at chain position ``j``. Stream ``j`` must be decodable by every user
    at positions ``>= j``.
    """
    H = as_channels(H)
    n_users, n_t = H.shape
    weights = np.asarray(weights, dtype=float)
    thr = _thresholds(rate_thresholds, n_users)
    order = list(order)
    links = noma_links(order)
    layout = _Layout(n_t, range(1, n_users + 1), n_users, math.sqrt(power))
    x_idx = layout.n_p + np.arange(n_users)
    position = {user: j for j, user in enumerate(order)}

    obj_c = np.zeros(layout.n)
    for j, user in enumerate(order):
        obj_c[x_idx[j]] = weights[user]
    constraints, names = [], []
    for i, l in enumerate(links):
        z = zeta_quadratic(layout, H[l.decoder], l, u[i], e[i], sigma2)
        j = position[l.stream - 1]
        c = z.c.copy()
        c[x_idx[j]] -= 1.0
        constraints.append(qcqp.Quadratic(z.Q, c, z.k - 1.0))
        names.append(f"sic[{l.stream - 1}@{l.decoder}]")
    constraints.append(_power_constraint(layout, power))
    names.append("power")
    upper = np.full(layout.n, np.inf)
    upper[x_idx] = [-thr[user] if thr[user] > 0 else 0.0 for user in order]
    problem = qcqp.build(qcqp.Quadratic(np.zeros((layout.n, layout.n)), obj_c),
                         constraints, None, upper, names)
    return problem, layout


def solve_p5_given_ue(H, u, e, weights, power: float, sigma2: float, rate_thresholds=None,
                      P_start=None, v_start=None, tol: float = 1e-7, max_iter: int = 200,
                      objective_scale: float = 1.0) -> P5Solution:
    """Solve the RSMA precoder block for fixed equalizers and weights."""
    H = as_channels(H)
    n_users, n_t = H.shape
    if power <= 0:
        zero = qcqp.SolveResult(qcqp.OPTIMAL, np.zeros(0), 0.0, 0.0, 0)
        return P5Solution(np.zeros((n_t, n_users + 1), dtype=complex), np.zeros(n_users), zero)
    problem, layout = build_p5(H, u, e, weights, power, sigma2, rate_thresholds)
    x0 = None
    if P_start is not None:
        v0 = np.zeros(n_users) if v_start is None else np.asarray(v_start, dtype=float)
        x0 = np.concatenate([_INSET * layout.lower(P_start), np.minimum(v0, 0.0)])
    res = qcqp.solve(problem, tol=tol, max_iter=max_iter, x0=x0, objective_scale=objective_scale)
    P = layout.lift(res.point, n_users + 1) if res.point.size == layout.n else np.asarray(P_start)
    v = res.point[layout.n_p:] if res.point.size == layout.n else np.asarray(v_start)
    return P5Solution(P, np.minimum(v, 0.0), res)


# ---------------------------------------------------------------------------
# WMMSE block iteration

def initial_precoder(H, power: float, scheme: Scheme = Scheme.RSMA,
                     strategy: InitStrategy = InitStrategy.MATCHED_FILTER_SPLIT,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    """Feasible starting precoder.

    ``matched_filter_split`` points each private column along its user's
    channel; RSMA gives the common column (along the channel sum) 10% of
    the power and splits the rest equally, the other schemes split all of
    it over the private columns.
    """
    H = as_channels(H)
    n_users, n_t = H.shape
    P = np.zeros((n_t, n_users + 1), dtype=complex)
    if power <= 0:
        return P
    strategy = InitStrategy(strategy)
    common_share = 0.1 if Scheme(scheme) is Scheme.RSMA else 0.0
    if strategy is InitStrategy.RANDOM_SEEDED:
        rng = np.random.default_rng(0) if rng is None else rng
        P = rng.standard_normal((n_t, n_users + 1)) + 1j * rng.standard_normal((n_t, n_users + 1))
        if common_share == 0.0:
            P[:, 0] = 0.0
        return P * math.sqrt(power) / np.linalg.norm(P)
    for k in range(n_users):
        h = H[k]
        nh = np.linalg.norm(h)
        direction = h / nh if nh > 0 else np.ones(n_t) / math.sqrt(n_t)
        P[:, k + 1] = direction * math.sqrt((1.0 - common_share) * power / n_users)
    if common_share > 0:
        s = H.sum(axis=0)
        if np.linalg.norm(s) == 0:
            s = H[0]
        P[:, 0] = s / np.linalg.norm(s) * math.sqrt(common_share * power)
    return P


def scheme_rates(H, P, scheme: Scheme, sigma2: float, weights, split=None, order=None):
    """Per-user rates and common portions for a scheme (bits/s/Hz)."""
    scheme = Scheme(scheme)
    H = as_channels(H)
    n_users = H.shape[0]
    if scheme is Scheme.RSMA:
        rc = common_rates(H, P, sigma2)
        rp = private_rates(H, P, sigma2)
        r = best_split(rc.min(), weights) if split is None else _feasible_split(split, rc.min())
        return rp + r, r
    if scheme is Scheme.SDMA:
        return private_rates(H, P, sigma2), np.zeros(n_users)
    order = noma_order(H) if order is None else order
    return sic_chain_rates(H, P, order, sigma2), np.zeros(n_users)


def _admissible(P, rates, power: float, rate_thresholds, tol: float = 1e-9) -> bool:
    if np.linalg.norm(P) ** 2 > power * (1.0 + tol):
        return False
    return rate_thresholds is None or bool(np.all(rates >= np.asarray(rate_thresholds) - tol))


def _feasible_split(split, cap: float) -> np.ndarray:
    r = np.maximum(np.asarray(split, dtype=float), 0.0)
    total = r.sum()
    if total > cap:
        r = r * (max(cap, 0.0) / total) if total > 0 else r
    return r


@dataclass
class PrecoderResult:
    precoder: np.ndarray
    split: np.ndarray
    rates: np.ndarray
    wsr: float
    trace: RunTrace
    status: str = "converged"
    order: list[int] | None = None
    state: WmmseState | None = field(default=None, repr=False)


def optimize(H, scheme: Scheme, power: float, sigma2: float, weights,
             params: PrecoderOptParams | None = None, rate_thresholds=None,
             P_init=None, split_init=None, order=None) -> PrecoderResult:
    """Alternate MMSE (equalizer, weight) updates with precoder-block solves.

    Stops when the WSR changes by at most ``params.epsilon`` relative to its
    current value; block solves use the same relative scale. Starting from
    ``P_init`` (warm start) the WSR sequence is non-decreasing up to the
    solver tolerance. ``rate_thresholds`` are per-Hz.
    """
    params = params or PrecoderOptParams()
    scheme = Scheme(scheme)
    H = as_channels(H)
    n_users = H.shape[0]
    weights = np.asarray(weights, dtype=float)
    if scheme is Scheme.NOMA:
        order = noma_order(H) if order is None else list(order)
        links = noma_links(order)
    else:
        order = None
        links = rsma_links(n_users) if scheme is Scheme.RSMA else sdma_links(n_users)

    if P_init is None:
        rng = np.random.default_rng(params.seed)
        P = initial_precoder(H, power, scheme, params.init_strategy, rng)
    else:
        P = np.array(P_init, dtype=complex)
        if scheme is not Scheme.RSMA:
            P[:, 0] = 0.0
    rates, split = scheme_rates(H, P, scheme, sigma2, weights, split_init, order)
    wsr = float(weights @ rates)
    trace = RunTrace()
    trace.log(wsr, rates=rates)
    status = "max_iterations"
    state = None
    if power <= 0:
        return PrecoderResult(P, split, rates, wsr, trace, "converged", order)

    for _ in range(params.max_outer_iterations):
        scale = max(abs(wsr), _TINY)
        mmse_vals = link_mmse(H, P, sigma2, links)
        u = optimal_weights(np.maximum(mmse_vals, 1e-300))
        e = link_equalizers(H, P, sigma2, links)
        if scheme is Scheme.RSMA:
            sol = solve_p5_given_ue(H, u, e, weights, power, sigma2, rate_thresholds,
                                    P_start=P, v_start=-_INSET * split, tol=params.solver_tol,
                                    max_iter=params.solver_max_iter, objective_scale=scale)
            result, P_new, new_split = sol.result, sol.precoder, -sol.v
        else:
            if scheme is Scheme.SDMA:
                problem, layout = build_sdma(H, u, e, weights, power, sigma2, rate_thresholds)
                x0 = _INSET * layout.lower(P)
            else:
                problem, layout = build_noma(H, order, u, e, weights, power, sigma2, rate_thresholds)
                x_start = -_INSET * np.array([rates[user] for user in order])
                x0 = np.concatenate([_INSET * layout.lower(P), x_start])
            result = qcqp.solve(problem, tol=params.solver_tol, max_iter=params.solver_max_iter,
                                x0=x0, objective_scale=scale)
            P_new = layout.lift(result.point, n_users + 1) if result.point.size == layout.n else P
            new_split = None
        new_rates, new_r = scheme_rates(H, P_new, scheme, sigma2, weights, new_split, order)
        new_wsr = float(weights @ new_rates)
        if result.status != qcqp.OPTIMAL and not (
                result.status == qcqp.MAX_ITERATIONS and new_wsr >= wsr
                and _admissible(P_new, new_rates, power, rate_thresholds)):
            # an inexact block is kept only as a feasible ascent step
            trace.log(wsr, rates=rates, status=result.status)
            status = result.status
            break
        P, rates, split = P_new, new_rates, new_r
        state = WmmseState(e, u, -split, P)
        trace.log(new_wsr, rates=rates)
        done = converged(new_wsr, wsr, params.epsilon)
        wsr = new_wsr
        if done:
            status = "converged"
            break
    trace.status = status
    return PrecoderResult(P, split, rates, wsr, trace, status, order, state)


def optimize_rsma(H, params: PrecoderOptParams | None, power: float, sigma2: float, weights,
                  rate_thresholds=None, P_init=None) -> PrecoderResult:
    return optimize(H, Scheme.RSMA, power, sigma2, weights, params, rate_thresholds, P_init)
