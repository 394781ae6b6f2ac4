"""UAV placement for a fixed precoder and rate split by successive convex approximation.

Placement sees only the large-scale LoS channel ``d**-1 * ones`` (path-loss
exponent 2), so a link's rate is ``log2(1 + S / (I + sigma2 * d**2))`` with
``S = |1^T p_stream|**2`` and ``I`` the same quantity summed over the
interfering columns. That rate is convex in ``d**2``, so its tangent at the
current iterate is a global lower bound. The tangent is concave in ``q``,
and each SCA step is a convex QCQP in ``(q, eta)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import qcqp
from .channel import DegenerateGeometryError
from .precoder import Link, Scheme, converged, noma_links, rsma_links, sdma_links
from .scenario import PlacementBox, Scenario
from .trace import RunTrace

LOG2E = 1.0 / math.log(2.0)


@dataclass(frozen=True)
class ScaCoefficients:
    A: np.ndarray
    B: np.ndarray
    expansion_distances: np.ndarray
    decoders: np.ndarray

    def __post_init__(self):
        if np.any(self.A < 0):
            raise ValueError("SCA slopes must be nonnegative")


@dataclass(frozen=True)
class QosData:
    lambdas: np.ndarray

    @property
    def vacuous(self) -> np.ndarray:
        return self.lambdas <= 0


@dataclass
class PlacementParams:
    epsilon: float = 1e-4
    max_iterations: int = 50
    solver_tol: float = 1e-7
    solver_max_iter: int = 200


@dataclass(frozen=True)
class PlacementModel:
    """What the placement block must keep or improve.

    ``streams[j]`` lists the links whose rates bound objective variable
    ``j`` (weight ``weights[j]``). ``floors`` are links whose rate must stay
    at least the given value (QoS and common-rate decodability).
    """

    streams: tuple[tuple[Link, ...], ...]
    weights: np.ndarray
    floors: tuple[tuple[Link, float, str], ...] = ()


@dataclass
class PlacementResult:
    position: np.ndarray
    trace: RunTrace
    status: str = "converged"
    surrogate: list[float] = field(default_factory=list)


def _users(users) -> np.ndarray:
    users = getattr(users, "users", users)
    return np.atleast_2d(np.asarray(users, dtype=float))


def beam_gains(precoder) -> np.ndarray:
    """``|1^T p_i|**2`` for every precoder column."""
    return np.abs(np.asarray(precoder, dtype=complex).sum(axis=0)) ** 2


def squared_distances(q, users) -> np.ndarray:
    d2 = ((np.asarray(q, dtype=float)[None, :] - _users(users)) ** 2).sum(axis=1)
    if np.any(d2 <= 0):
        raise DegenerateGeometryError("degenerate geometry: UAV coincides with a user")
    return d2


def _signal_interference(gains, link: Link) -> tuple[float, float]:
    return float(gains[link.stream]), float(sum(gains[i] for i in link.interferers))


def link_rate(q, precoder, users, sigma2: float, link: Link) -> float:
    """Large-scale rate of one link at UAV position ``q``."""
    S, I = _signal_interference(beam_gains(precoder), link)
    d2 = squared_distances(q, users)[link.decoder]
    return math.log2(1.0 + S / (I + sigma2 * d2))


def sca_coefficients(q_l, precoder, users, sigma2: float, links=None) -> ScaCoefficients:
    """Tangent of each link rate in ``d**2`` at ``q_l``.

    ``links`` defaults to the K private links. ``B`` is the rate at
    ``q_l`` and ``A`` the negated slope, so the bound is
    ``B - A * (d**2 - d_l**2)``.
    """
    users = _users(users)
    links = sdma_links(users.shape[0]) if links is None else list(links)
    gains = beam_gains(precoder)
    d2 = squared_distances(q_l, users)
    A, B, D, dec = [], [], [], []
    for link in links:
        S, I = _signal_interference(gains, link)
        base = I + sigma2 * d2[link.decoder]
        A.append(LOG2E * sigma2 * S / (base * (base + S)))
        B.append(math.log2(1.0 + S / base))
        D.append(math.sqrt(d2[link.decoder]))
        dec.append(link.decoder)
    return ScaCoefficients(np.array(A), np.array(B), np.array(D), np.array(dec, dtype=int))


def rate_lower_bound(q, coeffs: ScaCoefficients, k: int, users) -> float:
    """Tangent bound of entry ``k`` of ``coeffs`` at position ``q``."""
    d2 = squared_distances(q, users)[coeffs.decoders[k]]
    return float(-coeffs.A[k] * (d2 - coeffs.expansion_distances[k] ** 2) + coeffs.B[k])


def qos_data(split, thresholds_per_hz) -> QosData:
    """``2**(R_th - r) - 1`` per user; entries ``<= 0`` are vacuous."""
    margin = np.asarray(thresholds_per_hz, dtype=float) - np.asarray(split, dtype=float)
    return QosData(np.exp2(margin) - 1.0)


def placement_model(scheme: Scheme, precoder, split, scenario: Scenario, order=None,
                    common_floors: bool = True) -> PlacementModel:
    """Objective streams and rate floors for the given scheme.

    RSMA follows the private-rate objective; the common stream enters as a
    decodability floor ``sum(split)`` on every common link so the fixed split
    stays achievable at the new position; ``common_floors=False`` drops
    them and leaves the split to be rescaled afterwards. NOMA bounds each user's stream by every decoder of its successive-decoding
    chain.
    """
    scheme = Scheme(scheme)
    n = scenario.n_users
    thr = scenario.thresholds_per_hz
    split = np.zeros(n) if split is None else np.asarray(split, dtype=float)
    floors = []
    if scheme is Scheme.NOMA:
        if order is None:
            raise ValueError("NOMA placement needs a decoding order")
        links = noma_links(order)
        streams = tuple(tuple(l for l in links if l.stream == k + 1) for k in range(n))
        for l in links:
            if thr[l.stream - 1] > 0:
                floors.append((l, float(thr[l.stream - 1]), f"qos[{l.stream - 1}@{l.decoder}]"))
        return PlacementModel(streams, scenario.weights.copy(), tuple(floors))

    private = sdma_links(n)
    streams = tuple((l,) for l in private)
    margin = thr - (split if scheme is Scheme.RSMA else 0.0)
    for k, l in enumerate(private):
        if margin[k] > 0:
            floors.append((l, float(margin[k]), f"qos[{k}]"))
    if scheme is Scheme.RSMA and common_floors and split.sum() > 0:
        for l in rsma_links(n)[:n]:
            floors.append((l, float(split.sum()), f"common[{l.decoder}]"))
    return PlacementModel(streams, scenario.weights.copy(), tuple(floors))


def model_objective(q, precoder, users, sigma2: float, model: PlacementModel) -> float:
    """True weighted objective the placement block improves."""
    total = 0.0
    for w, links in zip(model.weights, model.streams):
        total += w * min(link_rate(q, precoder, users, sigma2, l) for l in links)
    return total


@dataclass
class P3Program:
    problem: qcqp.ConvexQcqp | None
    coefficients: ScaCoefficients
    stream_of: np.ndarray
    infeasible: str | None = None

    @property
    def reported_constraint_count(self) -> int:
        """Rate plus QoS constraints plus one per box axis."""
        if self.problem is None:
            return 0
        return sum(not n.startswith("common") for n in self.problem.names) + 3


def _ball(center, radius2: float, n: int) -> qcqp.Quadratic:
    Q = np.zeros((n, n))
    Q[:3, :3] = np.eye(3)
    c = np.zeros(n)
    c[:3] = -2.0 * center
    return qcqp.Quadratic(Q, c, float(center @ center) - radius2)


def build_p3(q_l, precoder, users, sigma2: float, box: PlacementBox, model: PlacementModel) -> P3Program:
    """SCA surrogate at ``q_l`` over ``(x, y, z, eta_1..eta_J)``.

    The objective is ``-sum(w_j * eta_j)`` (the solver minimizes). Each
    ``eta_j`` is bounded by the tangent of every link of its stream; each
    floor becomes a ball around its decoder. A floor no position can meet
    returns ``problem=None`` with a reason in ``infeasible``.
    """
    users = _users(users)
    q_l = np.asarray(q_l, dtype=float)
    links = [l for s in model.streams for l in s]
    stream_of = np.array([j for j, s in enumerate(model.streams) for _ in s], dtype=int)
    coeffs = sca_coefficients(q_l, precoder, users, sigma2, links)
    n_eta = len(model.streams)
    n = 3 + n_eta
    gains = beam_gains(precoder)

    constraints, names = [], []
    for i, link in enumerate(links):
        A, B = coeffs.A[i], coeffs.B[i]
        center = users[link.decoder]
        Q = np.zeros((n, n))
        Q[:3, :3] = A * np.eye(3)
        c = np.zeros(n)
        c[:3] = -2.0 * A * center
        c[3 + stream_of[i]] = 1.0
        k = A * float(center @ center) - A * coeffs.expansion_distances[i] ** 2 - B
        constraints.append(qcqp.Quadratic(Q, c, k))
        names.append(f"rate[{stream_of[i]}@{link.decoder}]")

    for link, floor, name in model.floors:
        lam = 2.0 ** floor - 1.0
        if lam <= 0:
            continue
        S, I = _signal_interference(gains, link)
        radius2 = (S / lam - I) / sigma2
        if radius2 < 0:
            return P3Program(None, coeffs, stream_of, f"{name}: no position meets the rate floor")
        constraints.append(_ball(users[link.decoder], radius2, n))
        names.append(name)

    # eta floors keep the program bounded below without ever binding
    far = max(float(((box.corners() - users[l.decoder]) ** 2).sum(axis=1).max()) for l in links)
    eta_lo = np.full(n_eta, np.inf)
    for i, link in enumerate(links):
        lb = coeffs.B[i] - coeffs.A[i] * (far - coeffs.expansion_distances[i] ** 2)
        eta_lo[stream_of[i]] = min(eta_lo[stream_of[i]], lb)
    lower = np.concatenate([box.lower, eta_lo - 1.0])
    upper = np.concatenate([box.upper, np.full(n_eta, np.inf)])
    obj_c = np.zeros(n)
    obj_c[3:] = -np.asarray(model.weights, dtype=float)
    problem = qcqp.build(qcqp.Quadratic(np.zeros((n, n)), obj_c), constraints, lower, upper, names)
    return P3Program(problem, coeffs, stream_of)


def _start_point(q, coeffs: ScaCoefficients, stream_of, n_eta: int, box: PlacementBox) -> np.ndarray:
    # pull q off the box faces, then sit eta just below every tangent
    span = box.upper - box.lower
    q = np.clip(q, box.lower + 1e-6 * span, box.upper - 1e-6 * span)
    eta = np.full(n_eta, np.inf)
    for i, j in enumerate(stream_of):
        eta[j] = min(eta[j], coeffs.B[i])
    eta = eta - 1e-3 * np.maximum(np.abs(eta), 1e-3)
    return np.concatenate([q, eta])


def optimize_placement(q0, precoder, split, scenario: Scenario, params: PlacementParams | None = None,
                       scheme: Scheme = Scheme.RSMA, order=None,
                       common_floors: bool = True) -> PlacementResult:
    """SCA loop: tangent bounds at ``q_l``, solve the surrogate, move to its maximizer.

    The true objective never decreases: ``q_l`` is feasible for the
    surrogate, whose value there equals the true objective, and the
    surrogate lower-bounds the true objective everywhere.
    """
    params = params or PlacementParams()
    q = np.asarray(q0, dtype=float).copy()
    if not scenario.box.contains(q, 1e-9):
        raise ValueError("initial UAV position must lie inside the placement box")
    if scenario.beta != 2.0:
        raise ValueError("placement surrogate assumes path-loss exponent 2")
    users, sigma2, box = scenario.users, scenario.sigma2, scenario.box
    model = placement_model(scheme, precoder, split, scenario, order, common_floors)
    trace = RunTrace()
    value = model_objective(q, precoder, users, sigma2, model)
    trace.log(value, position=q)
    surrogate = []
    status = "max_iterations"
    for it in range(params.max_iterations):
        prog = build_p3(q, precoder, users, sigma2, box, model)
        if prog.problem is None:
            status = "infeasible"
            trace.log(value, position=q, status=status)
            break
        x0 = _start_point(q, prog.coefficients, prog.stream_of, len(model.streams), box)
        res = qcqp.solve(prog.problem, tol=params.solver_tol, max_iter=params.solver_max_iter,
                         x0=x0, objective_scale=max(value, 1e-12))
        if res.status != qcqp.OPTIMAL:
            status = res.status
            trace.log(value, position=q, status=status)
            break
        q_new = res.point[:3]
        new_value = model_objective(q_new, precoder, users, sigma2, model)
        if new_value < value - 1e-9:
            # solver noise around a stationary point; keep the better iterate
            status = "converged"
            break
        surrogate.append(-res.objective_value)
        done = converged(surrogate[-1], value, params.epsilon)
        q, value = q_new, new_value
        trace.log(value, position=q)
        if done:
            status = "converged"
            break
    trace.status = status
    return PlacementResult(q, trace, status, surrogate)
