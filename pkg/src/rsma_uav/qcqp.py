"""Small dense convex QCQP solver.

Problems have the form::

    minimize    x'Q0x + c0'x + k0
    subject to  x'Qix + ci'x + ki <= 0,   i = 1..m
                lower <= x <= upper

with every ``Q`` positive semidefinite. They are solved with a primal
log-barrier method (damped Newton centering) preceded by a phase-1 search
for a strictly feasible point. Dimensions here are a few tens at most, so
everything is dense.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import nnls

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max_iterations"


class NonConvexError(ValueError):
    pass


@dataclass(frozen=True)
class Quadratic:
    """``f(x) = x'Qx + c'x + k``."""

    Q: np.ndarray
    c: np.ndarray
    k: float = 0.0

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.Q @ x + self.c @ x + self.k)


@dataclass
class ConvexQcqp:
    objective: Quadratic
    constraints: list[Quadratic] = field(default_factory=list)
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = self.n
        if self.lower is None:
            self.lower = np.full(n, -np.inf)
        if self.upper is None:
            self.upper = np.full(n, np.inf)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds must have one entry per variable")
        if np.any(self.lower >= self.upper):
            raise ValueError("every lower bound must be below its upper bound")
        if len(self.names) < len(self.constraints):
            self.names = list(self.names) + [
                f"c{i}" for i in range(len(self.names), len(self.constraints))]

    @property
    def n(self) -> int:
        return self.objective.c.shape[0]

    @property
    def m(self) -> int:
        return len(self.constraints)

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        worst = 0.0
        for f in self.constraints:
            worst = max(worst, f(x))
        worst = max(worst, float(np.max(self.lower - x, initial=0.0)))
        worst = max(worst, float(np.max(x - self.upper, initial=0.0)))
        return worst


def validate(problem: ConvexQcqp, rel_tol: float = 1e-9) -> list[str]:
    """Return a description of every non-PSD quadratic form (empty if convex)."""
    problems = []
    forms = [("objective", problem.objective)] + list(zip(problem.names, problem.constraints))
    for name, f in forms:
        Q = np.asarray(f.Q, dtype=float)
        if Q.shape != (problem.n, problem.n) or f.c.shape != (problem.n,):
            problems.append(f"{name}: shape mismatch")
            continue
        if not np.any(Q):
            continue
        Qs = 0.5 * (Q + Q.T)
        eig = np.linalg.eigvalsh(Qs)
        # floor the scale so denormal round-off on a vanishing form is not flagged
        scale = max(abs(eig[0]), abs(eig[-1]), 1e-280)
        if eig[0] < -rel_tol * scale:
            problems.append(f"{name}: indefinite quadratic form (min eigenvalue {eig[0]:.3g})")
    return problems


def build(objective: Quadratic, constraints=(), lower=None, upper=None, names=(),
          check: bool = True) -> ConvexQcqp:
    """Assemble a problem, rejecting non-convex quadratic forms."""
    problem = ConvexQcqp(objective, list(constraints), lower, upper, list(names))
    if check:
        bad = validate(problem)
        if bad:
            raise NonConvexError("; ".join(bad))
    return problem


@dataclass
class SolveResult:
    status: str
    point: np.ndarray
    objective_value: float
    kkt_residual: float
    iterations: int
    # objective at the end of each centering step; non-increasing
    central_path: list[float] = field(default_factory=list)
    duals: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class _Stacked:
    """Vectorized view of the constraints plus the finite bounds."""

    def __init__(self, problem: ConvexQcqp):
        self.n = problem.n
        m = problem.m
        self.Qs = np.zeros((m, self.n, self.n))
        self.cs = np.zeros((m, self.n))
        self.ks = np.zeros(m)
        for i, f in enumerate(problem.constraints):
            self.Qs[i] = 0.5 * (f.Q + f.Q.T)
            self.cs[i] = f.c
            self.ks[i] = f.k
        self.lo_idx = np.flatnonzero(np.isfinite(problem.lower))
        self.hi_idx = np.flatnonzero(np.isfinite(problem.upper))
        self.lo = problem.lower[self.lo_idx]
        self.hi = problem.upper[self.hi_idx]
        self.m_total = m + self.lo_idx.size + self.hi_idx.size

    def values(self, x):
        Qx = self.Qs @ x
        f = (Qx * x).sum(axis=1) + self.cs @ x + self.ks
        return f, Qx

    def slacks(self, x):
        return x[self.lo_idx] - self.lo, self.hi - x[self.hi_idx]

    def strictly_feasible(self, x) -> bool:
        f, _ = self.values(x)
        s_lo, s_hi = self.slacks(x)
        return bool(np.all(f < 0) and np.all(s_lo > 0) and np.all(s_hi > 0))


def _max_step(f, b, c, s_lo, d_lo, s_hi, d_hi) -> float:
    """Largest step keeping every constraint strictly negative along the line."""
    amax = np.inf
    # quadratic constraints: f + a b + a^2 c < 0, with c >= 0 and f < 0
    if f.size:
        sq = np.sqrt(np.maximum(b * b - 4.0 * c * f, 0.0))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            # positive root without cancellation (f < 0 so the two forms agree)
            root_q = np.where(b > 0, -2.0 * f / (b + sq), (sq - b) / (2.0 * c))
            root_l = np.where(b > 0, -f / b, np.inf)
        roots = np.where(c > 1e-300, root_q, root_l)
        amax = min(amax, float(np.min(roots)))
    neg = d_lo < 0
    if np.any(neg):
        amax = min(amax, float(np.min(-s_lo[neg] / d_lo[neg])))
    neg = d_hi < 0
    if np.any(neg):
        amax = min(amax, float(np.min(-s_hi[neg] / d_hi[neg])))
    return amax


def _center(obj: Quadratic, st: _Stacked, x, t, budget, newton_tol=1e-8, stop=None):
    """Newton centering on ``t*f0 + barrier``. Returns (x, steps, converged)."""
    Q0 = 0.5 * (obj.Q + obj.Q.T)
    c0 = obj.c
    steps = 0
    eye = np.eye(st.n)
    while steps < budget:
        f, Qx = st.values(x)
        s_lo, s_hi = st.slacks(x)
        G = 2.0 * Qx + st.cs
        inv = 1.0 / (-f)
        grad = t * (2.0 * Q0 @ x + c0) + G.T @ inv
        grad[st.lo_idx] -= 1.0 / s_lo
        grad[st.hi_idx] += 1.0 / s_hi
        Hess = 2.0 * t * Q0 + (G.T * inv ** 2) @ G + 2.0 * np.tensordot(inv, st.Qs, axes=1)
        diag = np.zeros(st.n)
        np.add.at(diag, st.lo_idx, 1.0 / s_lo ** 2)
        np.add.at(diag, st.hi_idx, 1.0 / s_hi ** 2)
        Hess[np.diag_indices(st.n)] += diag
        try:
            dx = -cho_solve(cho_factor(Hess, check_finite=False), grad, check_finite=False)
        except LinAlgError:
            reg = 1e-12 * max(1.0, np.abs(Hess).max())
            dx = -np.linalg.lstsq(Hess + reg * eye, grad, rcond=None)[0]
        with np.errstate(over="ignore", invalid="ignore"):
            decrement = float(-grad @ dx)
        steps += 1
        if not np.isfinite(decrement):
            return x, steps, False
        if decrement / 2.0 <= newton_tol:
            return x, steps, True
        # everything along the line is a scalar quadratic in the step a
        b = G @ dx
        c = np.einsum("i,mij,j->m", dx, st.Qs, dx) if st.Qs.shape[0] else np.zeros(0)
        d_lo, d_hi = dx[st.lo_idx], -dx[st.hi_idx]
        amax = _max_step(f, b, c, s_lo, d_lo, s_hi, d_hi)
        if not amax > 1e-14:
            return x, steps, False
        a = 1.0
        while a >= amax:
            a *= 0.5
        b0 = float((2.0 * Q0 @ x + c0) @ dx)
        c0_ = float(dx @ Q0 @ dx)

        def psi(a):
            fa = f + a * b + a * a * c
            la, ha = s_lo + a * d_lo, s_hi + a * d_hi
            if np.any(fa >= 0) or np.any(la <= 0) or np.any(ha <= 0):
                return np.inf
            return (t * (a * b0 + a * a * c0_) - np.log(-fa).sum()
                    - np.log(la).sum() - np.log(ha).sum())

        psi0 = -np.log(-f).sum() - np.log(s_lo).sum() - np.log(s_hi).sum()
        while a > 1e-14 and psi(a) > psi0 - 0.25 * a * decrement:
            a *= 0.5
        if a <= 1e-14:
            return x, steps, False
        x = x + a * dx
        if stop is not None and stop(x):
            return x, steps, True
    return x, steps, False


def _initial_t(obj: Quadratic, st: _Stacked, x, m_total) -> float:
    """Barrier weight that best centers ``x`` (least squares in the Hessian norm)."""
    f, Qx = st.values(x)
    s_lo, s_hi = st.slacks(x)
    G = 2.0 * Qx + st.cs
    inv = 1.0 / (-f)
    g_bar = G.T @ inv
    g_bar[st.lo_idx] -= 1.0 / s_lo
    g_bar[st.hi_idx] += 1.0 / s_hi
    H = (G.T * inv ** 2) @ G + 2.0 * np.tensordot(inv, st.Qs, axes=1)
    diag = np.zeros(st.n)
    np.add.at(diag, st.lo_idx, 1.0 / s_lo ** 2)
    np.add.at(diag, st.hi_idx, 1.0 / s_hi ** 2)
    H[np.diag_indices(st.n)] += diag + 1e-12
    g0 = 2.0 * (0.5 * (obj.Q + obj.Q.T)) @ x + obj.c
    try:
        Hg0 = np.linalg.solve(H, g0)
    except np.linalg.LinAlgError:
        return 1.0
    denom = float(g0 @ Hg0)
    if denom <= 0:
        return 1.0
    t = -float(g_bar @ Hg0) / denom
    return float(np.clip(t, 1e-3, m_total)) if np.isfinite(t) else 1.0


def _phase1(problem: ConvexQcqp, st: _Stacked, x0, max_iter: int):
    """Find a strictly feasible point; returns (x or None, newton steps)."""
    n = problem.n
    f, _ = st.values(x0)
    s_lo, s_hi = st.slacks(x0)
    worst = max(np.max(f, initial=-np.inf), np.max(-s_lo, initial=-np.inf),
                np.max(-s_hi, initial=-np.inf))
    # augmented variable (x, s): every constraint g(x) - s <= 0, s >= -1
    m = problem.m
    Qs = np.zeros((m + st.lo_idx.size + st.hi_idx.size, n + 1, n + 1))
    cs = np.zeros((Qs.shape[0], n + 1))
    ks = np.zeros(Qs.shape[0])
    Qs[:m, :n, :n] = st.Qs
    cs[:m, :n] = st.cs
    ks[:m] = st.ks
    row = m
    for j, lo in zip(st.lo_idx, st.lo):
        cs[row, j] = -1.0
        ks[row] = lo
        row += 1
    for j, hi in zip(st.hi_idx, st.hi):
        cs[row, j] = 1.0
        ks[row] = -hi
        row += 1
    cs[:, n] = -1.0
    aug = _Stacked.__new__(_Stacked)
    aug.n = n + 1
    aug.Qs, aug.cs, aug.ks = Qs, cs, ks
    aug.lo_idx = np.array([n])
    aug.lo = np.array([-1.0 - abs(worst) - 1.0])
    aug.hi_idx = np.array([], dtype=int)
    aug.hi = np.array([])
    aug.m_total = Qs.shape[0] + 1
    obj_c = np.zeros(n + 1)
    obj_c[n] = 1.0
    obj = Quadratic(np.zeros((n + 1, n + 1)), obj_c)
    z = np.append(x0, worst + 1.0)

    def done(z):
        return st.strictly_feasible(z[:n])

    steps = 0
    t = 1.0
    while steps < max_iter:
        z, used, _ = _center(obj, aug, z, t, max_iter - steps, stop=done)
        steps += used
        if done(z):
            return z[:n], steps
        if aug.m_total / t < 1e-10:
            break
        t *= 20.0
    return None, steps


# a stalled line search is accepted only this close to the KKT conditions
_STALL_KKT = 1e3


def solve(problem: ConvexQcqp, tol: float = 1e-7, max_iter: int = 200, x0=None,
          objective_scale: float = 1.0) -> SolveResult:
    """Solve a convex QCQP to duality gap ``tol``.

    ``max_iter`` bounds the total number of Newton steps (phase 1 plus
    centering). An infeasible problem returns status ``infeasible``.
    The gap and KKT tests are applied to ``objective / objective_scale``;
    reported objective values and duals are in the original units.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not objective_scale > 0:
        raise ValueError("objective_scale must be positive")
    scale = float(objective_scale)
    if scale != 1.0:
        o = problem.objective
        problem = replace(problem, objective=Quadratic(o.Q / scale, o.c / scale, o.k / scale))
    st = _Stacked(problem)
    n = problem.n
    if x0 is None:
        x0 = np.zeros(n)
    x = np.clip(np.asarray(x0, dtype=float).copy(), problem.lower, problem.upper)
    both = np.isfinite(problem.lower) & np.isfinite(problem.upper)
    at_edge = both & ((x <= problem.lower) | (x >= problem.upper))
    x[at_edge] = 0.5 * (problem.lower[at_edge] + problem.upper[at_edge])
    only_lo = np.isfinite(problem.lower) & ~np.isfinite(problem.upper) & (x <= problem.lower)
    x[only_lo] = problem.lower[only_lo] + 1e-6 * np.maximum(1.0, np.abs(problem.lower[only_lo]))
    only_hi = np.isfinite(problem.upper) & ~np.isfinite(problem.lower) & (x >= problem.upper)
    x[only_hi] = problem.upper[only_hi] - 1e-6 * np.maximum(1.0, np.abs(problem.upper[only_hi]))

    steps = 0
    if not st.strictly_feasible(x):
        x, steps = _phase1(problem, st, x, max_iter)
        if x is None:
            return SolveResult(INFEASIBLE, np.asarray(x0, dtype=float), math.nan, math.inf, steps)

    obj = problem.objective
    m_total = max(st.m_total, 1)
    f0 = obj(x)
    t = _initial_t(obj, st, x, m_total)
    path = []
    status = MAX_ITERATIONS
    lam, kkt = None, math.inf
    while steps < max_iter:
        x_prev = x
        x, used, converged = _center(obj, st, x, t, max_iter - steps)
        steps += used
        path.append(obj(x))
        # no line-search progress at all: the iterate is at working precision
        stalled = not converged and np.array_equal(x, x_prev)
        if m_total / t <= tol and (converged or stalled):
            lam, kkt = _kkt(problem, st, x, t, tol)
            # the gap bound alone can leave the fitted multipliers slightly off
            precise = kkt <= tol or (stalled and kkt <= _STALL_KKT * tol)
            if precise or stalled or m_total / t <= 1e-4 * tol:
                status = OPTIMAL if precise else MAX_ITERATIONS
                break
        if not converged and steps >= max_iter:
            break
        t *= 20.0
    if lam is None or status != OPTIMAL:
        lam, kkt = _kkt(problem, st, x, t, tol)
    return SolveResult(status, x, scale * obj(x), kkt, steps, [scale * v for v in path], scale * lam)


def _kkt(problem: ConvexQcqp, st: _Stacked, x, t, tol: float = 1e-7):
    """Duals and KKT residual at ``x``.

    Multipliers of the near-active constraints are fitted by nonnegative
    least squares on the stationarity equation; the residual is the largest
    of stationarity, complementarity and the barrier duality-gap bound.
    """
    f, Qx = st.values(x)
    s_lo, s_hi = st.slacks(x)
    slack = np.concatenate([-f, s_lo, s_hi])
    grads = np.zeros((slack.size, st.n))
    m = f.size
    grads[:m] = 2.0 * Qx + st.cs
    grads[m + np.arange(st.lo_idx.size), st.lo_idx] = -1.0
    grads[m + st.lo_idx.size + np.arange(st.hi_idx.size), st.hi_idx] = 1.0
    g0 = 2.0 * (0.5 * (problem.objective.Q + problem.objective.Q.T)) @ x + problem.objective.c
    duals = np.zeros(slack.size)
    if slack.size:
        # a constraint matters if its barrier force on stationarity is not negligible
        force = np.abs(grads).max(axis=1) / (t * slack)
        active = force >= 1e-2 * tol
        if np.any(active):
            duals[active] = nnls(grads[active].T, -g0)[0]
    stationarity = float(np.linalg.norm(g0 + grads.T @ duals, np.inf))
    complementarity = float(np.max(duals * slack, initial=0.0))
    gap = max(st.m_total, 1) / t
    return duals[:m], max(stationarity, complementarity, gap)
