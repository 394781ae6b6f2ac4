"""Independent reference computations used by the tests."""
import itertools

import numpy as np

from rsma_uav import qcqp


def random_convex_qcqp(rng, n, m, half_width=2.0):
    """Random PSD objective and constraints with a known strictly feasible point."""
    def psd():
        A = rng.standard_normal((n, n))
        return A @ A.T / n + 0.1 * np.eye(n)

    obj = qcqp.Quadratic(psd(), rng.standard_normal(n) * 2.0, 0.0)
    inner = rng.uniform(-0.5, 0.5, n) * half_width
    cons = []
    for _ in range(m):
        Q = psd() * rng.uniform(0.2, 1.0)
        c = rng.standard_normal(n)
        g = qcqp.Quadratic(Q, c, 0.0)
        cons.append(qcqp.Quadratic(Q, c, -g(inner) - rng.uniform(0.3, 2.0)))
    lo, hi = np.full(n, -half_width), np.full(n, half_width)
    return qcqp.build(obj, cons, lo, hi)


def grid_search(problem, points=15, levels=400, shrink=0.8, min_radius=1e-8, seed=0):
    """Best feasible grid value by a zooming, rotating grid.

    The first level grids the whole box. Later levels grid a cube of
    radius ``r`` around the incumbent, turned by a fresh random rotation so
    the search can follow curved constraint intersections; ``r`` shrinks
    only when a level fails to improve the incumbent.
    """
    rng = np.random.default_rng(seed)
    lo, hi = problem.lower, problem.upper
    n = problem.n
    unit = np.array(list(itertools.product(np.linspace(-1.0, 1.0, points), repeat=n)))
    X = 0.5 * (lo + hi) + unit * 0.5 * (hi - lo)
    best_x, best_f = None, np.inf
    radius = 0.5 * float(np.max(hi - lo)) * shrink
    for _ in range(levels):
        feas = np.all((X >= lo) & (X <= hi), axis=1)
        for f in problem.constraints:
            feas &= np.einsum("ij,jk,ik->i", X, f.Q, X) + X @ f.c + f.k <= 0
        improved = False
        if feas.any():
            F = np.einsum("ij,jk,ik->i", X, problem.objective.Q, X) + X @ problem.objective.c \
                + problem.objective.k
            F[~feas] = np.inf
            i = int(np.argmin(F))
            if best_x is None or F[i] < best_f - 1e-15 * max(1.0, abs(best_f)):
                best_f, best_x, improved = float(F[i]), X[i].copy(), True
        if best_x is None:
            return None, np.inf
        if not improved:
            radius *= shrink
            if radius < min_radius:
                break
        R, _ = np.linalg.qr(rng.standard_normal((n, n)))
        X = best_x + radius * unit @ R.T
    return best_x, best_f
