"""The agent's problem: choose an output distribution given a wage and a type."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dist, OutputGrid, WageSchedule, make_dirac
from .primitives import CostModel, UtilityFn

TIE_TOL = 1e-9
SLOPE_TOL = 1e-12


@dataclass(frozen=True)
class BestResponse:
    """A selected maximiser of the agent's expected utility.

    ``tie_set`` lists the optimal vertices (linear family) or the support of
    the selected mixture (composite family).
    """

    dist: Dist
    value: float
    tie_set: tuple

    @property
    def index(self) -> int:
        """Largest output index in the support."""
        return int(self.dist.support()[-1])


def agent_utility(theta: float, wage: WageSchedule, mu: Dist, model: CostModel, u: UtilityFn) -> float:
    """Expected utility of the wage minus cost of ``mu``."""
    return float(mu.mass @ u(wage.pay)) - model.cost(theta, mu)


def _utility_values(wage: WageSchedule, u: UtilityFn) -> np.ndarray:
    return np.asarray(u(wage.pay), dtype=float)


def best_response_linear(wage: WageSchedule, theta: float, model: CostModel, u: UtilityFn, tie_tol: float = TIE_TOL) -> BestResponse:
    """Vertex enumeration; ties go to the largest output."""
    if model.family != "linear":
        raise ValueError("best_response_linear needs the linear cost family")
    model._theta(theta)
    scores = _utility_values(wage, u) - (1.0 - theta) * model.z_values(wage.grid)
    best = scores.max()
    ties = np.flatnonzero(scores >= best - tie_tol)
    idx = int(ties[-1])
    return BestResponse(make_dirac(wage.grid, idx), float(scores[idx]), tuple(int(t) for t in ties))


class UpperHull:
    """Upper concave envelope of the points ``(z_i, y_i)``, ``z`` strictly increasing.

    Collinear points are kept so that an optimum sitting on one of them is
    reconstructed as a point mass.
    """

    def __init__(self, z: np.ndarray, y: np.ndarray):
        z = np.asarray(z, dtype=float)
        y = np.asarray(y, dtype=float)
        scale = 1.0 + np.max(np.abs(y)) * (1.0 + np.ptp(z))
        eps = 1e-13 * scale
        hull: list[int] = []
        for i in range(z.size):
            while len(hull) >= 2:
                o, a = hull[-2], hull[-1]
                cross = (z[a] - z[o]) * (y[i] - y[o]) - (y[a] - y[o]) * (z[i] - z[o])
                if cross > eps:
                    hull.pop()
                else:
                    break
            hull.append(i)
        self.index = np.array(hull)
        self.z = z[self.index]
        self.y = y[self.index]
        self.slopes = np.diff(self.y) / np.diff(self.z)

    def left_slope(self, m: float) -> float:
        k = int(np.searchsorted(self.z, m, side="left")) - 1
        return float(self.slopes[min(max(k, 0), self.slopes.size - 1)])

    def __call__(self, m: float) -> float:
        return float(np.interp(m, self.z, self.y))

    def mixture(self, m: float, n: int, snap: float) -> np.ndarray:
        """Distribution on at most two adjacent hull points with mean ``m``."""
        mass = np.zeros(n)
        near = np.flatnonzero(np.abs(self.z - m) <= snap)
        if near.size:
            mass[self.index[near[-1]]] = 1.0
            return mass
        k = int(np.searchsorted(self.z, m)) - 1
        k = min(max(k, 0), self.z.size - 2)
        lam = (m - self.z[k]) / (self.z[k + 1] - self.z[k])
        mass[self.index[k]] = 1.0 - lam
        mass[self.index[k + 1]] = lam
        return mass


def largest_maximisers(hull: UpperHull, a: np.ndarray, K) -> np.ndarray:
    """Largest maximiser of the concave ``H(m) - a*K(m)`` for each entry of ``a``.

    The left derivative ``slope - a*K'`` is nonincreasing along the hull, so
    the last vertex where it is still (weakly) positive brackets the optimum;
    inside that segment the root of ``slope = a*K'(m)`` is bisected.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    zv = hull.z
    tol = SLOPE_TOL * (1.0 + np.max(np.abs(hull.slopes)))
    dK = np.asarray(K.derivative(zv), dtype=float)
    # left derivative at vertices 1..V-1
    left = hull.slopes[None, :] - a[:, None] * dK[None, 1:]
    up = left >= -tol
    last = np.where(up.any(axis=1), up.shape[1] - np.argmax(up[:, ::-1], axis=1), 0)
    top = last == zv.size - 1
    seg = np.minimum(last, zv.size - 2)
    slope = hull.slopes[seg]
    lo, hi = zv[seg].copy(), zv[seg + 1].copy()
    # right derivative at the bracketing vertex already negative: stop there
    inside = ~top & (slope - a * np.asarray(K.derivative(lo), dtype=float) >= -tol)
    for _ in range(100):
        if not inside.any():
            break
        mid = 0.5 * (lo + hi)
        ok = slope - a * np.asarray(K.derivative(mid), dtype=float) >= -tol
        lo = np.where(inside & ok, mid, lo)
        hi = np.where(inside & ~ok, mid, hi)
    return np.where(top, zv[-1], lo)


def solve_on_hull_many(hull: UpperHull, grid: OutputGrid, thetas, model: CostModel) -> np.ndarray:
    """Optimal mass vectors for ``max H(m) - (1-theta) K(m)``, one row per type."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    n = len(grid)
    if hull.z.size < 2 or hull.z[-1] - hull.z[0] <= 0:
        out = np.zeros((thetas.size, n))
        out[:, hull.index[-1]] = 1.0
        return out
    m_star = largest_maximisers(hull, 1.0 - thetas, model.outer)
    snap = 1e-12 * (1.0 + abs(hull.z[-1] - hull.z[0]))
    return np.vstack([hull.mixture(float(m), n, snap) for m in m_star])


def solve_on_hull(hull: UpperHull, grid: OutputGrid, theta: float, model: CostModel) -> np.ndarray:
    """Optimal mass vector for ``max H(m) - (1-theta) K(m)``."""
    return solve_on_hull_many(hull, grid, [theta], model)[0]


def best_response_composite(wage: WageSchedule, theta: float, model: CostModel, u: UtilityFn, hull: UpperHull | None = None) -> BestResponse:
    """Two-stage reduction: concave envelope in the cost level, then a 1-D concave search.

    Works for any cost of the form ``(1-theta) K(E z)``, so also for the
    linear family.
    """
    model._theta(theta)
    if hull is None:
        hull = UpperHull(model.z_values(wage.grid), _utility_values(wage, u))
    mass = solve_on_hull(hull, wage.grid, theta, model)
    dist = Dist(wage.grid, mass)
    value = agent_utility(theta, wage, dist, model, u)
    return BestResponse(dist, value, tuple(int(i) for i in dist.support()))


def best_response(wage: WageSchedule, theta: float, model: CostModel, u: UtilityFn) -> BestResponse:
    """Dispatch on the cost family."""
    if model.family == "linear":
        return best_response_linear(wage, theta, model, u)
    return best_response_composite(wage, theta, model, u)


# ---------------------------------------------------------------------------
# brute-force oracle (independent of the hull method)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.nonzero(u - css / np.arange(1, n + 1) > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def _ascend(x0, f, grad, max_iter=3000):
    x = project_simplex(x0)
    fx = f(x)
    step = 1.0
    for _ in range(max_iter):
        g = grad(x)
        while True:
            y = project_simplex(x + step * g)
            fy = f(y)
            # Armijo condition for projected gradient ascent
            if fy >= fx + 1e-4 * g @ (y - x) or step < 1e-14:
                break
            step *= 0.5
        gain = fy - fx
        x, fx = y, fy
        step *= 2.0
        if gain <= 1e-15 * (1.0 + abs(fx)) and np.allclose(y, project_simplex(y + g), atol=1e-12):
            break
    return x, fx


def best_response_oracle(wage: WageSchedule, theta: float, model: CostModel, u: UtilityFn, grid_steps: int = 20001, n_starts: int = 20, seed: int = 0, feasible=None) -> BestResponse:
    """Best-effort brute force: a 1-D scan on two-point action sets, otherwise
    projected-gradient ascent from random starts (plus all vertices).

    The result is a lower bound on the true optimum. ``feasible`` restricts
    the support to the given grid indices.
    """
    grid = wage.grid
    n = len(grid)
    idx = np.arange(n) if feasible is None else np.asarray(sorted(set(int(i) for i in feasible)))
    if idx.size == 0:
        raise ValueError("empty feasible set")
    uw = _utility_values(wage, u)[idx]
    z = model.z_values(grid)[idx]
    a = 1.0 - model._theta(theta)
    K = model.outer

    def f(mu):
        return float(mu @ uw - a * K(mu @ z))

    def grad(mu):
        return uw - a * float(K.derivative(mu @ z)) * z

    candidates = []
    if idx.size == 1:
        candidates.append(np.ones(1))
    elif idx.size == 2:
        p = np.linspace(0.0, 1.0, grid_steps)
        vals = uw[0] + p * (uw[1] - uw[0]) - a * K(z[0] + p * (z[1] - z[0]))
        k = int(np.argmax(vals))
        candidates.append(np.array([1.0 - p[k], p[k]]))
    else:
        rng = np.random.default_rng(seed)
        candidates.extend(np.eye(idx.size))
        starts = [np.full(idx.size, 1.0 / idx.size)]
        starts += list(rng.dirichlet(np.ones(idx.size), size=n_starts - 1))
        for s in starts:
            candidates.append(_ascend(s, f, grad)[0])
    best = max(candidates, key=f)
    mass = np.zeros(n)
    mass[idx] = best
    dist = Dist(grid, mass)
    return BestResponse(dist, agent_utility(theta, wage, dist, model, u), tuple(int(i) for i in dist.support()))
