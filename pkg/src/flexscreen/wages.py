"""Wage schedules that implement a recommended distribution."""

from __future__ import annotations

import numpy as np

from .core import Dist, WageSchedule
from .primitives import CostModel, DomainError, UtilityFn

MODES = ("equality-everywhere", "punish-off-support")


def obedience_bound(theta: float, mu: Dist, V: float, model: CostModel) -> np.ndarray:
    """Utility ceiling per output point that keeps ``mu`` optimal and pays ``V``.

    ``c_mu(theta, x) + V + C(theta, mu) - E_mu c_mu``.
    """
    c = model.gateaux(theta, mu)
    return c + (V + model.cost(theta, mu) - float(mu.mass @ c))


def default_floor_utility(target: np.ndarray, u: UtilityFn) -> float:
    """A utility level strictly below every entry of ``target``."""
    lo, _ = u.utility_bounds
    finite = target[np.isfinite(target)]
    low = float(finite.min())
    level = low - 10.0 * max(float(np.ptp(finite)), 1.0)
    if np.isfinite(lo):
        if low <= lo:
            raise DomainError("no utility level below the obedience bound exists")
        level = max(level, lo + 0.5 * (low - lo))
    return level


def build_wage(theta: float, mu: Dist, V: float, model: CostModel, u: UtilityFn, mode: str = "equality-everywhere", floor: float | None = None) -> WageSchedule:
    """Wage paying ``u^{-1}`` of the obedience bound.

    ``equality-everywhere`` uses the bound at every output;
    ``punish-off-support`` keeps it on the support of ``mu`` and pays
    ``min(bound, floor)`` elsewhere.
    """
    if mode not in MODES:
        raise ValueError(f"unknown wage mode {mode!r}; expected one of {MODES}")
    grid = mu.grid
    target = obedience_bound(theta, mu, V, model)
    lo, hi = u.utility_bounds
    support = np.zeros(len(grid), dtype=bool)
    support[mu.support()] = True
    must_invert = support if mode == "punish-off-support" else np.ones_like(support)
    bad = np.flatnonzero(must_invert & ((target <= lo) | (target >= hi)))
    if bad.size:
        i = int(bad[0])
        raise DomainError(
            f"obedience bound {target[i]:.6g} at output x={grid.points[i]:.6g} "
            f"(index {i}) is outside the range of u",
            bad,
        )
    pay = np.empty(len(grid))
    pay[must_invert] = u.inverse(target[must_invert])
    if mode == "equality-everywhere":
        return WageSchedule(grid, pay)

    if floor is None:
        floor = float(u.inverse(default_floor_utility(target, u)))
    elif floor > pay[support].min():
        raise ValueError(
            f"floor {floor:.6g} exceeds the on-support wage {pay[support].min():.6g}"
        )
    off = np.flatnonzero(~support)
    below = off[target[off] <= lo]
    if below.size:
        raise DomainError("obedience bound off the support is below the range of u", below)
    for i in off:
        if target[i] >= hi:
            pay[i] = floor
        else:
            pay[i] = min(float(u.inverse(target[i])), floor)
    return WageSchedule(grid, pay)


def monotonize(wage: WageSchedule) -> WageSchedule:
    """Running maximum along the output grid."""
    return WageSchedule(wage.grid, np.maximum.accumulate(wage.pay))


def example2_wages(theta: float, p: float, v_integral: float, model: CostModel, u: UtilityFn, grid, gap: float | None = None) -> WageSchedule:
    """Closed-form wages for a binary recommendation on the extreme outputs.

    ``v_integral`` is the promised utility ``V(theta)`` (accumulated rent plus
    the utility of the lowest type). Every output below the top pays the
    low wage. ``gap`` overrides the top-minus-bottom wage difference (it must
    keep ``p`` optimal; used for pooled corner runs); the level is then set so
    that type ``theta`` still gets ``V(theta)``.
    """
    if not u.is_linear:
        raise ValueError("closed-form binary wages assume linear utility")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    model._theta(theta)
    z = model.z_values(grid)
    z_lo, z_hi = float(z[0]), float(z[-1])
    dz = z_hi - z_lo
    m = z_lo + p * dz
    K, dK = float(model.outer(m)), float(model.outer.derivative(m))
    if gap is None:
        gap = (1.0 - theta) * dK * dz
    low = v_integral + (1.0 - theta) * K - p * gap
    high = low + gap
    pay = np.full(len(grid), low)
    pay[-1] = high
    return WageSchedule(grid, pay)


def pool_corner_runs(p: np.ndarray) -> np.ndarray:
    """Index of the type whose contract each type receives.

    Consecutive types stuck at ``p = 1`` share the contract of the first of
    them; a run at ``p = 0`` shares the contract of its last type.
    """
    m = p.size
    owner = np.arange(m)
    i = 0
    while i < m:
        if p[i] in (0.0, 1.0):
            j = i
            while j + 1 < m and p[j + 1] == p[i]:
                j += 1
            owner[i : j + 1] = i if p[i] == 1.0 else j
            i = j + 1
        else:
            i += 1
    return owner


def pooled_slopes(theta: np.ndarray, p: np.ndarray, model: CostModel, grid) -> tuple[np.ndarray, np.ndarray]:
    """Contract owners and wage slopes ``A`` (utility per unit of ``z``) for binary recommendations.

    Interior types get ``A = (1-theta) K'(m_theta)``. A run at ``p = 1`` takes
    the larger of its owner's slope and the slope of the type just below it,
    a run at ``p = 0`` the smaller of its owner's slope and the slope just
    above it. On a continuum the pooled contract is the boundary type's,
    whose slope is the limit of the interior slopes; on a grid the first
    pooled type lies past that boundary, and its own slope would break the
    increasing-slope property that keeps off-path choices monotone.
    """
    theta = np.asarray(theta, dtype=float)
    p = np.asarray(p, dtype=float)
    z = model.z_values(grid)
    m = z[0] + p * (z[-1] - z[0])
    A = (1.0 - theta) * np.asarray(model.outer.derivative(m), dtype=float)
    owner = pool_corner_runs(p)
    n = p.size
    for i in range(n):
        if p[i] == 0.0 and owner[i] == i and i + 1 < n:
            A[i] = min(A[i], A[i + 1])
    for i in range(n):
        if p[i] == 1.0 and owner[i] == i and i > 0:
            A[i] = max(A[i], A[i - 1])
    return owner, A[owner]
