"""Support-reducing rewrites of a mechanism and the per-type relaxed problem.

Both rewrites keep every type's promised utility and cost level, replace
the recommendation by a simpler one (a point mass, or mass on the two
extreme outputs), and rebuild wages from the obedience bound.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import Dist, GenSchedule, Mechanism, OutputGrid, WageSchedule, make_binary, make_dirac
from .primitives import CostModel, TypeDistribution, UtilityFn, check_condition_example4
from .wages import build_wage, example2_wages, monotonize, pooled_slopes


@dataclass
class TransformResult:
    mechanism: Mechanism
    kappa_slack: np.ndarray  # new minus old cost level per type
    notes: list


def _check_schedule(mech: Mechanism, schedule: GenSchedule | None) -> None:
    if schedule is not None and not schedule.mechanism == mech:
        raise ValueError("schedule does not belong to this mechanism")


def degenerate_transform(mech: Mechanism, schedule: GenSchedule | None, model: CostModel, u: UtilityFn, details: bool = False):
    """Replace each recommendation by a point mass with (weakly) the same cost level.

    The target output ``z^{-1}(E_mu z)`` is rounded up to the next grid point,
    so cost levels can only rise; the rise is returned as ``kappa_slack``
    when ``details`` is set.
    """
    _check_schedule(mech, schedule)
    outputs = mech.outputs
    if not model.kernel.is_convex_on(outputs):
        raise ValueError("point-mass rewrite needs a convex kernel")
    z = model.z_values(outputs)
    snap = 1e-12 * (1.0 + float(np.ptp(z)))
    th = mech.types.points
    recs, wages, slack = [], [], []
    for i, t in enumerate(th):
        mu = mech.recommendation(i)
        level = float(mu.mass @ z)
        above = np.flatnonzero(z >= level - snap)
        if level < z[0] - snap or above.size == 0:
            raise ValueError(f"cost level {level} of type {t} outside the grid's kernel range")
        new = make_dirac(outputs, int(above[0]))
        wage = monotonize(build_wage(t, new, mech.promised_utility[i], model, u, mode="punish-off-support"))
        recs.append(new.mass)
        wages.append(wage.pay)
        slack.append(model.kappa(new) - model.kappa(mu))
    out = mech.replace(recommendations=np.vstack(recs), wages=np.vstack(wages))
    if details:
        return TransformResult(out, np.array(slack), [])
    return out


def binary_transform(mech: Mechanism, schedule: GenSchedule | None, model: CostModel, u: UtilityFn, details: bool = False):
    """Replace each recommendation by mass on the extreme outputs with the same cost level.

    Refuses (``ValueError``) when the kernel is not concave with ``z(x_min) = 0``
    or when the curvature condition fails at some type's ``(A, B)``. Runs of
    types at ``p = 1`` (``p = 0``) share the first (last) type's contract,
    with the slope adjusted as in :func:`pooled_slopes`.
    """
    _check_schedule(mech, schedule)
    outputs = mech.outputs
    if not model.kernel.is_concave_on(outputs):
        raise ValueError("binary rewrite needs a concave kernel")
    z = model.z_values(outputs)
    if abs(float(z[0])) > 1e-12:
        raise ValueError("binary rewrite needs z(x_min) = 0")
    th = mech.types.points
    V = mech.promised_utility
    levels = mech.recommendations @ z
    kappa = np.asarray(model.outer(levels), dtype=float)
    dK = np.asarray(model.outer.derivative(levels), dtype=float)
    # wage utility is A z(x) + B on the whole grid (obedience bound)
    A = (1.0 - th) * dK
    B = V + (1.0 - th) * (kappa - dK * levels)
    for i, t in enumerate(th):
        if u.is_linear:
            ok = model.kernel.is_concave_on(outputs)
        elif A[i] <= 0 or B[i] <= 0:
            raise ValueError(f"type {t}: (A, B) = ({A[i]:.4g}, {B[i]:.4g}) not strictly positive")
        else:
            ok = check_condition_example4(u, model.kernel, float(A[i]), float(B[i]), outputs)
        if not ok:
            raise ValueError(f"curvature condition fails for type {t} at (A, B) = ({A[i]:.4g}, {B[i]:.4g})")
    p = np.clip(levels / z[-1], 0.0, 1.0)
    p[np.abs(p - 1.0) <= 1e-12] = 1.0
    p[p <= 1e-12] = 0.0
    notes = []
    owner, slope = pooled_slopes(th, p, model, outputs)
    if np.any(np.diff(slope) < -1e-12):
        msg = "A(theta) is not nondecreasing; monotonicity of the rewrite is not guaranteed"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        notes.append(msg)
    recs = [make_binary(outputs, float(pi)).mass for pi in p]
    dz = float(z[-1] - z[0])
    wages = []
    for k, a in zip(owner, slope):
        if u.is_linear:
            wage = example2_wages(th[k], float(p[k]), float(V[k]), model, u, outputs, gap=a * dz)
        else:
            # utility-level wage a z + b, leveled so that the owner gets V
            mk = float(p[k] * dz)
            b = V[k] - a * mk + (1.0 - th[k]) * float(model.outer(mk))
            wage = WageSchedule(outputs, np.asarray(u.inverse(a * z + b), dtype=float))
        wages.append(wage.pay)
    out = mech.replace(recommendations=np.vstack(recs), wages=np.vstack(wages))
    if details:
        new_kappa = np.asarray(model.outer(out.recommendations @ z), dtype=float)
        return TransformResult(out, new_kappa - kappa, notes)
    return out


# ---------------------------------------------------------------------------
# per-type relaxed problem


def implementation_values(theta: float, V: float, level: float, model: CostModel, u: UtilityFn, outputs: OutputGrid) -> np.ndarray:
    """Principal's profit at each output when implementing cost level ``level`` with utility ``V``.

    ``x - u^{-1}(A z(x) + B)`` with ``A = (1-theta) K'(level)`` and
    ``B = V + (1-theta) (K(level) - K'(level) level)``.
    """
    z = model.z_values(outputs)
    dK = float(model.outer.derivative(level))
    A = (1.0 - theta) * dK
    B = V + (1.0 - theta) * (float(model.outer(level)) - dK * level)
    return outputs.points - np.asarray(u.inverse(A * z + B), dtype=float)


def relaxed_type_problem(theta: float, V: float, level: float, model: CostModel, u: UtilityFn, outputs: OutputGrid) -> Dist:
    """Best distribution for one type at fixed promised utility and cost level.

    Envelope and monotonicity only see a type's cost level, so with both
    fixed the principal's per-type problem is a linear programme over the
    simplex with the mean-kernel constraint ``E_mu z = level``.
    """
    z = model.z_values(outputs)
    if not z[0] - 1e-12 <= level <= z[-1] + 1e-12:
        raise ValueError(f"cost level {level} outside [{z[0]}, {z[-1]}]")
    y = implementation_values(theta, V, level, model, u, outputs)
    n = len(outputs)
    res = linprog(
        -y,
        A_eq=np.vstack([np.ones(n), z]),
        b_eq=np.array([1.0, level]),
        bounds=[(0.0, None)] * n,
        method="highs",
    )
    if res.status != 0:
        raise RuntimeError(f"linear programme failed: {res.message}")
    return Dist(outputs, np.clip(res.x, 0.0, None))


def relaxed_type_optimum(theta: float, V: float, model: CostModel, u: UtilityFn, F: TypeDistribution, outputs: OutputGrid, n_levels: int = 401) -> Dist:
    """Per-type relaxed problem with the cost level also chosen.

    Objective: implementation profit minus the information rent
    ``(1 - F)/f * K(level)``; the level is scanned on a uniform grid and the
    inner problem solved exactly at each.
    """
    z = model.z_values(outputs)
    rent = float((1.0 - F.cdf(theta)) / F.pdf(theta))
    best, best_val = None, -np.inf
    for level in np.linspace(z[0], z[-1], n_levels):
        mu = relaxed_type_problem(theta, V, float(level), model, u, outputs)
        val = float(mu.mass @ implementation_values(theta, V, float(level), model, u, outputs)) - rent * float(model.outer(level))
        if val > best_val:
            best, best_val = mu, val
    return best
