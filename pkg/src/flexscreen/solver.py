"""Optimal mechanisms for the tractable cost families with a risk-neutral principal."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_types
from .core import GenSchedule, Mechanism, OutputGrid, TypeGrid, make_binary, make_dirac
from .primitives import (
    CostModel,
    RegularityReport,
    TypeDistribution,
    UtilityFn,
    check_regularity,
    virtual_value,
)
from .verify import ICReport, populate_schedule, verify
from .wages import build_wage, example2_wages, monotonize, pooled_slopes

LINEAR_U = UtilityFn.linear()


@dataclass
class RevenueReport:
    direct: float
    virtual: float

    @property
    def difference(self) -> float:
        return self.direct - self.virtual


@dataclass
class SolveResult:
    mechanism: Mechanism
    schedule: GenSchedule
    revenue: RevenueReport
    regularity: RegularityReport
    actions: np.ndarray  # x_theta (pointwise output) or p_theta (top-output probability)
    corners: np.ndarray  # whether the action hit a bound of its range
    example: int
    report: ICReport | None = None
    notes: list = field(default_factory=list)

    @property
    def regular(self) -> bool:
        if self.example == 2:
            return self.regularity.virtual_value_decreasing and self.regularity.hazard_increasing
        return self.regularity.virtual_value_decreasing

    @property
    def wage_gaps(self) -> np.ndarray:
        """Top minus bottom wage per type."""
        w = self.mechanism.wages
        return w[:, -1] - w[:, 0]


def _envelope_utilities(types: TypeGrid, kappa: np.ndarray, v_low: float) -> np.ndarray:
    if len(types) == 1:
        return np.array([v_low])
    return v_low + cumulative_trapezoid(kappa, types.points, initial=0.0)


def _check_v_low(v_low: float) -> float:
    v_low = float(v_low)
    if v_low < 0:
        raise ValueError("the lowest type must get at least the outside option (V >= 0)")
    return v_low


# ---------------------------------------------------------------------------
# pointwise problems


def pointwise_output(model: CostModel, F: TypeDistribution, theta, outputs: OutputGrid) -> np.ndarray:
    """Grid argmax of ``x - vv(theta) * K(z(x))``; ties go to the larger output."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x = outputs.points
    kappa = np.asarray(model.outer(model.z_values(outputs)), dtype=float)
    vv = np.asarray(virtual_value(F, theta), dtype=float)
    obj = x[None, :] - vv[:, None] * kappa[None, :]
    best = obj.max(axis=1, keepdims=True)
    tied = obj >= best - 1e-12 * (1.0 + np.abs(best))
    return x.size - 1 - np.argmax(tied[:, ::-1], axis=1)


def top_probability(model: CostModel, F: TypeDistribution, theta, outputs: OutputGrid) -> np.ndarray:
    """Probability of the top output solving the binary-support first-order condition.

    ``(x_hi - x_lo)/(z_hi - z_lo) - vv(theta) K'(z_lo + p (z_hi - z_lo))`` is
    nonincreasing in ``p``; corners are settled by its sign, the interior by
    bisection.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    z = model.z_values(outputs)
    z_lo, z_hi = float(z[0]), float(z[-1])
    dz = z_hi - z_lo
    ratio = (outputs.high - outputs.low) / dz
    K = model.outer
    out = np.empty(theta.size)
    for k, t in enumerate(theta):
        vv = float(virtual_value(F, t))

        def foc(p):
            return ratio - vv * float(K.derivative(z_lo + p * dz))

        if foc(1.0) >= 0:
            out[k] = 1.0
            continue
        if foc(0.0) <= 0:
            out[k] = 0.0
            continue
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if foc(mid) >= 0:
                lo = mid
            else:
                hi = mid
        out[k] = 0.5 * (lo + hi)
    return out


# ---------------------------------------------------------------------------
# revenue


def revenue(mech: Mechanism, F: TypeDistribution, model: CostModel, u: UtilityFn = LINEAR_U) -> RevenueReport:
    """Principal's expected profit computed directly and via virtual surplus.

    The virtual form is only meaningful for linear utility; for other ``u``
    it is reported as NaN. Both integrals use the trapezoid rule on the type grid.
    """
    th = mech.types.points
    x = mech.outputs.points
    f = F.pdf(th)
    profit = np.einsum("ij,ij->i", mech.recommendations, x[None, :] - mech.wages)
    if th.size == 1:
        direct = float(profit[0])
    else:
        direct = float(trapezoid(f * profit, th))
    if not u.is_linear:
        return RevenueReport(direct, float("nan"))
    z = model.z_values(mech.outputs)
    kappa = np.asarray(model.outer(mech.recommendations @ z), dtype=float)
    surplus = mech.recommendations @ x - virtual_value(F, th) * kappa
    if th.size == 1:
        virt = float(mech.recommendations[0] @ x - (1 - th[0]) * kappa[0]) - mech.promised_utility[0]
    else:
        virt = float(trapezoid(f * surplus, th)) - float(mech.promised_utility[0])
    return RevenueReport(direct, virt)


def revenue_tolerance(mech: Mechanism, F: TypeDistribution, model: CostModel) -> float:
    """Combined trapezoid error scale of the integrals entering the two revenue forms."""
    th = mech.types.points
    if th.size < 3:
        return 1e-12
    z = model.z_values(mech.outputs)
    x = mech.outputs.points
    f = F.pdf(th)
    kappa = np.asarray(model.outer(mech.recommendations @ z), dtype=float)
    profit = np.einsum("ij,ij->i", mech.recommendations, x[None, :] - mech.wages)
    pieces = [
        f * profit,
        f * mech.promised_utility,
        (1.0 - F.cdf(th)) * kappa,
        f * (mech.recommendations @ x - (1.0 - th) * kappa),
    ]
    h = float(np.max(np.diff(th)))
    width = th[-1] - th[0]
    total = 0.0
    for g in pieces:
        d2 = np.diff(g, 2)  # ~ h^2 g''
        total += width / 12.0 * float(np.max(np.abs(d2)))
    return max(total, 1e-12 * h)


# ---------------------------------------------------------------------------
# solvers


def solve_example1(model: CostModel, F: TypeDistribution, types: TypeGrid, outputs: OutputGrid, v_low: float = 0.0, wage_mode: str = "punish-off-support", run_verify: bool = True) -> SolveResult:
    """Pointwise virtual-surplus maximisation over point masses (convex kernel).

    Each type gets ``delta_{x_theta}``; wages follow the obedience bound on the
    support, a punishing floor below and are then made nondecreasing, which
    yields the flat-above step wage.
    """
    v_low = _check_v_low(v_low)
    if not model.kernel.is_convex_on(outputs):
        raise ValueError("pointwise point-mass solution requires a convex kernel")
    th = types.points
    idx = pointwise_output(model, F, th, outputs)
    recs = [make_dirac(outputs, int(i)) for i in idx]
    kappa = np.array([model.kappa(mu) for mu in recs])
    V = _envelope_utilities(types, kappa, v_low)
    wages = np.vstack(
        [monotonize(build_wage(t, mu, v, model, LINEAR_U, mode=wage_mode)).pay for t, mu, v in zip(th, recs, V)]
    )
    mech = Mechanism(types, outputs, wages, np.vstack([mu.mass for mu in recs]), V)
    corners = (idx == 0) | (idx == len(outputs) - 1)
    return _finish(mech, model, F, types, outputs.points[idx], corners, 1, run_verify)


def solve_example2(model: CostModel, F: TypeDistribution, types: TypeGrid, outputs: OutputGrid, v_low: float = 0.0, run_verify: bool = True) -> SolveResult:
    """Binary-support solution (concave kernel): top-output probability from the FOC.

    Corner runs (``p`` stuck at 0 or 1) are pooled onto a single contract.
    """
    v_low = _check_v_low(v_low)
    if model.family != "composite":
        raise ValueError("binary-support solver needs the composite cost family")
    if not model.kernel.is_concave_on(outputs):
        raise ValueError("binary-support solution requires a concave kernel")
    th = types.points
    p = top_probability(model, F, th, outputs)
    recs = [make_binary(outputs, float(pi)) for pi in p]
    kappa = np.array([model.kappa(mu) for mu in recs])
    _, slope = pooled_slopes(th, p, model, outputs)
    dz = float(np.ptp(model.z_values(outputs)))
    # consecutive types with equal slopes must share one contract; the first
    # of each group takes its utility from the envelope, the others from the
    # group contract
    V = np.empty(th.size)
    wages = np.empty((th.size, len(outputs)))
    shared = 0
    for k in range(th.size):
        if k > 0 and slope[k] == slope[k - 1]:
            wages[k] = wages[k - 1]
            V[k] = (1.0 - p[k]) * wages[k, 0] + p[k] * wages[k, -1] - model.cost(th[k], recs[k])
            shared += 1
            continue
        V[k] = v_low if k == 0 else V[k - 1] + 0.5 * (th[k] - th[k - 1]) * (kappa[k] + kappa[k - 1])
        wages[k] = example2_wages(th[k], float(p[k]), float(V[k]), model, LINEAR_U, outputs, gap=slope[k] * dz).pay
    mech = Mechanism(types, outputs, wages, np.vstack([mu.mass for mu in recs]), V)
    notes = []
    if shared:
        notes.append(f"pooled {shared} types onto shared contracts")
    return _finish(mech, model, F, types, p, (p == 0.0) | (p == 1.0), 2, run_verify, notes)


def _finish(mech, model, F, types, actions, corners, example, run_verify, notes=None) -> SolveResult:
    schedule = populate_schedule(mech, model, LINEAR_U)
    reg = check_regularity(F, types)
    report = verify(mech, model, LINEAR_U, schedule) if run_verify else None
    notes = list(notes or [])
    regular = reg.virtual_value_decreasing and (example == 1 or reg.hazard_increasing)
    if not regular:
        notes.append("type distribution is irregular; pointwise solution may violate monotonicity")
    return SolveResult(
        mechanism=mech,
        schedule=schedule,
        revenue=revenue(mech, F, model, LINEAR_U),
        regularity=reg,
        actions=np.asarray(actions, dtype=float),
        corners=np.asarray(corners, dtype=bool),
        example=example,
        report=report,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# estimator facade


class OptimalMechanism(BaseEstimator):
    """Optimal screening mechanism as an estimator.

    ``fit`` takes the type grid (array of types, shape ``(m,)`` or
    ``(m, 1)``) and solves on it; ``predict`` returns the pointwise optimal
    action for arbitrary types (output level for ``example=1``, top-output
    probability for ``example=2``); ``transform`` returns the wage rows for
    the nearest fitted types.

    Parameters
    ----------
    cost_model : CostModel
    type_distribution : TypeDistribution
    outputs : OutputGrid or array-like
    example : {1, 2, "auto"}
        ``"auto"`` picks 1 for convex kernels, 2 for strictly concave ones.
    v_low : float
        Promised utility of the lowest type.
    verify : bool
        Attach an incentive-compatibility report to the result.
    """

    def __init__(self, cost_model=None, type_distribution=None, outputs=None, example="auto", v_low=0.0, verify=True):
        self.cost_model = cost_model
        self.type_distribution = type_distribution
        self.outputs = outputs
        self.example = example
        self.v_low = v_low
        self.verify = verify

    def _outputs(self) -> OutputGrid:
        if isinstance(self.outputs, OutputGrid):
            return self.outputs
        if self.outputs is None:
            raise ValueError("outputs must be given")
        return OutputGrid(np.asarray(self.outputs, dtype=float))

    def _example(self, outputs) -> int:
        if self.example in (1, 2):
            return int(self.example)
        if self.example != "auto":
            raise ValueError(f"example must be 1, 2 or 'auto', got {self.example!r}")
        kernel = self.cost_model.kernel
        if kernel.is_convex_on(outputs):
            return 1
        if kernel.is_concave_on(outputs):
            return 2
        raise ValueError("kernel is neither convex nor concave on the output grid")

    def fit(self, X, y=None):
        if self.cost_model is None or self.type_distribution is None:
            raise ValueError("cost_model and type_distribution are required")
        theta = check_types(X)
        types = TypeGrid(theta)
        outputs = self._outputs()
        example = self._example(outputs)
        solve = solve_example1 if example == 1 else solve_example2
        self.result_ = solve(self.cost_model, self.type_distribution, types, outputs, self.v_low, run_verify=self.verify)
        self.example_ = example
        self.types_ = types
        self.mechanism_ = self.result_.mechanism
        self.schedule_ = self.result_.schedule
        self.revenue_ = self.result_.revenue.direct
        self.regularity_ = self.result_.regularity
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "result_")
        theta = check_types(X, sorted_=False)
        outputs = self._outputs()
        if self.example_ == 1:
            return outputs.points[pointwise_output(self.cost_model, self.type_distribution, theta, outputs)]
        return top_probability(self.cost_model, self.type_distribution, theta, outputs)

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "result_")
        theta = check_types(X, sorted_=False)
        grid = self.types_.points
        nearest = np.abs(theta[:, None] - grid[None, :]).argmin(axis=1)
        return self.mechanism_.wages[nearest]

    def score(self, X, y=None) -> float:
        """Direct-form expected profit of the fitted mechanism."""
        check_is_fitted(self, "result_")
        return float(self.revenue_)
