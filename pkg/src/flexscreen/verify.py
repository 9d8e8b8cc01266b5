"""Incentive-compatibility certificates.

Two independent routes: the four-condition characterisation (envelope,
generalised monotonicity, on-path and off-path obedience) and a brute-force
scan over every report followed by the agent's best action.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .best_response import UpperHull, agent_utility, solve_on_hull_many
from .core import GenSchedule, Mechanism
from .primitives import CostModel, UtilityFn
from .wages import obedience_bound

OBEDIENCE_TOL = 1e-8
BRUTE_FORCE_TOL = 1e-6
#: disagreements inside this multiple of a tolerance are "indeterminate"
BAND = 10.0


def _kappa_rows(mech: Mechanism, model: CostModel, recs: np.ndarray) -> np.ndarray:
    """``-dC/dtheta`` for every row of ``recs`` (last axis is the output grid)."""
    z = model.z_values(mech.outputs)
    return np.asarray(model.outer(recs @ z), dtype=float)


def quadrature_tolerance(mech: Mechanism, model: CostModel) -> float:
    """Trapezoid error scale ``(range / 12) * h^2 * max|kappa''|`` on the type grid.

    ``h^2 kappa''`` is estimated by second differences of the on-path cost
    level; a relative floor keeps the tolerance above round-off.
    """
    kappa = _kappa_rows(mech, model, mech.recommendations)
    th = mech.types.points
    floor = 1e-10 * (1.0 + float(np.max(np.abs(mech.promised_utility))))
    if th.size < 3:
        return floor
    width = th[-1] - th[0]
    h = np.diff(th)
    # second divided differences scaled back by the local spacing squared
    d2 = 2.0 * np.diff(np.diff(kappa) / h) / (h[1:] + h[:-1]) * np.maximum(h[1:], h[:-1]) ** 2
    return max(width / 12.0 * float(np.max(np.abs(d2))), floor)


# ---------------------------------------------------------------------------
# best responses for every (true type, report) pair


@dataclass
class PairResponses:
    recs: np.ndarray  # (m, m, n) selected distribution for true type i, report j
    values: np.ndarray  # (m, m) agent value
    ties: bool  # whether any linear-family argmax was non-unique


def pair_best_responses(mech: Mechanism, model: CostModel, u: UtilityFn, selection: str = "largest") -> PairResponses:
    if selection not in ("largest", "smallest"):
        raise ValueError("selection must be 'largest' or 'smallest'")
    m, n = len(mech.types), len(mech.outputs)
    th = mech.types.points
    z = model.z_values(mech.outputs)
    uw = np.asarray(u(mech.wages), dtype=float)
    recs = np.zeros((m, m, n))
    values = np.empty((m, m))
    ties = False
    if model.family == "linear":
        scores = uw[None, :, :] - (1.0 - th)[:, None, None] * z[None, None, :]
        best = scores.max(axis=2, keepdims=True)
        tied = scores >= best - 1e-9
        ties = bool(np.any(tied.sum(axis=2) > 1))
        if selection == "largest":
            idx = n - 1 - np.argmax(tied[:, :, ::-1], axis=2)
        else:
            idx = np.argmax(tied, axis=2)
        ii, jj = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        recs[ii, jj, idx] = 1.0
        values = scores[ii, jj, idx]
        return PairResponses(recs, values, ties)
    for j in range(m):
        hull = UpperHull(z, uw[j])
        recs[:, j] = solve_on_hull_many(hull, mech.outputs, th, model)
        values[:, j] = recs[:, j] @ uw[j] - (1.0 - th) * np.asarray(model.outer(recs[:, j] @ z), dtype=float)
    return PairResponses(recs, values, ties)


def populate_schedule(mech: Mechanism, model: CostModel, u: UtilityFn, selection: str = "largest") -> GenSchedule:
    """Fill every off-diagonal cell with the agent's best response; copy the diagonal."""
    recs = pair_best_responses(mech, model, u, selection).recs
    idx = np.arange(len(mech.types))
    recs[idx, idx] = mech.recommendations
    return GenSchedule(mech, recs)


# ---------------------------------------------------------------------------
# the four conditions


def check_envelope(mech: Mechanism, model: CostModel) -> np.ndarray:
    """``V(theta) - V(theta_min) - trapezoid(-dC/dtheta along the on-path schedule)``."""
    th = mech.types.points
    V = mech.promised_utility
    if th.size == 1:
        return np.zeros(1)
    integrand = np.array(
        [-model.dcost_dtheta(t, mech.recommendation(i)) for i, t in enumerate(th)]
    )
    rent = cumulative_trapezoid(integrand, th, initial=0.0)
    return V - V[0] - rent


def monotonicity_integrals(mech: Mechanism, sched: GenSchedule, model: CostModel) -> np.ndarray:
    """Signed integrals ``I[i, j]`` from report ``theta_j`` up to true type ``theta_i``.

    Integrand ``-dC/dtheta(t, mu_t) + dC/dtheta(t, mu_{t, theta_j})``.
    """
    if sched.mechanism is not mech and not sched.mechanism == mech:
        raise ValueError("schedule was built for a different mechanism")
    th = mech.types.points
    m = th.size
    if m == 1:
        return np.zeros((1, 1))
    on_path = _kappa_rows(mech, model, mech.recommendations)  # (m,)
    off_path = _kappa_rows(mech, model, sched.recs)  # (m_t, m_j)
    diff = on_path[:, None] - off_path
    cum = cumulative_trapezoid(diff, th, axis=0, initial=0.0)  # cum[t, j]
    # I[i, j] = cum[i, j] - cum[j, j]
    return cum - np.diag(cum)[None, :]


def check_gen_monotonicity(mech: Mechanism, sched: GenSchedule, model: CostModel) -> float:
    """Minimum of the generalised monotonicity integrals over all grid pairs."""
    return float(monotonicity_integrals(mech, sched, model).min())


@dataclass
class ObedienceResiduals:
    on_path_excess: np.ndarray  # per type: max_x u(w(x)) - bound(x); > 0 is a violation
    on_path_equality: np.ndarray  # per type: max over support |u(w) - bound|
    off_path_gap: np.ndarray  # per pair: best value - value of the scheduled action

    def on_path_worst(self) -> float:
        return float(max(self.on_path_excess.max(), self.on_path_equality.max()))

    def off_path_worst(self) -> float:
        return float(self.off_path_gap.max())


def check_obedience(mech: Mechanism, sched: GenSchedule, model: CostModel, u: UtilityFn, responses: PairResponses | None = None) -> ObedienceResiduals:
    m = len(mech.types)
    th = mech.types.points
    uw = np.asarray(u(mech.wages), dtype=float)
    excess = np.empty(m)
    equality = np.empty(m)
    for i in range(m):
        mu = mech.recommendation(i)
        bound = obedience_bound(th[i], mu, mech.promised_utility[i], model)
        gap = uw[i] - bound
        excess[i] = gap.max()
        equality[i] = np.abs(gap[mu.support()]).max()
    if responses is None:
        responses = pair_best_responses(mech, model, u)
    off = np.zeros((m, m))
    z = model.z_values(mech.outputs)
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            mu = sched.recs[i, j]
            scheduled = float(mu @ uw[j]) - (1.0 - th[i]) * float(model.outer(mu @ z))
            off[i, j] = responses.values[i, j] - scheduled
    return ObedienceResiduals(excess, equality, off)


def brute_force_gains(mech: Mechanism, model: CostModel, u: UtilityFn, responses: PairResponses | None = None) -> np.ndarray:
    """``gain[i, j] = max_mu U(theta_i, w_j, mu) - U(theta_i, w_i, mu_i)``, diagonal included."""
    if responses is None:
        responses = pair_best_responses(mech, model, u)
    th = mech.types.points
    truthful = np.array(
        [agent_utility(t, mech.wage(i), mech.recommendation(i), model, u) for i, t in enumerate(th)]
    )
    return responses.values - truthful[:, None]


def brute_force_ic(mech: Mechanism, model: CostModel, u: UtilityFn) -> float:
    """Worst gain from any report followed by any action (``<= tol`` means IC)."""
    return float(brute_force_gains(mech, model, u).max())


# ---------------------------------------------------------------------------
# report


@dataclass
class ICReport:
    envelope_residuals: np.ndarray
    gen_monotonicity_min: float
    gen_monotonicity_range: tuple
    obedience_on_path: np.ndarray
    obedience_off_path: np.ndarray
    brute_force_worst: float
    quadrature_tol: float
    obedience_tol: float = OBEDIENCE_TOL
    brute_force_tol: float = BRUTE_FORCE_TOL
    selection_dependent: bool = False
    worst_pair: tuple = (0, 0)
    verdicts: dict = field(default_factory=dict)

    def __post_init__(self):
        env = float(np.max(np.abs(self.envelope_residuals)))
        self.verdicts = {
            "envelope": env <= self.quadrature_tol,
            "generalized_monotonicity": max(self.gen_monotonicity_range) >= -self.quadrature_tol,
            "on_path_obedience": float(np.max(self.obedience_on_path)) <= self.obedience_tol,
            "off_path_obedience": float(np.max(self.obedience_off_path, initial=0.0)) <= self.obedience_tol,
        }
        self._margins = {
            "envelope": env / self.quadrature_tol,
            "generalized_monotonicity": -max(self.gen_monotonicity_range) / self.quadrature_tol,
            "on_path_obedience": float(np.max(self.obedience_on_path)) / self.obedience_tol,
            "off_path_obedience": float(np.max(self.obedience_off_path, initial=0.0)) / self.obedience_tol,
        }

    @property
    def conditions_ic(self) -> bool:
        return all(self.verdicts.values())

    @property
    def brute_ic(self) -> bool:
        return self.brute_force_worst <= self.brute_force_tol

    @property
    def failed_conditions(self) -> list:
        return [name for name, ok in self.verdicts.items() if not ok]

    @property
    def agreement(self) -> str:
        """``agree``, ``indeterminate`` (disagreement inside the band) or ``contradiction``."""
        if self.conditions_ic == self.brute_ic:
            return "agree"
        if self.conditions_ic:
            band = BAND * max(self.brute_force_tol, self.quadrature_tol)
            return "indeterminate" if self.brute_force_worst <= band else "contradiction"
        worst = max(self._margins[name] for name in self.failed_conditions)
        return "indeterminate" if worst <= BAND else "contradiction"

    @property
    def ic(self) -> bool:
        return self.conditions_ic and self.brute_ic

    def verdict_line(self) -> str:
        if self.ic:
            return f"IC: yes (worst deviation gain {self.brute_force_worst:.3e})"
        failed = ", ".join(self.failed_conditions) or "none"
        return (
            f"IC: no (failed conditions: {failed}; worst deviation gain "
            f"{self.brute_force_worst:.3e} at type {self.worst_pair[0]} reporting {self.worst_pair[1]}; "
            f"{self.agreement})"
        )

    def as_dict(self) -> dict:
        return {
            "ic": self.ic,
            "conditions_ic": self.conditions_ic,
            "brute_force_ic": self.brute_ic,
            "agreement": self.agreement,
            "verdicts": dict(self.verdicts),
            "failed_conditions": self.failed_conditions,
            "envelope_residuals": [float(v) for v in self.envelope_residuals],
            "gen_monotonicity_min": self.gen_monotonicity_min,
            "gen_monotonicity_range": [float(v) for v in self.gen_monotonicity_range],
            "obedience_on_path": [float(v) for v in self.obedience_on_path],
            "obedience_off_path_worst": float(np.max(self.obedience_off_path, initial=0.0)),
            "brute_force_worst": self.brute_force_worst,
            "worst_pair": [int(v) for v in self.worst_pair],
            "selection_dependent": self.selection_dependent,
            "tolerances": {
                "quadrature": self.quadrature_tol,
                "obedience": self.obedience_tol,
                "brute_force": self.brute_force_tol,
            },
        }


def verify(mech: Mechanism, model: CostModel, u: UtilityFn, schedule: GenSchedule | None = None, obedience_tol: float = OBEDIENCE_TOL, brute_force_tol: float = BRUTE_FORCE_TOL) -> ICReport:
    """Run both certificates.

    Without ``schedule`` the generalised recommendation schedule is populated
    with best responses; with linear-family ties, monotonicity is evaluated
    under both extreme selections and passes if either does.
    """
    responses = pair_best_responses(mech, model, u, "largest")
    given = schedule is not None
    if schedule is None:
        recs = responses.recs.copy()
        idx = np.arange(len(mech.types))
        recs[idx, idx] = mech.recommendations
        schedule = GenSchedule(mech, recs)
    mono = check_gen_monotonicity(mech, schedule, model)
    mono_range = (mono, mono)
    if responses.ties and not given:
        alt = populate_schedule(mech, model, u, "smallest")
        mono_range = (mono, check_gen_monotonicity(mech, alt, model))
    obey = check_obedience(mech, schedule, model, u, responses)
    gains = brute_force_gains(mech, model, u, responses)
    worst = np.unravel_index(int(np.argmax(gains)), gains.shape)
    on_path = np.maximum(obey.on_path_excess, obey.on_path_equality)
    return ICReport(
        envelope_residuals=check_envelope(mech, model),
        gen_monotonicity_min=mono,
        gen_monotonicity_range=mono_range,
        obedience_on_path=on_path,
        obedience_off_path=obey.off_path_gap,
        brute_force_worst=float(gains.max()),
        quadrature_tol=quadrature_tolerance(mech, model),
        obedience_tol=obedience_tol,
        brute_force_tol=brute_force_tol,
        selection_dependent=responses.ties and not given,
        worst_pair=(int(worst[0]), int(worst[1])),
    )
