"""Screening with flexible hidden actions: optimal mechanisms, wage construction
and incentive-compatibility certificates on discretised type and output spaces."""

from .best_response import BestResponse, UpperHull, agent_utility, best_response, best_response_composite, best_response_linear, best_response_oracle, project_simplex
from .core import Dist, GenSchedule, Mechanism, OutputGrid, TypeGrid, WageSchedule, expectation, fosd_leq, make_binary, make_dirac
from .primitives import (
    CostModel,
    DomainError,
    KernelFn,
    OuterFn,
    RegularityReport,
    TypeDistribution,
    UtilityFn,
    check_condition_example4,
    check_condition_margins,
    check_regularity,
    validate_cost_model,
    virtual_value,
)
from .solver import OptimalMechanism, RevenueReport, SolveResult, revenue, solve_example1, solve_example2
from .transforms import binary_transform, degenerate_transform, relaxed_type_problem
from .verify import ICReport, brute_force_ic, check_envelope, check_gen_monotonicity, check_obedience, populate_schedule, verify
from .wages import build_wage, example2_wages, monotonize, obedience_bound

__version__ = "0.1.0"
