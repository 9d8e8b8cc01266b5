import warnings

import numpy as np
import pytest

from flexscreen.core import Dist, Mechanism, OutputGrid, TypeGrid, make_binary, make_dirac
from flexscreen.primitives import CostModel, KernelFn, OuterFn, TypeDistribution, UtilityFn, check_condition_example4
from flexscreen.solver import solve_example1, solve_example2
from flexscreen.transforms import (
    binary_transform,
    degenerate_transform,
    implementation_values,
    relaxed_type_optimum,
    relaxed_type_problem,
)
from flexscreen.wages import build_wage

LIN_U = UtilityFn.linear()


def _mechanism(types, outputs, dists, V, model, u):
    wages = np.vstack([build_wage(t, mu, v, model, u).pay for t, mu, v in zip(types.points, dists, V)])
    return Mechanism(types, outputs, wages, np.vstack([mu.mass for mu in dists]), np.asarray(V, dtype=float))


def _profit(mech, i):
    return float(mech.recommendations[i] @ (mech.outputs.points - mech.wages[i]))


def test_degenerate_fixed_point(ex1, quad_linear):
    out = degenerate_transform(ex1.mechanism, ex1.schedule, quad_linear, LIN_U)
    assert out == ex1.mechanism


def test_binary_fixed_point(ex2, square_outer):
    res = binary_transform(ex2.mechanism, ex2.schedule, square_outer, LIN_U, details=True)
    assert res.mechanism == ex2.mechanism
    assert np.max(np.abs(res.kappa_slack)) <= 1e-12


def test_degenerate_snaps_above_root():
    outputs = OutputGrid.linspace(0, 1, 101)
    model = CostModel.linear(KernelFn.power(2.0))
    types = TypeGrid(np.array([0.5]))
    mu = Dist(outputs, np.where((outputs.points == 0) | (outputs.points == 1), 0.5, 0.0))
    mech = _mechanism(types, outputs, [mu], [0.1], model, LIN_U)
    res = degenerate_transform(mech, None, model, LIN_U, details=True)
    k = int(res.mechanism.recommendation(0).support()[0])
    assert outputs.points[k] == pytest.approx(0.71)  # first grid point above sqrt(0.5) = 0.7071
    assert 0 <= res.kappa_slack[0] <= outputs.points[k] ** 2 - outputs.points[k - 1] ** 2
    assert res.mechanism.promised_utility[0] == 0.1


def test_binary_mid_point_half():
    outputs = OutputGrid.linspace(0, 1, 101)
    model = CostModel.linear(KernelFn.identity())
    types = TypeGrid(np.array([0.4]))
    mech = _mechanism(types, outputs, [make_dirac(outputs, 50)], [0.2], model, LIN_U)
    out = binary_transform(mech, None, model, LIN_U)
    assert out.recommendations[0, -1] == pytest.approx(0.5, abs=1e-15)
    assert out.recommendations[0, 0] == pytest.approx(0.5, abs=1e-15)


def _random_monotone_dists(rng, outputs, z, n_types):
    dists = [Dist(outputs, rng.dirichlet(np.full(len(outputs), 0.3))) for _ in range(n_types)]
    return sorted(dists, key=lambda mu: float(mu.mass @ z))


@pytest.mark.parametrize("seed", range(50))
def test_degenerate_revenue_not_lower(seed):
    rng = np.random.default_rng(seed)
    outputs = OutputGrid.linspace(0, 1, 41)
    b = rng.uniform(1.2, 3.0)
    model = CostModel.linear(KernelFn.power(b))
    u = UtilityFn.crra(rng.uniform(0.2, 0.8))
    types = TypeGrid.linspace(0.2, 0.8, 5)
    z = model.z_values(outputs)
    dists = _random_monotone_dists(rng, outputs, z, len(types))
    V = rng.uniform(0.5, 1.5) + np.arange(len(types)) * 0.01
    mech = _mechanism(types, outputs, dists, V, model, u)
    res = degenerate_transform(mech, None, model, u, details=True)
    assert np.array_equal(res.mechanism.promised_utility, mech.promised_utility)
    assert np.all(res.kappa_slack >= 0)
    for i, t in enumerate(types.points):
        # snapping up costs at most the extra wage for the extra cost level
        snap = float(u.inverse(V[i] + (1 - t) * (model.kappa(dists[i]) + res.kappa_slack[i])) - u.inverse(V[i] + (1 - t) * model.kappa(dists[i])))
        assert _profit(res.mechanism, i) >= _profit(mech, i) - snap - 1e-9


@pytest.mark.parametrize("seed", range(50))
def test_binary_revenue_not_lower(seed):
    rng = np.random.default_rng(1000 + seed)
    outputs = OutputGrid.linspace(0, 1, 41)
    model = CostModel.composite(KernelFn.power(rng.uniform(0.3, 0.95)), OuterFn.power(rng.uniform(1.0, 3.0)))
    types = TypeGrid.linspace(0.2, 0.8, 5)
    z = model.z_values(outputs)
    dists = _random_monotone_dists(rng, outputs, z, len(types))
    V = np.full(len(types), rng.uniform(0.0, 0.5))
    mech = _mechanism(types, outputs, dists, V, model, LIN_U)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = binary_transform(mech, None, model, LIN_U, details=True)
    assert np.array_equal(res.mechanism.promised_utility, mech.promised_utility)
    assert np.max(np.abs(res.kappa_slack)) <= 1e-9
    for i in range(len(types)):
        assert _profit(res.mechanism, i) >= _profit(mech, i) - 1e-9


def test_degenerate_refuses_concave_kernel(ex2, square_outer):
    model = CostModel.composite(KernelFn.power(0.5), OuterFn.power(2))
    with pytest.raises(ValueError):
        degenerate_transform(ex2.mechanism, None, model, LIN_U)


def test_binary_refuses():
    outputs = OutputGrid.linspace(0, 1, 21)
    types = TypeGrid(np.array([0.5]))
    mu = make_dirac(outputs, 10)
    convex = CostModel.linear(KernelFn.power(2.0))
    mech = _mechanism(types, outputs, [mu], [1.0], convex, LIN_U)
    with pytest.raises(ValueError, match="concave"):
        binary_transform(mech, None, convex, LIN_U)
    shifted = CostModel.linear(KernelFn.power(0.5, c=0.1))
    with pytest.raises(ValueError, match="z\\(x_min\\)"):
        binary_transform(mech, None, shifted, LIN_U)
    # affine kernel with concave utility: the curvature condition fails
    affine = CostModel.linear(KernelFn.identity())
    mech = _mechanism(types, outputs, [mu], [1.0], affine, UtilityFn.crra(0.5))
    with pytest.raises(ValueError, match="curvature condition"):
        binary_transform(mech, None, affine, UtilityFn.crra(0.5))


def test_binary_warns_when_A_decreases():
    outputs = OutputGrid.linspace(0, 1, 21)
    types = TypeGrid(np.array([0.2, 0.6]))
    model = CostModel.linear(KernelFn.power(0.5))
    dists = [make_binary(outputs, 0.5), make_binary(outputs, 0.6)]
    mech = _mechanism(types, outputs, dists, [0.0, 0.1], model, LIN_U)
    with pytest.warns(RuntimeWarning, match="nondecreasing"):
        res = binary_transform(mech, None, model, LIN_U, details=True)
    assert res.notes


def test_schedule_must_match(ex1, ex2, quad_linear):
    with pytest.raises(ValueError, match="schedule"):
        degenerate_transform(ex1.mechanism, ex2.schedule, quad_linear, LIN_U)


def test_implementation_values_linear():
    outputs = OutputGrid.linspace(0, 1, 11)
    model = CostModel.linear(KernelFn.power(2.0))
    y = implementation_values(0.5, 0.2, 0.3, model, LIN_U, outputs)
    np.testing.assert_allclose(y, outputs.points - (0.5 * outputs.points**2 + 0.2), atol=1e-15)


def test_relaxed_problem_convex_is_point_mass():
    outputs = OutputGrid.linspace(0, 1, 51)
    model = CostModel.linear(KernelFn.power(2.0))
    z = model.z_values(outputs)
    mu = relaxed_type_problem(0.4, 0.5, float(z[30]), model, UtilityFn.crra(0.5), outputs)
    assert mu.mass[30] >= 1 - 1e-6
    with pytest.raises(ValueError):
        relaxed_type_problem(0.4, 0.5, 2.0, model, UtilityFn.crra(0.5), outputs)


def test_relaxed_optimum_concave_is_binary():
    outputs = OutputGrid.linspace(0, 1, 41)
    model = CostModel.linear(KernelFn.power(0.5))
    F = TypeDistribution.uniform(0.2, 0.8)
    mu = relaxed_type_optimum(0.5, 0.0, model, LIN_U, F, outputs, n_levels=51)
    assert mu.mass[0] + mu.mass[-1] >= 1 - 1e-6


def test_transforms_on_solver_output_stay_ic(quad_linear, square_outer, uniform, types, outputs):
    from flexscreen.verify import verify

    res = solve_example1(quad_linear, uniform, types, outputs, run_verify=False)
    assert verify(degenerate_transform(res.mechanism, None, quad_linear, LIN_U), quad_linear, LIN_U).ic
    res = solve_example2(square_outer, uniform, types, outputs, run_verify=False)
    assert verify(binary_transform(res.mechanism, None, square_outer, LIN_U), square_outer, LIN_U).ic


def _condition_instances(n):
    from flexscreen.primitives import DomainError

    out = []
    g = OutputGrid.linspace(0, 1, 101)
    for i in range(n):
        rng = np.random.default_rng(9000 + i)
        model = CostModel.composite(KernelFn.power(rng.uniform(0.3, 0.95)), OuterFn.power(rng.uniform(1.0, 3.0)))
        u = [UtilityFn.crra(rng.uniform(0.1, 0.9)), UtilityFn.cara(rng.uniform(0.1, 2.0)), UtilityFn.log_shifted(rng.uniform(0.5, 2.0))][i % 3]
        theta, level, V = rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.95), rng.uniform(0.5, 3.0)
        dK = float(model.outer.derivative(level))
        A, B = (1 - theta) * dK, V + (1 - theta) * (float(model.outer(level)) - dK * level)
        if B <= 0:
            continue
        try:
            mu = relaxed_type_problem(theta, V, level, model, u, g)
        except DomainError:
            continue
        out.append((u, model, A, B, g, float(mu.mass[0] + mu.mass[-1])))
    return out


def test_condition_at_wage_level_implies_binary_support():
    # u', u'' evaluated at the implementing wage u^{-1}(Az+B): convexity of the
    # principal's integrand in z, hence extreme support, on every admitted instance
    admitted = 0
    for u, model, A, B, g, ext in _condition_instances(150):
        if check_condition_example4(u, model.kernel, A, B, g, evaluate_at="wage"):
            admitted += 1
            assert ext >= 1 - 1e-6
    assert admitted >= 40


def test_condition_as_displayed_admits_interior_optima():
    # with u', u'' at the utility level Az+B the condition is not sufficient
    counter = [ext for u, model, A, B, g, ext in _condition_instances(150) if check_condition_example4(u, model.kernel, A, B, g) and ext < 1 - 1e-6]
    assert counter
