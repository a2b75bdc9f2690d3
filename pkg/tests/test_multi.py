import numpy as np
import pytest

from core.geometry import Box, unit_ball
from core.model import ConstraintFamily, LinearConstraintFamily, ModeledFunction, linear_model
from core.problems import affine, constant, fts_problem, generate_fts, norm_distance, reference_optimum
from solvers.base import SolverConfig
from solvers.deterministic import solve_multi_v1, solve_multi_v2, solve_relative_v1, solve_relative_v2
from utils.errors import ConfigurationError


def _fts(n, r, m, seed=5):
    return fts_problem(generate_fts(n, r, m, seed))


def test_single_constraint_matches_v1(euclid):
    problem = _fts(4, 5, 1)
    g = problem.constraints[0]
    cfg = SolverConfig(epsilon=0.25, M_g=g.M, trace=True)
    single = solve_relative_v1(problem.objective, g, euclid, unit_ball(4), cfg)
    multi = solve_multi_v1(problem.objective, ConstraintFamily([g]), euclid, unit_ball(4), cfg)
    np.testing.assert_array_equal(single.x_hat, multi.x_hat)
    for a, b in zip(single.ledger.records, multi.ledger.records):
        np.testing.assert_array_equal(a.iterate, b.iterate)
    assert single.ledger.trace_lines() == multi.ledger.trace_lines()


def test_single_constraint_matches_v2(euclid):
    problem = _fts(4, 5, 1)
    g = problem.constraints[0]
    cfg = SolverConfig(epsilon=0.25, M_g=g.M)
    single = solve_relative_v2(problem.objective, g, euclid, unit_ball(4), cfg)
    multi = solve_multi_v2(problem.objective, [g], euclid, unit_ball(4), cfg)
    np.testing.assert_array_equal(single.x_hat, multi.x_hat)
    assert single.ledger.trace_lines() == multi.ledger.trace_lines()


def test_only_violated_constraint_drives_steps(euclid):
    f = norm_distance(np.array([0.0, 0.0]))
    never = constant(-1.0, 2)
    shifted = affine(np.array([2.0, 0.0]), -1.5)     # 2 x_1 + 1.5 > 0 near the start
    cfg = SolverConfig(epsilon=0.5, M_f=1.0, M_g=(1.0, 2.0), x0=np.array([0.0, 0.0]))
    report = solve_multi_v1(f, [never, shifted], euclid, unit_ball(2), cfg)
    nonproductive = [r for r in report.ledger.records if r.kind == 'N']
    assert nonproductive
    assert all(r.constraint_index == 1 for r in nonproductive)
    assert all(r.h == pytest.approx(0.5 / 2.0) for r in nonproductive)


def test_lowest_violated_index_selected(euclid):
    f = norm_distance(np.array([0.0]))
    cfg = SolverConfig(epsilon=0.1, M_g=(1.0, 1.0, 1.0), theta0_sq=0.5, x0=np.array([0.9]))
    constraints = [constant(-1.0, 1), affine([1.0], 0.2), affine([1.0], 0.1)]
    report = solve_multi_v2(f, constraints, euclid, Box([-1.0], [1.0]), cfg)
    assert report.ledger.records[0].kind == 'N'
    assert report.ledger.records[0].constraint_index == 1


def test_constant_count_mismatch_rejected(euclid):
    f = norm_distance(np.array([0.0]))
    cfg = SolverConfig(epsilon=0.1, M_g=(1.0, 2.0))
    with pytest.raises(ConfigurationError):
        solve_multi_v1(f, [constant(-1.0, 1)] * 3, euclid, Box([-1.0], [1.0]), cfg)


def test_one_dimensional_two_constraint_example(euclid):
    f = norm_distance(np.array([0.9]))
    g1, g2 = affine([1.0], 0.95), affine([2.0], 1.9)
    Q = Box([0.0], [1.0])
    eps = 0.05
    cfg = SolverConfig(epsilon=eps, M_f=1.0, M_g=(1.0, 2.0), theta0_sq=0.5)
    for solve, g_bound in ((solve_multi_v1, 2.0 * eps), (solve_multi_v2, eps)):
        report = solve(f, [g1, g2], euclid, Q, cfg)
        assert report.constraint_value <= g_bound + 1e-9
        assert report.objective_value - 0.0 <= report.guarantee.objective_gap + 1e-9


def test_equal_constants_match_v2_criterion(euclid):
    problem = _fts(3, 4, 6)
    M = max(problem.constraints.constants)
    cfg = SolverConfig(epsilon=0.25, M_g=(M,) * 6)
    multi = solve_multi_v2(problem.objective, problem.constraints, euclid, unit_ball(3), cfg)
    weight = multi.productive_count + multi.nonproductive_count / M ** 2
    assert weight >= 2 * 2.0 / 0.25 ** 2 * (1 - 1e-12)
    previous = weight - (1.0 if multi.ledger.records[-1].kind == 'P' else 1.0 / M ** 2)
    assert previous < 2 * 2.0 / 0.25 ** 2


class _CountingRows(LinearConstraintFamily):
    """Linear constraints whose subgradient oracles count their calls."""

    def __init__(self, family):
        super().__init__(family.rows, family.offsets)
        self._constants = family.constants
        self.calls = 0

    def __getitem__(self, p):
        fn = super().__getitem__(p)

        def oracle(x, inner=fn.model.subgradient):
            self.calls += 1
            return inner(x)

        return ModeledFunction(fn.value, linear_model(oracle, fn.M), name=fn.name)


@pytest.mark.slow
@pytest.mark.parametrize('solve,eps', [(solve_multi_v1, 0.25), (solve_multi_v2, 0.5)])
def test_one_constraint_subgradient_per_nonproductive_step(solve, eps, euclid):
    problem = _fts(100, 50, 200, seed=1)
    constraints = _CountingRows(problem.constraints)
    cfg = SolverConfig(epsilon=eps, M_g=constraints.constants)
    report = solve(problem.objective, constraints, euclid, unit_ball(100), cfg)
    assert report.nonproductive_count > 0
    assert constraints.calls == report.nonproductive_count
    assert report.ledger.constraint_subgradient_calls == constraints.calls
    assert report.ledger.objective_subgradient_calls == report.productive_count


@pytest.mark.slow
@pytest.mark.parametrize('seed', range(3))
def test_several_constraint_guarantees_on_downsized_instance(seed, euclid):
    eps = 0.1
    problem = _fts(10, 10, 20, seed=seed)
    Q = unit_ball(10)
    f_star = reference_optimum(problem, euclid, Q, eps / 100).f_star
    constants = problem.constraints.constants
    cfg = SolverConfig(epsilon=eps, M_g=constants)

    v1 = solve_multi_v1(problem.objective, problem.constraints, euclid, Q, cfg)
    assert v1.constraint_value <= max(constants) * eps + 1e-9
    assert v1.objective_value - f_star <= max(1.0, max(constants)) * eps + 1e-9

    v2 = solve_multi_v2(problem.objective, problem.constraints, euclid, Q, cfg)
    assert v2.constraint_value <= eps + 1e-9
    assert v2.objective_value - f_star <= eps + 1e-9
