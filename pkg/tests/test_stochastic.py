import csv

import numpy as np
import pytest

from core.geometry import Box
from core.problems import affine, constant, norm_distance
from solvers.base import SolverConfig
from solvers.deterministic import solve_model_general
from solvers.stochastic import (CONSTRAINT_ORACLE, TRIAL_FIELDS, BoundedNoise, SignFlipNoise, StochasticOracle,
                                StochasticProblem, estimate_expected_gap, solve_stochastic, step_generator)
from utils.errors import ConfigurationError

EPS = 0.1


@pytest.fixture
def f():
    return norm_distance(np.array([0.3]))


@pytest.fixture
def g():
    return affine([1.0], 0.5)


def _oracles(f, g, noise, seed=0):
    return (StochasticOracle.from_function(f, noise, 1, seed=seed),
            StochasticOracle.from_function(g, noise, 1, seed=seed, oracle_id=CONSTRAINT_ORACLE))


def _cfg(f_oracle, g_oracle, **kwargs):
    return SolverConfig(epsilon=EPS, M_f=f_oracle.M, M_g=g_oracle.M, theta0_sq=0.5, **kwargs)


def test_noise_bound_scales_with_dimension():
    assert BoundedNoise(0.5).bound(4) == pytest.approx(1.0)
    assert SignFlipNoise(0.0).sample(step_generator(0, 0, 0, 0), 3).tolist() == [0.0, 0.0, 0.0]


def test_negative_amplitude_rejected():
    with pytest.raises(ConfigurationError):
        BoundedNoise(-1.0)


def test_sign_flip_draws_are_plus_or_minus_amplitude():
    sample = SignFlipNoise(0.25).sample(step_generator(1, 2, 3, 0), 1000)
    assert set(np.abs(sample)) == {0.25}


def test_samples_depend_only_on_key(f):
    oracle = StochasticOracle.from_function(f, BoundedNoise(1.0), 1, seed=9)
    x = np.array([0.0])
    np.testing.assert_array_equal(oracle.sample_subgradient(x, trial=2, step=5),
                                  oracle.sample_subgradient(x, trial=2, step=5))
    assert oracle.sample_subgradient(x, trial=2, step=5)[0] != oracle.sample_subgradient(x, trial=3, step=5)[0]


def test_zero_noise_matches_model_general(euclid, interval, f, g):
    f_oracle, g_oracle = _oracles(f, g, BoundedNoise(0.0))
    cfg = _cfg(f_oracle, g_oracle, trace=True)
    exact = solve_model_general(f, g, euclid, interval, cfg)
    sampled = solve_stochastic(f_oracle, g_oracle, euclid, interval, cfg)
    np.testing.assert_array_equal(exact.x_hat, sampled.x_hat)
    assert exact.ledger.trace_lines() == sampled.ledger.trace_lines()


def test_lemma_check_rejected(euclid, interval, f, g):
    f_oracle, g_oracle = _oracles(f, g, BoundedNoise(0.1))
    cfg = _cfg(f_oracle, g_oracle, check_lemma=True, reference_point=np.array([0.3]))
    with pytest.raises(ConfigurationError):
        solve_stochastic(f_oracle, g_oracle, euclid, interval, cfg)


def test_expected_gap_within_epsilon(euclid, interval, f, g):
    f_oracle, g_oracle = _oracles(f, g, SignFlipNoise(0.5))
    problem = StochasticProblem(f_oracle, g_oracle, euclid, interval, f_star=0.0)
    estimate = estimate_expected_gap(problem, _cfg(f_oracle, g_oracle), trials=50, seed=17)
    assert estimate.trials == 50
    assert not estimate.failures
    assert estimate.mean_gap <= EPS + 3 * estimate.stderr
    # productivity uses exact g, so every output is eps-feasible
    assert max(estimate.g_values) <= EPS + 1e-12


def test_reference_optimum_used_when_f_star_missing(euclid, interval, f, g):
    f_oracle, g_oracle = _oracles(f, g, SignFlipNoise(0.5))
    problem = StochasticProblem(f_oracle, g_oracle, euclid, interval)
    estimate = estimate_expected_gap(problem, _cfg(f_oracle, g_oracle), trials=3, seed=1)
    assert estimate.f_star == pytest.approx(0.0, abs=EPS / 100)


def test_same_seed_same_estimate(euclid, interval, f, g):
    f_oracle, g_oracle = _oracles(f, g, BoundedNoise(0.5))
    problem = StochasticProblem(f_oracle, g_oracle, euclid, interval, f_star=0.0)
    cfg = _cfg(f_oracle, g_oracle)
    first = estimate_expected_gap(problem, cfg, trials=5, seed=3)
    second = estimate_expected_gap(problem, cfg, trials=5, seed=3)
    other = estimate_expected_gap(problem, cfg, trials=5, seed=4)
    assert first.f_values == second.f_values
    assert first.f_values != other.f_values


def test_trial_result_independent_of_other_trials(euclid, interval, f, g):
    f_oracle, g_oracle = _oracles(f, g, BoundedNoise(0.5))
    problem = StochasticProblem(f_oracle, g_oracle, euclid, interval, f_star=0.0)
    cfg = _cfg(f_oracle, g_oracle)
    estimate = estimate_expected_gap(problem, cfg, trials=6, seed=11)
    alone = solve_stochastic(f_oracle.with_seed(11), g_oracle.with_seed(11), euclid, interval, cfg, trial=4)
    np.testing.assert_array_equal(estimate.reports[4].x_hat, alone.x_hat)


def test_single_trial_rejected(euclid, interval, f, g):
    f_oracle, g_oracle = _oracles(f, g, BoundedNoise(0.5))
    problem = StochasticProblem(f_oracle, g_oracle, euclid, interval, f_star=0.0)
    with pytest.raises(ConfigurationError):
        estimate_expected_gap(problem, _cfg(f_oracle, g_oracle), trials=1, seed=0)


def test_zero_noise_has_zero_standard_error(euclid, interval, f, g):
    f_oracle, g_oracle = _oracles(f, g, BoundedNoise(0.0))
    problem = StochasticProblem(f_oracle, g_oracle, euclid, interval, f_star=0.0)
    estimate = estimate_expected_gap(problem, _cfg(f_oracle, g_oracle), trials=4, seed=0)
    assert estimate.stderr == 0.0
    assert len(set(estimate.f_values)) == 1


def test_failing_trials_collected_then_rejected(euclid, interval, f):
    f_oracle = StochasticOracle.from_function(f, BoundedNoise(0.1), 1)
    g_oracle = StochasticOracle.from_function(affine([1.0], -2.0), BoundedNoise(0.1), 1,
                                              oracle_id=CONSTRAINT_ORACLE)
    problem = StochasticProblem(f_oracle, g_oracle, euclid, interval, f_star=0.0)
    cfg = _cfg(f_oracle, g_oracle, max_iterations=50)
    with pytest.raises(ConfigurationError):
        estimate_expected_gap(problem, cfg, trials=3, seed=0)


def test_gap_approaches_deterministic_gap_as_noise_vanishes(euclid, interval, f):
    never = constant(-1.0, 1)

    def gap(amplitude):
        f_oracle = StochasticOracle(f.value, f.model.subgradient, SignFlipNoise(amplitude), M=1.5)
        g_oracle = StochasticOracle(never.value, never.model.subgradient, SignFlipNoise(amplitude), M=1.0,
                                    oracle_id=CONSTRAINT_ORACLE)
        problem = StochasticProblem(f_oracle, g_oracle, euclid, interval, f_star=0.0)
        cfg = SolverConfig(epsilon=EPS, M_f=1.5, M_g=1.0, theta0_sq=0.5)
        return estimate_expected_gap(problem, cfg, trials=10, seed=5).mean_gap

    baseline = gap(0.0)
    drift = [abs(gap(a) - baseline) for a in (1e-2, 1e-4, 1e-8)]
    assert drift[2] <= drift[1] + 1e-12
    assert drift[1] <= drift[0] + 1e-12
    assert drift[2] < 1e-6
    assert drift[1] < 1e-2


def test_export_trials_csv(tmp_path, euclid, interval, f, g):
    f_oracle, g_oracle = _oracles(f, g, BoundedNoise(0.5))
    problem = StochasticProblem(f_oracle, g_oracle, euclid, interval, f_star=0.0)
    estimate = estimate_expected_gap(problem, _cfg(f_oracle, g_oracle), trials=3, seed=2)
    path = tmp_path / 'out' / 'trials.csv'
    estimate.export_trials_csv(str(path))
    with open(path, newline='', encoding='utf-8') as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    assert reader.fieldnames == TRIAL_FIELDS
    assert [int(r['trial']) for r in rows] == [0, 1, 2]
    assert all(r['error'] == '' for r in rows)
    assert float(rows[1]['f_hat']) == pytest.approx(estimate.f_values[1])
