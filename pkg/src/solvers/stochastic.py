"""
Switching Mirror Descent with unbiased stochastic subgradients, and the
Monte-Carlo harness estimating the expected objective gap of its output.

Every subgradient draw comes from its own PCG64 stream keyed by
SeedSequence([seed, trial, step, oracle_id]), so a trial's result does not
depend on which other trials ran or in what order.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import os
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from core.geometry import FeasibleSet, Geometry, LinearizedModel, as_vector
from core.model import ConstraintFamily, ModeledFunction, linear_model
from core.problems import ConstrainedProblem, reference_optimum
from solvers.base import RunReport, SolverConfig
from solvers.deterministic import ModelMirrorDescent
from utils.errors import ConfigurationError, MirrorDescentError, ReportError
from utils.logger import setup_logger

OBJECTIVE_ORACLE = 0
CONSTRAINT_ORACLE = 1
TRIAL_FIELDS = ['trial', 'seed', 'N', 'productive', 'nonproductive', 'f_hat', 'g_hat', 'error']


def step_generator(seed: int, trial: int, step: int, oracle_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, trial, step, oracle_id])))


# ---------------------------------------------------------------------------
# Noise models
# ---------------------------------------------------------------------------

class NoiseModel(ABC):
    """Zero-mean additive perturbation with an l2 bound."""

    amplitude: float

    @abstractmethod
    def sample(self, rng: np.random.Generator, dim: int) -> np.ndarray:
        ...

    def bound(self, dim: int) -> float:
        return self.amplitude * math.sqrt(dim)


@dataclass(frozen=True)
class BoundedNoise(NoiseModel):
    """Uniform on [-a, a]^n."""

    amplitude: float = 0.0

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ConfigurationError(f"Noise amplitude must be non-negative, got {self.amplitude}")

    def sample(self, rng, dim):
        if self.amplitude == 0:
            return np.zeros(dim)
        return rng.uniform(-self.amplitude, self.amplitude, size=dim)


@dataclass(frozen=True)
class SignFlipNoise(NoiseModel):
    """+a or -a per coordinate with equal probability."""

    amplitude: float = 0.0

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ConfigurationError(f"Noise amplitude must be non-negative, got {self.amplitude}")

    def sample(self, rng, dim):
        if self.amplitude == 0:
            return np.zeros(dim)
        return self.amplitude * rng.choice(np.array([-1.0, 1.0]), size=dim)


# ---------------------------------------------------------------------------
# Oracles
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StochasticOracle:
    """
    Exact values for the productivity test, noisy subgradients for the steps.
    M must bound <sample, x - y> by M sqrt(2 V(y, x)) for every draw.
    """

    exact_value: Callable[[np.ndarray], float]
    subgradient: Callable[[np.ndarray], np.ndarray]
    noise: NoiseModel
    M: float
    seed: int = 0
    oracle_id: int = OBJECTIVE_ORACLE
    delta: float = 0.0
    name: str = 'oracle'

    def __post_init__(self):
        if not self.M > 0:
            raise ConfigurationError(f"Oracle constant M must be positive, got {self.M}")

    @classmethod
    def from_function(cls, fn: ModeledFunction, noise: NoiseModel, dim: int, seed: int = 0,
                      oracle_id: int = OBJECTIVE_ORACLE) -> 'StochasticOracle':
        return cls(exact_value=fn.value, subgradient=fn.model.subgradient, noise=noise,
                   M=fn.M + noise.bound(dim), seed=seed, oracle_id=oracle_id,
                   delta=fn.model.delta, name=fn.name)

    def sample_subgradient(self, x, trial: int = 0, step: int = 0) -> np.ndarray:
        x = as_vector(x)
        exact = as_vector(self.subgradient(x), 'subgradient')
        return exact + self.noise.sample(step_generator(self.seed, trial, step, self.oracle_id), x.shape[0])

    def with_seed(self, seed: int) -> 'StochasticOracle':
        return dataclasses.replace(self, seed=seed)

    def as_modeled(self) -> ModeledFunction:
        """The exact function with the oracle's (inflated) constant."""
        return ModeledFunction(self.exact_value, linear_model(self.subgradient, self.M, self.delta), name=self.name)


@dataclass(frozen=True, eq=False)
class StochasticProblem:
    objective: StochasticOracle
    constraint: StochasticOracle
    geom: Geometry
    Q: FeasibleSet
    f_star: Optional[float] = None

    def exact_problem(self) -> ConstrainedProblem:
        return ConstrainedProblem(self.objective.as_modeled(), ConstraintFamily([self.constraint.as_modeled()]),
                                  self.Q.dim, name='stochastic')


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------

class StochasticMirrorDescent(ModelMirrorDescent):
    """
    Same steps, thresholds and stopping rule as the model-general scheme; each
    step draws a fresh subgradient sample while productivity uses exact g.
    """

    label = 'stochastic'
    tag = '[STOCH]'

    def __init__(self, f_oracle: StochasticOracle, g_oracle: StochasticOracle, geom: Geometry, Q: FeasibleSet,
                 cfg: SolverConfig, trial: int = 0):
        if cfg.check_lemma:
            raise ConfigurationError("The one-step inequality check holds only in expectation for sampled subgradients")
        self.f_oracle = f_oracle
        self.g_oracle = g_oracle
        self.trial = int(trial)
        super().__init__(f_oracle.as_modeled(), g_oracle.as_modeled(), geom, Q, cfg)

    def linearize_objective(self, x, step):
        return LinearizedModel(slope=self.f_oracle.sample_subgradient(x, self.trial, step))

    def linearize_constraint(self, p, x, step):
        return LinearizedModel(slope=self.g_oracle.sample_subgradient(x, self.trial, step))


def solve_stochastic(f_oracle: StochasticOracle, g_oracle: StochasticOracle, geom: Geometry, Q: FeasibleSet,
                     cfg: SolverConfig, trial: int = 0) -> RunReport:
    return StochasticMirrorDescent(f_oracle, g_oracle, geom, Q, cfg, trial=trial).run()


# ---------------------------------------------------------------------------
# Expected-gap harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExpectedGapEstimate:
    mean_gap: float
    stderr: float
    g_values: tuple[float, ...]
    f_values: tuple[float, ...]
    f_star: float
    seed: int
    reports: tuple[Optional[RunReport], ...] = field(default_factory=tuple)
    failures: tuple[tuple[int, str], ...] = field(default_factory=tuple)

    @property
    def trials(self) -> int:
        return len(self.reports)

    def trial_rows(self) -> list[dict]:
        failed = dict(self.failures)
        rows = []
        for trial, report in enumerate(self.reports):
            if report is None:
                rows.append({'trial': trial, 'seed': self.seed, 'N': '', 'productive': '', 'nonproductive': '',
                             'f_hat': '', 'g_hat': '', 'error': failed.get(trial, '')})
                continue
            rows.append({
                'trial': trial,
                'seed': self.seed,
                'N': report.total_iterations,
                'productive': report.productive_count,
                'nonproductive': report.nonproductive_count,
                'f_hat': report.objective_value,
                'g_hat': report.constraint_value,
                'error': '',
            })
        return rows

    def export_trials_csv(self, path: str) -> None:
        try:
            directory = os.path.dirname(path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(path, 'w', newline='', encoding='utf-8') as f:
                writer = csv.DictWriter(f, fieldnames=TRIAL_FIELDS)
                writer.writeheader()
                writer.writerows(self.trial_rows())
        except OSError as e:
            raise ReportError(f"Cannot write trial rows to {path}: {e}") from e


def estimate_expected_gap(problem: StochasticProblem, cfg: SolverConfig, trials: int, seed: int) -> ExpectedGapEstimate:
    """
    Monte-Carlo estimate of E[f(x_hat)] - f* over the oracle randomness. Failed
    trials are logged and listed in the estimate's failures.
    """
    logger = setup_logger('estimate_expected_gap')
    if int(trials) < 2:
        raise ConfigurationError(f"At least two trials are needed for a standard error, got {trials}")
    f_oracle = problem.objective.with_seed(seed)
    g_oracle = problem.constraint.with_seed(seed)
    f_star = problem.f_star
    if f_star is None:
        f_star = reference_optimum(problem.exact_problem(), problem.geom, problem.Q, cfg.epsilon / 100).f_star

    reports: list[Optional[RunReport]] = []
    failures: list[tuple[int, str]] = []
    for trial in range(int(trials)):
        try:
            reports.append(solve_stochastic(f_oracle, g_oracle, problem.geom, problem.Q, cfg, trial=trial))
        except MirrorDescentError as e:
            logger.error(f"[STOCH] Trial {trial} failed: {e}")
            reports.append(None)
            failures.append((trial, f"{type(e).__name__}: {e}"))

    done = [r for r in reports if r is not None]
    if len(done) < 2:
        raise ConfigurationError(f"Only {len(done)} of {trials} trials completed; no standard error available")
    f_values = np.array([r.objective_value for r in done])
    gaps = f_values - f_star
    stderr = float(np.std(gaps, ddof=1) / math.sqrt(len(done)))
    estimate = ExpectedGapEstimate(
        mean_gap=float(np.mean(gaps)), stderr=stderr,
        g_values=tuple(r.constraint_value for r in done), f_values=tuple(float(v) for v in f_values),
        f_star=float(f_star), seed=int(seed), reports=tuple(reports), failures=tuple(failures),
    )
    logger.info(f"[STOCH] {len(done)}/{trials} trials: mean gap={estimate.mean_gap:.6f} +- {stderr:.6f}")
    return estimate
