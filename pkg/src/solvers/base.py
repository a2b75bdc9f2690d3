"""
Shared machinery of the switching Mirror Descent schemes: configuration, the
productive/non-productive step ledger, run reports, and the main loop that
every concrete scheme specialises through a handful of hooks.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from core.geometry import FeasibleSet, Geometry, LinearizedModel, argmin_reference, as_vector, mirror_step
from core.model import ConstraintFamily, InexactModel, ModeledFunction
from utils.errors import (BudgetExceededError, ConfigurationError, InvariantViolationError,
                          NoProductiveStepsError)
from utils.logger import setup_logger

PRODUCTIVE = 'P'
NONPRODUCTIVE = 'N'
LEMMA_TOL = 1e-9
MEMBERSHIP_TOL = 1e-12


def iteration_bound(epsilon: float, theta0_sq: float, M: float = 1.0) -> int:
    """ceil(2 M^2 Theta0^2 / eps^2): the O(1/eps^2) step count of the relative-Lipschitz schemes."""
    # rounding absorbs representation noise such as 2 * 0.5 / 0.1**2 = 99.99999999999997
    return int(math.ceil(round(2.0 * M ** 2 * theta0_sq / epsilon ** 2, 9)))


@dataclass(frozen=True, eq=False)
class SolverConfig:
    epsilon: float
    delta: float = 0.0
    M_f: float = 1.0
    M_g: Union[float, Sequence[float]] = 1.0
    theta0_sq: float = 2.0
    max_iterations: Optional[int] = None
    x0: Optional[np.ndarray] = None
    h_f: Optional[float] = None
    h_g: Optional[float] = None
    trace: bool = False
    check_lemma: bool = False
    reference_point: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if not self.delta >= 0:
            raise ConfigurationError(f"delta must be non-negative, got {self.delta}")
        if not self.M_f > 0:
            raise ConfigurationError(f"M_f must be positive, got {self.M_f}")
        if not all(M > 0 for M in self.constraint_constants):
            raise ConfigurationError(f"Every M_g must be positive, got {self.M_g}")
        if not self.theta0_sq > 0:
            raise ConfigurationError(f"theta0_sq must be positive, got {self.theta0_sq}")
        if self.max_iterations is not None and int(self.max_iterations) < 1:
            raise ConfigurationError("max_iterations must be a positive integer")
        for name in ('h_f', 'h_g'):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigurationError(f"{name} must be positive, got {value}")
        if self.check_lemma and self.reference_point is None:
            raise ConfigurationError("The one-step inequality check needs a reference point")
        if self.x0 is not None:
            object.__setattr__(self, 'x0', as_vector(self.x0, 'x0'))

    @property
    def constraint_constants(self) -> tuple[float, ...]:
        if np.ndim(self.M_g) == 0:
            return (float(self.M_g),)
        return tuple(float(M) for M in self.M_g)

    @property
    def M_g_max(self) -> float:
        return max(self.constraint_constants)

    @property
    def M(self) -> float:
        return max(self.M_f, self.M_g_max)

    def default_max_iterations(self) -> int:
        return 10 * max(iteration_bound(self.epsilon, self.theta0_sq, 1.0),
                        iteration_bound(self.epsilon, self.theta0_sq, self.M))


@dataclass(frozen=True, eq=False)
class StepRecord:
    index: int
    kind: str
    h: float
    g_value: float
    constraint_index: Optional[int] = None
    f_value: Optional[float] = None
    iterate: Optional[np.ndarray] = None
    reference_divergence: Optional[float] = None


@dataclass
class StepLedger:
    productive: list[int] = field(default_factory=list)
    nonproductive: list[int] = field(default_factory=list)
    records: list[StepRecord] = field(default_factory=list)
    objective_subgradient_calls: int = 0
    constraint_subgradient_calls: int = 0

    def record(self, step: StepRecord) -> None:
        (self.productive if step.kind == PRODUCTIVE else self.nonproductive).append(step.index)
        self.records.append(step)

    @property
    def total(self) -> int:
        return len(self.records)

    def is_partition(self) -> bool:
        indices = sorted(self.productive + self.nonproductive)
        return indices == list(range(self.total)) and not set(self.productive) & set(self.nonproductive)

    def trace_lines(self) -> list[str]:
        return [f"{r.index},{r.kind},{r.h!r},{r.g_value!r}" for r in self.records]


@dataclass(frozen=True)
class Guarantee:
    objective_gap: float
    constraint: float
    source: str
    iteration_bound: Optional[int] = None


@dataclass(frozen=True, eq=False)
class RunReport:
    algorithm: str
    x_hat: np.ndarray
    ledger: StepLedger
    total_iterations: int
    guarantee: Guarantee
    wall_time: float
    objective_value: float
    constraint_value: float

    @property
    def productive_count(self) -> int:
        return len(self.ledger.productive)

    @property
    def nonproductive_count(self) -> int:
        return len(self.ledger.nonproductive)


def main_lemma_slack(geom: Geometry, model: InexactModel, h: float, x, x_next, y,
                     value_x: float, value_y: float) -> float:
    """
    phi*(h) + V(y, x) - V(y, x+) + h delta - h (value(x) - value(y));
    non-negative whenever the model is valid at x and x+ = Mirr_h(x, psi).
    """
    return (model.phi_conjugate(h) + geom.divergence(y, x) - geom.divergence(y, x_next)
            + h * model.delta - h * (value_x - value_y))


class SwitchingMirrorDescent:
    """
    Productive steps move on the objective's model, non-productive steps on a
    violated constraint's model; the output is the mean of productive iterates.
    """

    label = 'switching'
    tag = '[SMD]'

    def __init__(self, objective: ModeledFunction, constraints, geom: Geometry, Q: FeasibleSet,
                 cfg: SolverConfig):
        if isinstance(constraints, ModeledFunction):
            constraints = ConstraintFamily([constraints])
        elif not isinstance(constraints, ConstraintFamily):
            constraints = ConstraintFamily(list(constraints))
        self.objective = objective
        self.constraints = constraints
        self.geom = geom
        self.Q = Q
        self.cfg = cfg
        self.constraint_M = self._resolve_constraint_constants()
        self.logger = setup_logger(self.__class__.__name__)

    def _resolve_constraint_constants(self) -> tuple[float, ...]:
        constants = self.cfg.constraint_constants
        m = len(self.constraints)
        if len(constants) == 1:
            return constants * m
        if len(constants) != m:
            raise ConfigurationError(f"Got {len(constants)} constraint constants for {m} constraints")
        return constants

    # -- hooks ---------------------------------------------------------------

    def productivity_threshold(self) -> float:
        raise NotImplementedError

    def objective_step_size(self) -> float:
        raise NotImplementedError

    def constraint_step_size(self, p: int) -> float:
        raise NotImplementedError

    def stopped(self, ledger: StepLedger) -> bool:
        raise NotImplementedError

    def guarantee(self) -> Guarantee:
        raise NotImplementedError

    def on_step(self, kind: str, p: Optional[int]) -> None:
        """Called after each step is recorded; schemes with running sums override it."""

    def select_constraint(self, values: np.ndarray, threshold: float) -> int:
        """Lowest index among the constraints above the threshold."""
        return int(np.flatnonzero(values > threshold)[0])

    def linearize_objective(self, x: np.ndarray, step: int) -> LinearizedModel:
        return self.objective.model.linearize(x)

    def linearize_constraint(self, p: int, x: np.ndarray, step: int) -> LinearizedModel:
        return self.constraints[p].model.linearize(x)

    def check_reachable(self) -> None:
        """Raises BudgetExceededError when the stopping rule can never hold."""

    # -- main loop -----------------------------------------------------------

    def start_point(self) -> np.ndarray:
        if self.cfg.x0 is None:
            return argmin_reference(self.geom, self.Q)
        if not self.Q.contains(self.cfg.x0, tol=MEMBERSHIP_TOL):
            raise ConfigurationError("The configured starting point lies outside Q")
        return np.array(self.cfg.x0)

    def run(self) -> RunReport:
        cfg = self.cfg
        cap = int(cfg.max_iterations or cfg.default_max_iterations())
        threshold = self.productivity_threshold()
        ledger = StepLedger()
        self.check_reachable()

        x = self.start_point()
        productive_sum = np.zeros_like(x)
        reference = None if cfg.reference_point is None else as_vector(cfg.reference_point, 'reference_point')
        self.logger.info(f"{self.tag} Starting: eps={cfg.epsilon:g}, delta={cfg.delta:g}, "
                         f"theta0_sq={cfg.theta0_sq:g}, cap={cap}")

        start = time.perf_counter()
        N = 0
        while True:
            if N >= cap:
                raise BudgetExceededError(f"{self.tag} Iteration cap {cap} reached before the stopping rule held",
                                          ledger=ledger)
            values = np.atleast_1d(self.constraints.values(x))
            g_value = float(np.max(values))

            if g_value <= threshold:
                kind, p, function = PRODUCTIVE, None, self.objective
                h = self.objective_step_size()
                linearized = self.linearize_objective(x, N)
                ledger.objective_subgradient_calls += 1
                productive_sum += x
            else:
                kind = NONPRODUCTIVE
                p = self.select_constraint(values, threshold)
                function = self.constraints[p]
                h = self.constraint_step_size(p)
                linearized = self.linearize_constraint(p, x, N)
                ledger.constraint_subgradient_calls += 1

            x_next = mirror_step(self.geom, self.Q, x, h, linearized)

            if cfg.check_lemma:
                slack = main_lemma_slack(self.geom, function.model, h, x, x_next, reference,
                                         function(x), function(reference))
                if slack < -LEMMA_TOL:
                    raise InvariantViolationError(f"{self.tag} One-step inequality fails at step {N} by {-slack:.3e}")

            ledger.record(StepRecord(
                index=N, kind=kind, h=h, g_value=g_value, constraint_index=p,
                f_value=self.objective(x) if cfg.trace and kind == PRODUCTIVE else None,
                iterate=np.array(x) if cfg.trace else None,
                reference_divergence=None if reference is None else self.geom.divergence(reference, x),
            ))
            self.logger.debug(f"{self.tag} k={N} kind={kind} h={h:.3e} g={g_value:.6f}")
            self.on_step(kind, p)
            x = x_next
            N += 1
            if self.stopped(ledger):
                break

        wall_time = time.perf_counter() - start
        if not ledger.productive:
            raise NoProductiveStepsError(f"{self.tag} Stopped after {N} steps without a productive step",
                                         ledger=ledger)
        x_hat = productive_sum / len(ledger.productive)
        if not self.Q.contains(x_hat, tol=MEMBERSHIP_TOL):
            raise InvariantViolationError(f"{self.tag} Averaged output left Q")

        report = RunReport(
            algorithm=self.label, x_hat=x_hat, ledger=ledger, total_iterations=N,
            guarantee=self.guarantee(), wall_time=wall_time,
            objective_value=self.objective(x_hat), constraint_value=self.constraints.value(x_hat),
        )
        self.logger.info(f"{self.tag} Done: N={N}, |I|={report.productive_count}, |J|={report.nonproductive_count}, "
                         f"f={report.objective_value:.6f}, g={report.constraint_value:.6f}, time={wall_time:.3f}s")
        return report
