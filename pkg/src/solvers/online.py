"""
Online switching Mirror Descent: objectives f_1..f_N arrive one per productive
step under a static constraint g, with a single step size eps / M^2.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from core.geometry import FeasibleSet, Geometry, argmin_reference, mirror_step
from core.model import ConstraintFamily, ModeledFunction, linear_model
from solvers.base import MEMBERSHIP_TOL, NONPRODUCTIVE, PRODUCTIVE, SolverConfig, StepLedger, StepRecord
from solvers.deterministic import solve_relative_v2
from utils.errors import BudgetExceededError, ConfigurationError
from utils.logger import setup_logger

AUTO = 'auto'
COMPARATOR_ACCURACY_RATIO = 100.0


def guaranteed_accuracy(epsilon: float, delta: float, M: float, theta0_sq: float, N: int,
                        nonproductive: int) -> float:
    """kappa = (|J|/N)(-eps/2) + eps/2 + delta + M^2 Theta0^2 / (N eps)."""
    return (nonproductive / N) * (-epsilon / 2.0) + (epsilon / 2.0 + delta) + M ** 2 * theta0_sq / (N * epsilon)


def nonproductive_bound(cfg: SolverConfig, N: int, M: Optional[float] = None) -> float:
    """N (1 + 2 delta / eps) + 2 M^2 Theta0^2 / eps^2, valid whenever the realised regret is non-negative."""
    M = cfg.M if M is None else M
    return N * (1.0 + 2.0 * cfg.delta / cfg.epsilon) + 2.0 * M ** 2 * cfg.theta0_sq / cfg.epsilon ** 2


@dataclass(frozen=True, eq=False)
class OnlineStream:
    """
    Round i reveals f_i through objective_at(i, played), where played holds the
    iterates of the earlier productive rounds; adaptive adversaries may use it.
    """

    objective_at: Callable[[int, Sequence[np.ndarray]], ModeledFunction]
    rounds: int
    constants: tuple[float, ...]

    def __post_init__(self):
        if int(self.rounds) < 1:
            raise ConfigurationError(f"An online stream needs at least one round, got {self.rounds}")
        if len(self.constants) == 0 or not all(M > 0 for M in self.constants):
            raise ConfigurationError("Every per-round constant M_i must be positive")

    @classmethod
    def from_functions(cls, functions: Sequence[ModeledFunction]) -> 'OnlineStream':
        functions = tuple(functions)
        return cls(objective_at=lambda i, played: functions[i], rounds=len(functions),
                   constants=tuple(fn.M for fn in functions))

    @property
    def M_f(self) -> float:
        return max(self.constants)


@dataclass(frozen=True, eq=False)
class OnlineReport:
    iterates: np.ndarray
    losses: np.ndarray
    ledger: StepLedger
    kappa: float
    M: float
    wall_time: float
    objectives: tuple[ModeledFunction, ...] = field(default_factory=tuple)
    constraint_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cumulative_nonproductive: tuple[int, ...] = field(default_factory=tuple)
    comparator_value: Optional[float] = None

    @property
    def rounds(self) -> int:
        return len(self.losses)

    @property
    def nonproductive_count(self) -> int:
        return len(self.ledger.nonproductive)

    @property
    def total_iterations(self) -> int:
        return self.ledger.total

    @property
    def average_loss(self) -> float:
        return float(np.mean(self.losses))

    @property
    def mean_iterate(self) -> np.ndarray:
        return np.mean(self.iterates, axis=0)

    @property
    def regret(self) -> Optional[float]:
        if self.comparator_value is None:
            return None
        return self.average_loss - self.comparator_value

    def average_objective(self) -> ModeledFunction:
        """(1/N) sum f_i as a single modeled function."""
        objectives = self.objectives

        def value(x):
            return float(np.mean([fn(x) for fn in objectives]))

        def subgradient(x):
            return np.mean([fn.model.subgradient(x) for fn in objectives], axis=0)

        return ModeledFunction(value, linear_model(subgradient, max(fn.M for fn in objectives)), name='average_loss')

    def trace_lines(self) -> list[str]:
        lines = []
        for i, x in enumerate(self.iterates):
            coords = ' '.join(repr(float(c)) for c in x)
            lines.append(f"{i},{coords},{self.losses[i]!r},{self.constraint_values[i]!r},"
                         f"{self.cumulative_nonproductive[i]}")
        return lines


class OnlineMirrorDescent:
    label = 'online'
    tag = '[ONLINE]'

    def __init__(self, stream: OnlineStream, constraints, geom: Geometry, Q: FeasibleSet, cfg: SolverConfig):
        if isinstance(constraints, ModeledFunction):
            constraints = ConstraintFamily([constraints])
        elif not isinstance(constraints, ConstraintFamily):
            constraints = ConstraintFamily(list(constraints))
        self.stream = stream
        self.constraints = constraints
        self.geom = geom
        self.Q = Q
        self.cfg = cfg
        self.M = max(stream.M_f, max(constraints.constants))
        self.h = cfg.epsilon / self.M ** 2
        self.logger = setup_logger(self.__class__.__name__)

    def start_point(self) -> np.ndarray:
        if self.cfg.x0 is None:
            return argmin_reference(self.geom, self.Q)
        if not self.Q.contains(self.cfg.x0, tol=MEMBERSHIP_TOL):
            raise ConfigurationError("The configured starting point lies outside Q")
        return np.array(self.cfg.x0)

    def run(self) -> OnlineReport:
        cfg = self.cfg
        N = int(self.stream.rounds)
        threshold = cfg.epsilon + cfg.delta
        cap = int(2 * nonproductive_bound(cfg, N, self.M) + 10)
        ledger = StepLedger()
        played: list[np.ndarray] = []
        objectives: list[ModeledFunction] = []
        losses: list[float] = []
        g_values: list[float] = []
        cumulative: list[int] = []

        x = self.start_point()
        self.logger.info(f"{self.tag} Starting: N={N}, eps={cfg.epsilon:g}, h={self.h:.3e}, M={self.M:g}")
        start = time.perf_counter()
        k = 0
        while len(played) < N:
            values = np.atleast_1d(self.constraints.values(x))
            g_value = float(np.max(values))
            if g_value <= threshold:
                i = len(played)
                f_i = self.stream.objective_at(i, tuple(played))
                linearized = f_i.model.linearize(x)
                ledger.objective_subgradient_calls += 1
                played.append(np.array(x))
                objectives.append(f_i)
                losses.append(f_i(x))
                g_values.append(g_value)
                cumulative.append(len(ledger.nonproductive))
                kind, p = PRODUCTIVE, None
            else:
                if len(ledger.nonproductive) >= cap:
                    raise BudgetExceededError(
                        f"{self.tag} More than {cap} non-productive steps; check M and theta0_sq", ledger=ledger)
                p = int(np.flatnonzero(values > threshold)[0])
                linearized = self.constraints[p].model.linearize(x)
                ledger.constraint_subgradient_calls += 1
                kind = NONPRODUCTIVE
            ledger.record(StepRecord(index=k, kind=kind, h=self.h, g_value=g_value, constraint_index=p))
            self.logger.debug(f"{self.tag} k={k} kind={kind} round={len(played)} g={g_value:.6f}")
            x = mirror_step(self.geom, self.Q, x, self.h, linearized)
            k += 1

        wall_time = time.perf_counter() - start
        kappa = guaranteed_accuracy(cfg.epsilon, cfg.delta, self.M, cfg.theta0_sq, N, len(ledger.nonproductive))
        report = OnlineReport(
            iterates=np.array(played), losses=np.array(losses), ledger=ledger, kappa=kappa, M=self.M,
            wall_time=wall_time, objectives=tuple(objectives), constraint_values=np.array(g_values),
            cumulative_nonproductive=tuple(cumulative),
        )
        self.logger.info(f"{self.tag} Done: N={N}, |J|={report.nonproductive_count}, "
                         f"avg loss={report.average_loss:.6f}, kappa={kappa:.6f}, time={wall_time:.3f}s")
        return report


def solve_online(stream: OnlineStream, g, geom: Geometry, Q: FeasibleSet, cfg: SolverConfig,
                 comparator: Union[None, float, str] = None) -> OnlineReport:
    """
    comparator is the value of min over {x in Q, g(x) <= 0} of the average loss;
    'auto' computes it afterwards with version 2 at accuracy eps / 100.
    """
    solver = OnlineMirrorDescent(stream, g, geom, Q, cfg)
    report = solver.run()
    if comparator is None:
        return report
    if comparator == AUTO:
        average = report.average_objective()
        reference_cfg = SolverConfig(epsilon=cfg.epsilon / COMPARATOR_ACCURACY_RATIO, M_f=average.M,
                                     M_g=solver.constraints.constants, theta0_sq=cfg.theta0_sq)
        comparator = solve_relative_v2(average, solver.constraints, geom, Q, reference_cfg).objective_value
    elif isinstance(comparator, str):
        raise ConfigurationError(f"Unknown comparator '{comparator}'")
    report = dataclasses.replace(report, comparator_value=float(comparator))
    solver.logger.info(f"{solver.tag} Regret={report.regret:.6f} vs kappa={report.kappa:.6f}")
    return report
