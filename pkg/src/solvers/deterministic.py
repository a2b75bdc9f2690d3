"""
Deterministic switching Mirror Descent: the model-general scheme with
caller-supplied steps, the two relative-Lipschitz versions, and their
several-constraint modifications.
"""

from __future__ import annotations

from core.geometry import FeasibleSet, Geometry
from core.model import ModeledFunction
from solvers.base import (NONPRODUCTIVE, PRODUCTIVE, Guarantee, RunReport, SolverConfig, StepLedger,
                          SwitchingMirrorDescent, iteration_bound)
from utils.errors import BudgetExceededError

STOP_RTOL = 1e-12


class ModelMirrorDescent(SwitchingMirrorDescent):
    """
    Switching scheme for functions with a (delta, phi, V)-model. Runs until
    Theta0^2 <= eps (|J| h_g + |I| h_f) - |J| phi_g*(h_g) - |I| phi_f*(h_f).
    """

    label = 'alg1'
    tag = '[ALG1]'

    def __init__(self, objective, constraints, geom, Q, cfg: SolverConfig):
        super().__init__(objective, constraints, geom, Q, cfg)
        self.h_f = cfg.h_f if cfg.h_f is not None else cfg.epsilon / cfg.M_f ** 2
        self.h_g = cfg.h_g if cfg.h_g is not None else cfg.epsilon / cfg.M_g_max ** 2
        self._progress = 0.0

    def productivity_threshold(self):
        return self.cfg.epsilon + self.cfg.delta

    def objective_step_size(self):
        return self.h_f

    def constraint_step_size(self, p):
        return self.h_g

    def _gain(self, kind, p) -> float:
        eps = self.cfg.epsilon
        if kind == PRODUCTIVE:
            return eps * self.h_f - self.objective.model.phi_conjugate(self.h_f)
        return eps * self.h_g - self.constraints[p].model.phi_conjugate(self.h_g)

    def check_reachable(self):
        gains = [self._gain(PRODUCTIVE, None)] + [self._gain(NONPRODUCTIVE, p) for p in range(len(self.constraints))]
        if max(gains) <= 0:
            raise BudgetExceededError(
                f"{self.tag} Stopping rule unreachable: eps*h <= phi*(h) for every step kind", ledger=StepLedger())

    def on_step(self, kind, p):
        self._progress += self._gain(kind, p)

    def stopped(self, ledger):
        return self.cfg.theta0_sq <= self._progress * (1.0 + STOP_RTOL)

    def guarantee(self):
        bound = self.cfg.epsilon + self.cfg.delta
        return Guarantee(objective_gap=bound, constraint=bound, source='model-general')

    def run(self) -> RunReport:
        self._progress = 0.0
        return super().run()


class RelativeMirrorDescentV1(SwitchingMirrorDescent):
    """Steps eps/M, threshold M_g eps + delta, exactly ceil(2 Theta0^2 / eps^2) iterations."""

    label = 'alg2'
    tag = '[ALG2]'

    def productivity_threshold(self):
        return max(self.constraint_M) * self.cfg.epsilon + self.cfg.delta

    def objective_step_size(self):
        return self.cfg.epsilon / self.cfg.M_f

    def constraint_step_size(self, p):
        return self.cfg.epsilon / self.constraint_M[p]

    def stopped(self, ledger):
        return ledger.total >= iteration_bound(self.cfg.epsilon, self.cfg.theta0_sq)

    def guarantee(self):
        cfg = self.cfg
        return Guarantee(objective_gap=cfg.M_f * cfg.epsilon + cfg.delta,
                         constraint=max(self.constraint_M) * cfg.epsilon + cfg.delta,
                         source='relative-lipschitz-v1',
                         iteration_bound=iteration_bound(cfg.epsilon, cfg.theta0_sq))


class RelativeMirrorDescentV2(SwitchingMirrorDescent):
    """
    Steps eps/M^2, threshold eps + delta. Stops at the first N with
    2 Theta0^2 / eps^2 <= |I| / M_f^2 + sum over J of 1 / M_g(p(k))^2.
    """

    label = 'alg2mod'
    tag = '[ALG3]'

    def __init__(self, objective, constraints, geom, Q, cfg: SolverConfig):
        super().__init__(objective, constraints, geom, Q, cfg)
        self._weight = 0.0

    def productivity_threshold(self):
        return self.cfg.epsilon + self.cfg.delta

    def objective_step_size(self):
        return self.cfg.epsilon / self.cfg.M_f ** 2

    def constraint_step_size(self, p):
        return self.cfg.epsilon / self.constraint_M[p] ** 2

    def on_step(self, kind, p):
        M = self.cfg.M_f if kind == PRODUCTIVE else self.constraint_M[p]
        self._weight += 1.0 / M ** 2

    def stopped(self, ledger):
        target = 2.0 * self.cfg.theta0_sq / self.cfg.epsilon ** 2
        return target <= self._weight * (1.0 + STOP_RTOL)

    def guarantee(self):
        cfg = self.cfg
        bound = cfg.epsilon + cfg.delta
        M = max(cfg.M_f, max(self.constraint_M))
        return Guarantee(objective_gap=bound, constraint=bound, source='relative-lipschitz-v2',
                         iteration_bound=iteration_bound(cfg.epsilon, cfg.theta0_sq, M))

    def run(self) -> RunReport:
        self._weight = 0.0
        return super().run()


class MultiConstraintV1(RelativeMirrorDescentV1):
    """Version 1 over g = max_p g_p; a non-productive step touches only the lowest violated g_p."""

    label = 'multi-v1'
    tag = '[MULTI-V1]'

    def guarantee(self):
        cfg = self.cfg
        M_g = max(self.constraint_M)
        return Guarantee(objective_gap=max(cfg.M_f, M_g) * cfg.epsilon + cfg.delta,
                         constraint=M_g * cfg.epsilon + cfg.delta,
                         source='multi-constraint-v1',
                         iteration_bound=iteration_bound(cfg.epsilon, cfg.theta0_sq))


class MultiConstraintV2(RelativeMirrorDescentV2):
    """Version 2 over g = max_p g_p with per-constraint steps eps / M_g(p)^2."""

    label = 'multi-v2'
    tag = '[MULTI-V2]'

    def guarantee(self):
        base = super().guarantee()
        return Guarantee(objective_gap=base.objective_gap, constraint=base.constraint,
                         source='multi-constraint-v2', iteration_bound=base.iteration_bound)


def solve_model_general(f: ModeledFunction, g, geom: Geometry, Q: FeasibleSet, cfg: SolverConfig) -> RunReport:
    return ModelMirrorDescent(f, g, geom, Q, cfg).run()


def solve_relative_v1(f: ModeledFunction, g, geom: Geometry, Q: FeasibleSet, cfg: SolverConfig) -> RunReport:
    return RelativeMirrorDescentV1(f, g, geom, Q, cfg).run()


def solve_relative_v2(f: ModeledFunction, g, geom: Geometry, Q: FeasibleSet, cfg: SolverConfig) -> RunReport:
    return RelativeMirrorDescentV2(f, g, geom, Q, cfg).run()


def solve_multi_v1(f: ModeledFunction, constraints, geom: Geometry, Q: FeasibleSet, cfg: SolverConfig) -> RunReport:
    return MultiConstraintV1(f, constraints, geom, Q, cfg).run()


def solve_multi_v2(f: ModeledFunction, constraints, geom: Geometry, Q: FeasibleSet, cfg: SolverConfig) -> RunReport:
    return MultiConstraintV2(f, constraints, geom, Q, cfg).run()
