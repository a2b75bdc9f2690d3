"""
Problem instances: small analytic functionals, the Fermat-Torricelli-Steiner
objective with max-of-linear constraints, seeded Gaussian instance generation,
and an independent reference oracle for the constrained optimum.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from core.geometry import (Box, EuclideanBall, EuclideanGeometry, FeasibleSet, Geometry, Simplex, WholeSpace,
                           as_vector)
from core.model import ConstraintFamily, LinearConstraintFamily, ModeledFunction, linear_model
from utils.errors import ConfigurationError, InfeasibleProblemError
from utils.logger import setup_logger

logger = setup_logger('problems')

GAUSSIAN_MEAN = 1.0
GAUSSIAN_STD = 2.0


# ---------------------------------------------------------------------------
# Small analytic functionals
# ---------------------------------------------------------------------------

def norm_distance(center, M: float = 1.0, delta: float = 0.0) -> ModeledFunction:
    """f(x) = ||x - center||_2; the zero vector is the subgradient at the kink."""
    center = as_vector(center, 'center')

    def value(x):
        return float(np.linalg.norm(x - center))

    def subgradient(x):
        diff = x - center
        dist = float(np.linalg.norm(diff))
        return diff / dist if dist > 0 else np.zeros_like(diff)

    return ModeledFunction(value, linear_model(subgradient, M, delta), name='norm_distance')


def half_squared_distance(center, M: float, delta: float = 0.0) -> ModeledFunction:
    """f(x) = 0.5 * ||x - center||^2, relatively Lipschitz on bounded sets."""
    center = as_vector(center, 'center')
    return ModeledFunction(lambda x: 0.5 * float(np.dot(x - center, x - center)),
                           linear_model(lambda x: x - center, M, delta), name='half_squared_distance')


def affine(a, b: float = 0.0, M: Optional[float] = None, delta: float = 0.0) -> ModeledFunction:
    """g(x) = <a, x> - b."""
    a = as_vector(a, 'a')
    M = float(np.linalg.norm(a)) if M is None else M
    return ModeledFunction(lambda x: float(np.dot(a, x) - b),
                           linear_model(lambda x: np.array(a), max(M, 1e-12), delta), name='affine')


def constant(c: float, dim: int) -> ModeledFunction:
    return ModeledFunction(lambda x: float(c), linear_model(lambda x: np.zeros(dim), 1.0), name='constant')


def pointwise_max(functions: Sequence[ModeledFunction], delta: float = 0.0) -> ModeledFunction:
    """max_p f_p(x); subgradient of the lowest-index active piece."""
    functions = tuple(functions)

    def value(x):
        return max(fn(x) for fn in functions)

    def subgradient(x):
        values = [fn(x) for fn in functions]
        active = int(np.argmax(values))
        return functions[active].model.subgradient(x)

    M = max(fn.M for fn in functions)
    return ModeledFunction(value, linear_model(subgradient, M, delta), name='pointwise_max')


# ---------------------------------------------------------------------------
# Constrained problems
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConstrainedProblem:
    objective: ModeledFunction
    constraints: ConstraintFamily
    dim: int
    name: str = 'problem'

    @property
    def constraint(self) -> ModeledFunction:
        """g = max_p g_p as a single modeled function."""
        family = self.constraints
        if len(family) == 1:
            return family[0]

        def subgradient(x):
            active = int(np.argmax(family.values(x)))
            return family[active].model.subgradient(x)

        return ModeledFunction(family.value, linear_model(subgradient, max(family.constants)), name='max_constraint')

    @property
    def M_f(self) -> float:
        return self.objective.M

    @property
    def M_g(self) -> float:
        return max(self.constraints.constants)

    def value(self, x) -> float:
        return self.objective(x)

    def constraint_value(self, x) -> float:
        return self.constraints.value(x)


def single_constraint_problem(objective: ModeledFunction, constraint: Optional[ModeledFunction],
                              dim: int, name='problem') -> ConstrainedProblem:
    if constraint is None:
        constraint = constant(-1.0, dim)
    return ConstrainedProblem(objective, ConstraintFamily([constraint]), dim, name)


# ---------------------------------------------------------------------------
# Fermat-Torricelli-Steiner instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FTSInstance:
    points: np.ndarray          # r x n
    rows: np.ndarray            # m x n
    seed: Optional[int] = None

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if points.shape[1] != rows.shape[1]:
            raise ConfigurationError(f"Points live in R^{points.shape[1]} but constraint rows in R^{rows.shape[1]}")
        if not (np.all(np.isfinite(points)) and np.all(np.isfinite(rows))):
            raise ConfigurationError("Instance coordinates must be finite")
        object.__setattr__(self, 'points', points)
        object.__setattr__(self, 'rows', rows)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def r(self) -> int:
        return self.points.shape[0]

    @property
    def m(self) -> int:
        return self.rows.shape[0]

    def to_dict(self) -> dict:
        return {'n': self.n, 'r': self.r, 'm': self.m, 'seed': self.seed,
                'points': self.points.tolist(), 'rows': self.rows.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> 'FTSInstance':
        instance = cls(np.array(data['points'], dtype=float), np.array(data['rows'], dtype=float), data.get('seed'))
        if (instance.n, instance.r, instance.m) != (data['n'], data['r'], data['m']):
            raise ConfigurationError("Serialized instance sizes do not match its matrices")
        return instance

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> 'FTSInstance':
        return cls.from_dict(json.loads(text))

    def save(self, path: str) -> None:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, 'w') as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> 'FTSInstance':
        with open(path, 'r') as f:
            return cls.from_json(f.read())


def fts_objective(instance: FTSInstance, x) -> tuple[float, np.ndarray]:
    """f(x) = (1/r) sum_k ||x - P_k||_2 and a subgradient (zero term at x = P_k)."""
    x = as_vector(x)
    diffs = x - instance.points
    dists = np.linalg.norm(diffs, axis=1)
    safe = np.where(dists > 0, dists, 1.0)
    weights = np.where(dists > 0, 1.0 / safe, 0.0)
    return float(np.mean(dists)), (diffs * weights[:, None]).mean(axis=0)


def max_linear_constraint(instance: FTSInstance, x) -> tuple[float, np.ndarray, int]:
    """
    g(x) = max_i <alpha_i, x>; the subgradient is the lowest-index maximising row.

    The returned index is 0-based, matching constraint_index in solver records;
    add 1 for the 1-based row numbering used in tables.
    """
    x = as_vector(x)
    values = instance.rows @ x
    active = int(np.argmax(values))
    return float(values[active]), np.array(instance.rows[active]), active


def generate_fts(n: int, r: int, m: int, seed: int) -> FTSInstance:
    """
    Every coordinate of every point and constraint row is drawn i.i.d. from
    Normal(1, 2) by numpy's PCG64 generator (ziggurat sampler): points first
    (r x n), then rows (m x n).
    """
    if min(n, r, m) < 1:
        raise ConfigurationError(f"Instance sizes must be positive, got n={n}, r={r}, m={m}")
    rng = np.random.default_rng(seed)
    points = rng.normal(GAUSSIAN_MEAN, GAUSSIAN_STD, size=(r, n))
    rows = rng.normal(GAUSSIAN_MEAN, GAUSSIAN_STD, size=(m, n))
    return FTSInstance(points, rows, seed)


def fts_problem(instance: FTSInstance, geom: Optional[Geometry] = None, delta: float = 0.0) -> ConstrainedProblem:
    """M_f = 1 and M_g = max_i ||alpha_i||_* for the FTS family."""
    geom = geom or EuclideanGeometry()
    objective = ModeledFunction(lambda x: fts_objective(instance, x)[0],
                                linear_model(lambda x: fts_objective(instance, x)[1], 1.0, delta),
                                name='fts_objective')
    constraints = LinearConstraintFamily(instance.rows, geom=geom, delta=delta)
    return ConstrainedProblem(objective, constraints, instance.n, name='fts')


# ---------------------------------------------------------------------------
# Reference optimum
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    f_star: float
    x_star: np.ndarray
    method: str
    certified_accuracy: float


def _as_problem(problem) -> ConstrainedProblem:
    if isinstance(problem, FTSInstance):
        return fts_problem(problem)
    return problem


def _feasible(problem: ConstrainedProblem, Q: FeasibleSet, x, slack: float = 0.0) -> bool:
    return Q.contains(x, tol=1e-12) and problem.constraint_value(x) <= slack


def _reference_1d(problem, Q, accuracy) -> ReferenceSolution:
    lower, upper = Q.bounds()
    lo, hi = float(lower[0]), float(upper[0])
    if hi - lo <= 0:
        x = np.array([lo])
        if problem.constraint_value(x) > 0:
            raise InfeasibleProblemError("The single point of Q violates the constraint")
        return ReferenceSolution(problem.value(x), x, 'point', 0.0)

    def g(t):
        return problem.constraint_value(np.array([t]))

    grid = np.linspace(lo, hi, 2001)
    feasible = np.array([g(t) <= 0 for t in grid])
    if not feasible.any():
        raise InfeasibleProblemError("No grid point of Q satisfies g(x) <= 0")
    first, last = int(np.argmax(feasible)), len(grid) - 1 - int(np.argmax(feasible[::-1]))
    a, b = grid[first], grid[last]
    # convex g: the feasible set is an interval, sharpen its ends
    if first > 0:
        a = brentq(g, grid[first - 1], grid[first], xtol=1e-14) if g(grid[first - 1]) > 0 > g(grid[first]) else a
    if last < len(grid) - 1:
        b = brentq(g, grid[last], grid[last + 1], xtol=1e-14) if g(grid[last]) < 0 < g(grid[last + 1]) else b

    def f(t):
        return problem.value(np.array([t]))

    candidates = [a, b]
    if b > a:
        result = minimize_scalar(f, bounds=(a, b), method='bounded', options={'xatol': min(accuracy, 1e-5) * 1e-3})
        candidates.append(float(result.x))
    best = min(candidates, key=f)
    return ReferenceSolution(f(best), np.array([best]), 'bounded-scalar', accuracy)


def _reference_grid(problem, Q, accuracy, points_per_axis=None) -> ReferenceSolution:
    n = problem.dim
    points_per_axis = points_per_axis or (41 if n <= 2 else 21)
    lower, upper = Q.bounds()
    lower, upper = np.array(lower, dtype=float), np.array(upper, dtype=float)
    best_x, best_f = None, math.inf
    spacing = float(np.max(upper - lower)) / (points_per_axis - 1)
    for _ in range(80):
        axes = [np.linspace(lower[i], upper[i], points_per_axis) for i in range(n)]
        mesh = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, n)
        for x in mesh:
            if _feasible(problem, Q, x):
                value = problem.value(x)
                if value < best_f:
                    best_f, best_x = value, x
        if best_x is None:
            raise InfeasibleProblemError("No grid point of Q satisfies g(x) <= 0")
        spacing = float(np.max(upper - lower)) / (points_per_axis - 1)
        if spacing < accuracy / 10:
            break
        full_lower, full_upper = Q.bounds()
        lower = np.maximum(best_x - 2 * spacing, full_lower)
        upper = np.minimum(best_x + 2 * spacing, full_upper)
    return ReferenceSolution(best_f, np.array(best_x), 'grid-refinement', accuracy)


def _reference_slsqp(problem, Q, accuracy) -> ReferenceSolution:
    family = problem.constraints
    constraints = [{'type': 'ineq',
                    'fun': lambda x: family.offsets - family.rows @ x,
                    'jac': lambda x: -family.rows}]
    bounds = None
    if isinstance(Q, EuclideanBall):
        c, radius = Q.center, Q.radius
        constraints.append({'type': 'ineq',
                            'fun': lambda x: np.array([radius ** 2 - float(np.dot(x - c, x - c))]),
                            'jac': lambda x: np.atleast_2d(-2.0 * (x - c))})
    elif isinstance(Q, Box):
        bounds = list(zip(Q.lower, Q.upper))
    elif isinstance(Q, Simplex):
        bounds = [(0.0, 1.0)] * problem.dim
        constraints.append({'type': 'eq', 'fun': lambda x: np.array([np.sum(x) - 1.0]),
                            'jac': lambda x: np.ones((1, x.shape[0]))})

    start = Q.project(np.zeros(problem.dim))
    result = minimize(problem.value, start, jac=problem.objective.model.subgradient, method='SLSQP',
                      bounds=bounds, constraints=constraints, options={'ftol': 1e-14, 'maxiter': 2000})
    x_star = Q.project(np.asarray(result.x, dtype=float))
    violation = problem.constraint_value(x_star)
    if violation > accuracy:
        raise InfeasibleProblemError(f"SLSQP ended {violation:.3e} outside the constraint: {result.message}")
    if not result.success:
        logger.warning(f"[REFERENCE] SLSQP reported: {result.message}")
    return ReferenceSolution(problem.value(x_star), x_star, 'slsqp', accuracy)


def _reference_subgradient(problem, Q, accuracy, max_iterations=200_000) -> ReferenceSolution:
    """Euclidean projected subgradient with constraint switching and averaged output."""
    target = accuracy / 10
    lower, upper = Q.bounds()
    radius = float(np.linalg.norm(np.asarray(upper) - np.asarray(lower)))
    M = max(problem.M_f, problem.M_g)
    horizon = min(int(math.ceil(2 * (M * radius / target) ** 2)), max_iterations)
    x = Q.project(np.zeros(problem.dim))
    total, weight = np.zeros(problem.dim), 0.0
    objective, constraint = problem.objective, problem.constraint
    for _ in range(horizon):
        if constraint(x) <= target:
            s = objective.model.subgradient(x)
            step = target / max(float(np.dot(s, s)), 1e-300)
            total += step * x
            weight += step
        else:
            s = constraint.model.subgradient(x)
            step = constraint(x) / max(float(np.dot(s, s)), 1e-300)
        x = Q.project(x - step * s)
    if weight == 0.0:
        raise InfeasibleProblemError("The subgradient reference run never reached the feasible region")
    x_star = total / weight
    reached = M * radius * math.sqrt(2.0 / horizon)
    if horizon == max_iterations:
        logger.warning(f"[REFERENCE] Horizon capped at {max_iterations}; accuracy about {reached:.3e}")
    return ReferenceSolution(problem.value(x_star), x_star, 'projected-subgradient', max(reached, target))


def reference_optimum(problem: Union[ConstrainedProblem, FTSInstance], geom: Geometry, Q: FeasibleSet,
                      accuracy: float) -> ReferenceSolution:
    """
    f* and x* of min f(x) s.t. x in Q, g(x) <= 0, computed without the
    switching solvers: bounded scalar minimisation for n = 1, grid refinement
    for n <= 3, SLSQP when the constraints are linear rows, and a long
    projected-subgradient run otherwise.
    """
    if not accuracy > 0:
        raise ConfigurationError(f"Reference accuracy must be positive, got {accuracy}")
    problem = _as_problem(problem)
    if problem.dim != Q.dim:
        raise ConfigurationError(f"Problem lives in R^{problem.dim} but Q in R^{Q.dim}")
    if isinstance(Q, WholeSpace) and not isinstance(problem.constraints, LinearConstraintFamily):
        raise ConfigurationError("The reference oracle needs a bounded Q unless the constraints are linear rows")

    if problem.dim == 1 and not isinstance(Q, WholeSpace):
        solution = _reference_1d(problem, Q, accuracy)
    elif problem.dim <= 3 and not isinstance(Q, WholeSpace):
        solution = _reference_grid(problem, Q, accuracy)
    elif isinstance(problem.constraints, LinearConstraintFamily):
        solution = _reference_slsqp(problem, Q, accuracy)
    else:
        solution = _reference_subgradient(problem, Q, accuracy)
    logger.debug(f"[REFERENCE] {solution.method}: f*={solution.f_star:.9f}")
    return solution
