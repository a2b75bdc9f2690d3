"""
Reference functions, Bregman divergences, feasible sets and the Mirror step.

A geometry is a convex differentiable reference function d together with the
primal/dual norm pair used to size subgradients. The Mirror step

    Mirr_h(x, psi) = argmin_{y in Q} { psi(y, x) + V_d(y, x) / h }

is solved in closed form for the supported (geometry, set) pairs and by a
projected-gradient fallback otherwise. Strong convexity of d is never assumed.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import rel_entr, xlogy

from utils.errors import ConfigurationError, DomainError, InnerSolverError

ENTROPY_FLOOR = 1e-300
INNER_TOL = 1e-12
INNER_MAX_ITER = 10_000


def as_vector(x, name='x') -> np.ndarray:
    """Coerces x to a finite one-dimensional float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DomainError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def _same_dim(a: np.ndarray, b: np.ndarray, names=('y', 'x')) -> None:
    if a.shape != b.shape:
        raise DomainError(f"Dimension mismatch: {names[0]} has {a.shape[0]}, {names[1]} has {b.shape[0]}")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# Geometries
# ---------------------------------------------------------------------------

class Geometry(ABC):
    name = 'geometry'

    @abstractmethod
    def d(self, x: np.ndarray) -> float:
        """Reference function value."""

    @abstractmethod
    def grad_d(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the reference function."""

    @abstractmethod
    def norm(self, x: np.ndarray) -> float:
        """Primal norm on E."""

    @abstractmethod
    def dual_norm(self, s: np.ndarray) -> float:
        """Dual norm on E*."""

    def check_domain(self, x: np.ndarray, name='x', strict=True) -> None:
        """Raises DomainError when x is outside dom(grad_d) (strict) or dom(d)."""

    def clamp(self, x: np.ndarray) -> np.ndarray:
        return x

    def divergence(self, y: np.ndarray, x: np.ndarray) -> float:
        return float(self.d(y) - self.d(x) - np.dot(self.grad_d(x), y - x))


@dataclass(frozen=True)
class EuclideanGeometry(Geometry):
    """d(x) = 0.5 * ||x||_2^2, V_d(y, x) = 0.5 * ||y - x||_2^2."""

    name: str = 'euclidean'

    def d(self, x):
        return 0.5 * float(np.dot(x, x))

    def grad_d(self, x):
        return np.array(x, dtype=float)

    def norm(self, x):
        return float(np.linalg.norm(x))

    def dual_norm(self, s):
        return float(np.linalg.norm(s))

    def divergence(self, y, x):
        diff = y - x
        return 0.5 * float(np.dot(diff, diff))


@dataclass(frozen=True)
class EntropyGeometry(Geometry):
    """
    Negative entropy d(x) = sum x_i ln x_i on the positive orthant.

    V_d(y, x) = sum y_i ln(y_i / x_i) - y_i + x_i, which is the KL divergence on
    the simplex. Paired with the l1 norm and its dual, the l_inf norm.
    """

    name: str = 'entropy'

    def check_domain(self, x, name='x', strict=True):
        if strict and np.any(x <= 0.0):
            raise DomainError(f"{name} has non-positive entries; entropy gradient undefined")
        if not strict and np.any(x < 0.0):
            raise DomainError(f"{name} has negative entries; outside the entropy domain")

    def clamp(self, x):
        return np.maximum(x, ENTROPY_FLOOR)

    def d(self, x):
        return float(np.sum(xlogy(x, x)))

    def grad_d(self, x):
        return 1.0 + np.log(np.maximum(x, ENTROPY_FLOOR))

    def norm(self, x):
        return float(np.sum(np.abs(x)))

    def dual_norm(self, s):
        return float(np.max(np.abs(s)))

    def divergence(self, y, x):
        return float(np.sum(rel_entr(y, x)) - np.sum(y) + np.sum(x))


def get_geometry(name: str) -> Geometry:
    geometries = {'euclidean': EuclideanGeometry, 'entropy': EntropyGeometry}
    if name not in geometries:
        raise ConfigurationError(f"Unknown geometry '{name}', expected one of {sorted(geometries)}")
    return geometries[name]()


def bregman_divergence(geom: Geometry, y, x) -> float:
    """V_d(y, x) = d(y) - d(x) - <grad d(x), y - x>."""
    y = as_vector(y, 'y')
    x = as_vector(x, 'x')
    _same_dim(y, x)
    geom.check_domain(x, 'x', strict=True)
    geom.check_domain(y, 'y', strict=False)
    return max(geom.divergence(y, x), 0.0)


# ---------------------------------------------------------------------------
# Feasible sets
# ---------------------------------------------------------------------------

class FeasibleSet(ABC):
    variant = 'set'

    @property
    @abstractmethod
    def dim(self) -> int:
        ...

    @abstractmethod
    def project(self, x: np.ndarray) -> np.ndarray:
        """Euclidean projection onto the set."""

    @abstractmethod
    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        ...

    @abstractmethod
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box of the set."""


@dataclass(frozen=True)
class WholeSpace(FeasibleSet):
    n: int
    variant: str = field(default='whole-space', init=False)

    def __post_init__(self):
        if int(self.n) < 1:
            raise ConfigurationError("WholeSpace dimension must be positive")

    @property
    def dim(self):
        return int(self.n)

    def project(self, x):
        return np.array(x, dtype=float)

    def contains(self, x, tol=1e-12):
        return x.shape == (self.dim,)

    def bounds(self):
        raise ConfigurationError("The whole space has no bounding box")


@dataclass(frozen=True, eq=False)
class EuclideanBall(FeasibleSet):
    center: np.ndarray
    radius: float
    variant: str = field(default='euclidean-ball', init=False)

    def __post_init__(self):
        object.__setattr__(self, 'center', _frozen(as_vector(self.center, 'center')))
        if not self.radius >= 0:
            raise ConfigurationError(f"Ball radius must be non-negative, got {self.radius}")

    @property
    def dim(self):
        return self.center.shape[0]

    def project(self, x):
        diff = x - self.center
        dist = float(np.linalg.norm(diff))
        if dist <= self.radius:
            return np.array(x, dtype=float)
        return self.center + diff * (self.radius / dist)

    def contains(self, x, tol=1e-12):
        return x.shape == self.center.shape and float(np.linalg.norm(x - self.center)) <= self.radius + tol

    def bounds(self):
        return self.center - self.radius, self.center + self.radius


@dataclass(frozen=True, eq=False)
class Box(FeasibleSet):
    lower: np.ndarray
    upper: np.ndarray
    variant: str = field(default='box', init=False)

    def __post_init__(self):
        lower = as_vector(self.lower, 'lower')
        upper = as_vector(self.upper, 'upper')
        _same_dim(lower, upper, ('lower', 'upper'))
        if np.any(lower > upper):
            raise ConfigurationError("Box is empty: some lower bound exceeds its upper bound")
        object.__setattr__(self, 'lower', _frozen(lower))
        object.__setattr__(self, 'upper', _frozen(upper))

    @property
    def dim(self):
        return self.lower.shape[0]

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def contains(self, x, tol=1e-12):
        return x.shape == self.lower.shape and bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def bounds(self):
        return np.array(self.lower), np.array(self.upper)


@dataclass(frozen=True)
class Simplex(FeasibleSet):
    """The probability simplex {x >= 0, sum x = 1}."""

    n: int
    variant: str = field(default='simplex', init=False)

    def __post_init__(self):
        if int(self.n) < 1:
            raise ConfigurationError("Simplex dimension must be positive")

    @property
    def dim(self):
        return int(self.n)

    def project(self, x):
        # Sort-based projection: find the threshold theta with sum(max(x - theta, 0)) = 1
        u = np.sort(x)[::-1]
        css = np.cumsum(u) - 1.0
        ind = np.arange(1, x.shape[0] + 1)
        cond = u - css / ind > 0
        rho = ind[cond][-1]
        theta = css[cond][-1] / rho
        return np.maximum(x - theta, 0.0)

    def contains(self, x, tol=1e-12):
        return x.shape == (self.dim,) and bool(np.all(x >= -tol)) and abs(float(np.sum(x)) - 1.0) <= tol * max(1, self.dim)

    def bounds(self):
        return np.zeros(self.dim), np.ones(self.dim)


def unit_ball(n: int) -> EuclideanBall:
    return EuclideanBall(np.zeros(n), 1.0)


def unit_box(n: int) -> Box:
    return Box(-np.ones(n), np.ones(n))


def get_feasible_set(name: str, n: int) -> FeasibleSet:
    builders = {'unit-ball': unit_ball, 'whole-space': WholeSpace, 'box': unit_box, 'simplex': Simplex}
    if name not in builders:
        raise ConfigurationError(f"Unknown feasible set '{name}', expected one of {sorted(builders)}")
    return builders[name](n)


# ---------------------------------------------------------------------------
# Mirror step
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearizedModel:
    """
    A model evaluated at a point x:
    psi(y, x) = <slope, y - x> + r(y) - r(x), with r an optional simple term.
    """

    slope: np.ndarray
    composite: Optional[object] = None

    def psi(self, y, x) -> float:
        value = float(np.dot(self.slope, y - x))
        if self.composite is not None:
            value += float(self.composite(y)) - float(self.composite(x))
        return value

    @property
    def is_linear(self) -> bool:
        return self.composite is None or getattr(self.composite, 'is_constant', False)


def argmin_reference(geom: Geometry, Q: FeasibleSet) -> np.ndarray:
    """x^0 = argmin_{x in Q} d(x), in closed form for every supported pair."""
    n = Q.dim
    if isinstance(geom, EuclideanGeometry):
        return Q.project(np.zeros(n))
    if isinstance(geom, EntropyGeometry):
        if isinstance(Q, Simplex):
            return np.full(n, 1.0 / n)
        if isinstance(Q, WholeSpace):
            return np.full(n, np.exp(-1.0))
        if isinstance(Q, Box):
            return np.clip(np.full(n, np.exp(-1.0)), np.maximum(Q.lower, ENTROPY_FLOOR), Q.upper)
    raise ConfigurationError(f"No reference minimiser for geometry '{geom.name}' on set '{Q.variant}'")


def _check_supported(geom: Geometry, Q: FeasibleSet) -> None:
    if isinstance(geom, EntropyGeometry):
        if isinstance(Q, EuclideanBall):
            raise ConfigurationError("Entropy geometry is not supported on a Euclidean ball")
        if isinstance(Q, Box) and np.any(Q.upper <= 0.0):
            raise ConfigurationError("Entropy geometry needs a box that meets the positive orthant")


def _closed_form_step(geom, Q, x, h, model: LinearizedModel) -> Optional[np.ndarray]:
    s = model.slope
    if isinstance(geom, EuclideanGeometry):
        if model.is_linear:
            return Q.project(x - h * s)
        separable = getattr(model.composite, 'separable', False)
        if isinstance(Q, WholeSpace):
            return model.composite.prox(x - h * s, h)
        if isinstance(Q, Box) and separable:
            return np.clip(model.composite.prox(x - h * s, h), Q.lower, Q.upper)
        return None

    if isinstance(geom, EntropyGeometry) and model.is_linear:
        log_x = np.log(np.maximum(x, ENTROPY_FLOOR))
        if isinstance(Q, Simplex):
            w = log_x - h * s
            w -= np.max(w)
            y = np.exp(w)
            return geom.clamp(y / np.sum(y))
        if isinstance(Q, WholeSpace):
            return geom.clamp(np.exp(log_x - h * s))
        if isinstance(Q, Box):
            return geom.clamp(np.clip(np.exp(log_x - h * s), Q.lower, Q.upper))
    return None


def numeric_mirror_step(geom: Geometry, Q: FeasibleSet, x, h: float, model: LinearizedModel,
                        tol: float = INNER_TOL, max_iter: int = INNER_MAX_ITER) -> np.ndarray:
    """
    Solves the prox subproblem h * psi(y, x) + V_d(y, x) -> min over Q by
    projected gradient with backtracking. Linear models only.
    """
    if not model.is_linear:
        raise ConfigurationError("The numeric Mirror step handles linear models only")
    x = as_vector(x)
    s = model.slope
    grad_x = geom.grad_d(x)

    def objective(y):
        return h * float(np.dot(s, y - x)) + geom.divergence(y, x)

    def gradient(y):
        return h * s + geom.grad_d(y) - grad_x

    y = geom.clamp(Q.project(np.array(x)))
    t = 1.0
    change = np.inf
    for iteration in range(1, max_iter + 1):
        fy = objective(y)
        g = gradient(y)
        while True:
            candidate = geom.clamp(Q.project(y - t * g))
            diff = candidate - y
            bound = fy + float(np.dot(g, diff)) + float(np.dot(diff, diff)) / (2.0 * t)
            if objective(candidate) <= bound + 1e-13 * max(1.0, abs(fy)):
                break
            t *= 0.5
            if t < 1e-20:
                raise InnerSolverError("Backtracking collapsed in the Mirror-step fallback",
                                       residual=float(np.linalg.norm(diff)), iterations=iteration)
        change = float(np.linalg.norm(diff))
        y = candidate
        if change < tol:
            return y
        t = min(2.0 * t, 1e6)
    raise InnerSolverError("Mirror-step fallback did not converge", residual=change, iterations=max_iter)


def mirror_step(geom: Geometry, Q: FeasibleSet, x, h: float, model: LinearizedModel) -> np.ndarray:
    """Mirr_h(x, psi): argmin over Q of psi(y, x) + V_d(y, x) / h."""
    if not h > 0:
        raise ConfigurationError(f"Step size must be positive, got {h}")
    x = as_vector(x)
    if x.shape[0] != Q.dim:
        raise DomainError(f"Dimension mismatch: x has {x.shape[0]}, Q has {Q.dim}")
    slope = as_vector(model.slope, 'slope')
    _same_dim(slope, x, ('slope', 'x'))
    _check_supported(geom, Q)

    y = _closed_form_step(geom, Q, x, h, model)
    if y is not None:
        return y
    if not model.is_linear:
        raise ConfigurationError(
            f"Composite term has no closed-form prox for geometry '{geom.name}' on set '{Q.variant}'")
    return numeric_mirror_step(geom, Q, x, h, model)
