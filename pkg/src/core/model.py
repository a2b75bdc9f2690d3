"""
Inexact (delta, phi, V)-models of convex functionals.

A model of f at x is a function psi(., x), convex in its first argument with
psi(x, x) = 0, such that for all x, y in Q

    f(x) + psi(y, x) <= f(y)                        (lower inequality)
    -psi(y, x) <= phi^{-1}(V_d(y, x)) + delta       (upper inequality)

Relative Lipschitz continuity with constant M is the case
phi^{-1}(v) = M * sqrt(2 v), phi^*(h) = h^2 M^2 / 2.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from core.geometry import Geometry, LinearizedModel, as_vector, bregman_divergence
from utils.errors import ConfigurationError

CHECK_TOL = 1e-9


# ---------------------------------------------------------------------------
# phi functions
# ---------------------------------------------------------------------------

class Phi(ABC):
    """Strictly increasing phi with phi(0) = 0, its inverse and its conjugate."""

    @abstractmethod
    def __call__(self, t: float) -> float:
        ...

    @abstractmethod
    def inverse(self, v: float) -> float:
        ...

    @abstractmethod
    def conjugate(self, h: float) -> float:
        ...


@dataclass(frozen=True)
class QuadraticPhi(Phi):
    M: float

    def __post_init__(self):
        if not self.M > 0:
            raise ConfigurationError(f"Relative Lipschitz constant must be positive, got {self.M}")

    def __call__(self, t):
        return t * t / (2.0 * self.M ** 2)

    def inverse(self, v):
        return self.M * math.sqrt(2.0 * max(v, 0.0))

    def conjugate(self, h):
        return h * h * self.M ** 2 / 2.0


# ---------------------------------------------------------------------------
# Simple composite terms
# ---------------------------------------------------------------------------

class SimpleTerm(ABC):
    separable = False
    is_constant = False

    @abstractmethod
    def __call__(self, x: np.ndarray) -> float:
        ...

    @abstractmethod
    def prox(self, v: np.ndarray, t: float) -> np.ndarray:
        """argmin_y r(y) + ||y - v||^2 / (2 t)."""


@dataclass(frozen=True)
class ZeroTerm(SimpleTerm):
    separable = True
    is_constant = True

    def __call__(self, x):
        return 0.0

    def prox(self, v, t):
        return np.array(v, dtype=float)


@dataclass(frozen=True)
class ConstantTerm(SimpleTerm):
    c: float
    separable = True
    is_constant = True

    def __call__(self, x):
        return float(self.c)

    def prox(self, v, t):
        return np.array(v, dtype=float)


@dataclass(frozen=True)
class L1Term(SimpleTerm):
    """r(x) = weight * ||x||_1, prox is soft-thresholding."""

    weight: float = 1.0
    separable = True

    def __post_init__(self):
        if self.weight < 0:
            raise ConfigurationError("L1 weight must be non-negative")

    def __call__(self, x):
        return self.weight * float(np.sum(np.abs(x)))

    def prox(self, v, t):
        return np.sign(v) * np.maximum(np.abs(v) - t * self.weight, 0.0)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InexactModel:
    subgradient: Callable[[np.ndarray], np.ndarray]
    phi: Phi
    delta: float = 0.0
    composite: Optional[SimpleTerm] = None

    def linearize(self, x) -> LinearizedModel:
        return LinearizedModel(slope=as_vector(self.subgradient(x), 'subgradient'), composite=self.composite)

    def psi(self, y, x) -> float:
        return self.linearize(x).psi(as_vector(y, 'y'), as_vector(x))

    def phi_conjugate(self, h: float) -> float:
        return self.phi.conjugate(h)

    def phi_inverse(self, v: float) -> float:
        return self.phi.inverse(v)

    @property
    def M(self) -> float:
        return getattr(self.phi, 'M', float('nan'))


def _check_scalars(M, delta):
    if not M > 0:
        raise ConfigurationError(f"Relative Lipschitz constant must be positive, got {M}")
    if not delta >= 0:
        raise ConfigurationError(f"Model inexactness delta must be non-negative, got {delta}")


def linear_model(oracle: Callable[[np.ndarray], np.ndarray], M: float, delta: float = 0.0) -> InexactModel:
    """psi(y, x) = <oracle(x), y - x> with the relative-Lipschitz phi."""
    _check_scalars(M, delta)
    return InexactModel(subgradient=oracle, phi=QuadraticPhi(float(M)), delta=float(delta))


def composite_model(oracle: Callable[[np.ndarray], np.ndarray], r: SimpleTerm,
                    M: float = 1.0, delta: float = 0.0) -> InexactModel:
    """psi(y, x) = <grad f(x), y - x> + r(y) - r(x)."""
    _check_scalars(M, delta)
    if not callable(r) or not callable(getattr(r, 'prox', None)):
        raise ConfigurationError("Composite term must be callable and expose a closed-form prox(v, t)")
    return InexactModel(subgradient=oracle, phi=QuadraticPhi(float(M)), delta=float(delta), composite=r)


@dataclass(frozen=True)
class ModeledFunction:
    """A value oracle paired with its inexact model."""

    value: Callable[[np.ndarray], float]
    model: InexactModel
    name: str = 'f'

    def __call__(self, x) -> float:
        return float(self.value(x))

    @property
    def M(self) -> float:
        return self.model.M


class ConstraintFamily:
    """
    Constraints g_1..g_m with g(x) = max_p g_p(x). Values come from
    values(x) without touching any subgradient oracle.
    """

    def __init__(self, functions: Sequence[ModeledFunction]):
        if len(functions) == 0:
            raise ConfigurationError("A constraint family needs at least one constraint")
        self._functions = tuple(functions)

    def __len__(self):
        return len(self._functions)

    def __getitem__(self, p) -> ModeledFunction:
        return self._functions[p]

    def values(self, x) -> np.ndarray:
        return np.array([fn(x) for fn in self._functions], dtype=float)

    def value(self, x) -> float:
        return float(np.max(self.values(x)))

    @property
    def constants(self) -> tuple[float, ...]:
        return tuple(self[p].M for p in range(len(self)))


class LinearConstraintFamily(ConstraintFamily):
    """g_p(x) = <rows[p], x> - offsets[p], constants measured in the geometry's dual norm."""

    def __init__(self, rows, offsets=None, geom: Optional[Geometry] = None, delta: float = 0.0):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        offsets = np.zeros(rows.shape[0]) if offsets is None else np.asarray(offsets, dtype=float)
        if offsets.shape != (rows.shape[0],):
            raise ConfigurationError("One offset per constraint row is required")
        self.rows = rows
        self.offsets = offsets
        self.delta = float(delta)
        dual = geom.dual_norm if geom is not None else np.linalg.norm
        self._constants = tuple(max(float(dual(row)), 1e-12) for row in rows)
        self._cache: dict[int, ModeledFunction] = {}

    def __len__(self):
        return self.rows.shape[0]

    def __getitem__(self, p) -> ModeledFunction:
        p = int(p)
        if p not in self._cache:
            row, offset = self.rows[p], self.offsets[p]
            self._cache[p] = ModeledFunction(
                value=lambda x, row=row, offset=offset: float(np.dot(row, x) - offset),
                model=linear_model(lambda x, row=row: np.array(row), self._constants[p], self.delta),
                name=f"g_{p}",
            )
        return self._cache[p]

    def values(self, x) -> np.ndarray:
        return self.rows @ x - self.offsets

    @property
    def constants(self) -> tuple[float, ...]:
        return self._constants


# ---------------------------------------------------------------------------
# Model checking
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ModelViolation:
    kind: str            # 'diagonal', 'lower' or 'upper'
    index: int
    x: np.ndarray
    y: np.ndarray
    excess: float


@dataclass
class ModelCheckReport:
    checked: int = 0
    violations: list[ModelViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def by_kind(self, kind: str) -> list[ModelViolation]:
        return [v for v in self.violations if v.kind == kind]


def check_model(model: InexactModel, f: Callable[[np.ndarray], float], geom: Geometry,
                sample, tol: float = CHECK_TOL) -> ModelCheckReport:
    """Lists every sampled pair (x, y) that breaks one of the model inequalities."""
    report = ModelCheckReport()
    for index, (x, y) in enumerate(sample):
        x = as_vector(x)
        y = as_vector(y, 'y')
        report.checked += 1

        at_diagonal = model.psi(x, x)
        if abs(at_diagonal) > tol:
            report.violations.append(ModelViolation('diagonal', index, x, y, abs(at_diagonal)))

        psi = model.psi(y, x)
        lower_excess = float(f(x)) + psi - float(f(y))
        if lower_excess > tol:
            report.violations.append(ModelViolation('lower', index, x, y, lower_excess))

        upper_excess = -psi - model.phi_inverse(bregman_divergence(geom, y, x)) - model.delta
        if upper_excess > tol:
            report.violations.append(ModelViolation('upper', index, x, y, upper_excess))
    return report
