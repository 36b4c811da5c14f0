"""Losses, gradients and single-example SGD steps for the two problems.

Regression uses the squared residual ``(x.w - y)^2`` with step
``w - 2*eta*(x.w - y)*x``. Hinge classification uses ``max(1 - (x.w)y, 0)``
under the constraint ``||w|| = A``: a plain gradient step followed by
projection back onto the sphere of radius ``A``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ContractViolation, DegenerateProjection, DimensionError, NonDifferentiablePoint
from .vecspace import LabeledExample

NORM_TOL = 1e-9


class Kind(str, Enum):
    REGRESSION = "regression"
    HINGE = "hinge"


@dataclass(frozen=True)
class Problem:
    kind: Kind
    eta: float
    norm: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not self.eta > 0:
            raise ValueError("learning rate must be > 0")
        if not self.norm > 0:
            raise ValueError("norm constraint A must be > 0")

    def g(self, value):
        """Monotone score transform: sqrt for regression, identity for hinge."""
        return np.sqrt(value) if self.kind is Kind.REGRESSION else value


def _check_dims(x, w):
    if np.shape(x) != np.shape(w):
        raise DimensionError(f"x has shape {np.shape(x)} but w has shape {np.shape(w)}")


def check_norm(w, A: float) -> None:
    n = float(np.linalg.norm(w))
    if abs(n - A) > NORM_TOL * max(1.0, A):
        raise ContractViolation(f"hinge hypothesis must have norm {A}, got {n!r}")


def check_hinge_label(y: float) -> None:
    if abs(y) != 1.0:
        raise ContractViolation(f"hinge labels must be +1 or -1, got {y!r}")


def _raw_loss(kind: Kind, x, y, w) -> float:
    if kind is Kind.REGRESSION:
        return float((x @ w - y) ** 2)
    return float(max(1.0 - (x @ w) * y, 0.0))


def loss(problem: Problem, ex: LabeledExample, w) -> float:
    w = np.asarray(w, dtype=np.float64)
    _check_dims(ex.x, w)
    if problem.kind is Kind.HINGE:
        check_hinge_label(ex.y)
        check_norm(w, problem.norm)
    return _raw_loss(problem.kind, ex.x, ex.y, w)


def gradient(problem: Problem, ex: LabeledExample, w) -> np.ndarray:
    """Analytic (sub)gradient in w; at the hinge kink the active branch is used."""
    w = np.asarray(w, dtype=np.float64)
    _check_dims(ex.x, w)
    if problem.kind is Kind.REGRESSION:
        return 2.0 * (ex.x @ w - ex.y) * ex.x
    if (ex.x @ w) * ex.y <= 1.0:
        return -ex.y * ex.x
    return np.zeros_like(w)


def sgd_step_regression(ex: LabeledExample, w, eta: float) -> np.ndarray:
    return update_regression(ex.x, ex.y, w, eta)


def sgd_step_hinge(ex: LabeledExample, w, eta: float, A: float = 1.0) -> np.ndarray:
    """Projected step: ``s = xy`` when ``(x.w)y <= 1`` (else 0), then rescale to norm A."""
    return update_hinge(ex.x, ex.y, w, eta, A)


def update_regression(x, y: float, w, eta: float) -> np.ndarray:
    """Regression step on a raw row ``x`` (no bias-coordinate check)."""
    w = np.asarray(w, dtype=np.float64)
    _check_dims(x, w)
    return w - 2.0 * eta * (x @ w - y) * x


def update_hinge(x, y: float, w, eta: float, A: float = 1.0) -> np.ndarray:
    """Projected hinge step on a raw row ``x`` (no bias-coordinate check)."""
    w = np.asarray(w, dtype=np.float64)
    _check_dims(x, w)
    check_hinge_label(y)
    check_norm(w, A)
    if (x @ w) * y > 1.0:
        return w.copy()
    v = w + eta * y * x
    n = np.linalg.norm(v)
    if n == 0.0:
        raise DegenerateProjection("w + eta*s is the zero vector")
    return v * (A / n)


def update(problem: Problem, x, y: float, w) -> np.ndarray:
    if problem.kind is Kind.REGRESSION:
        return update_regression(x, y, w, problem.eta)
    return update_hinge(x, y, w, problem.eta, problem.norm)


def sgd_step(problem: Problem, ex: LabeledExample, w) -> np.ndarray:
    return update(problem, ex.x, ex.y, w)


def grad_check(problem: Problem, ex: LabeledExample, w) -> float:
    """Max per-coordinate relative error between the analytic gradient and
    central finite differences with step ``1e-6 * max(1, ||w||)``."""
    w = np.asarray(w, dtype=np.float64)
    _check_dims(ex.x, w)
    if problem.kind is Kind.HINGE and abs(1.0 - (ex.x @ w) * ex.y) <= 1e-6:
        raise NonDifferentiablePoint("hinge loss is not differentiable on the margin")
    analytic = gradient(problem, ex, w)
    h = 1e-6 * max(1.0, float(np.linalg.norm(w)))
    numeric = np.empty_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = h
        numeric[i] = (
            _raw_loss(problem.kind, ex.x, ex.y, w + e) - _raw_loss(problem.kind, ex.x, ex.y, w - e)
        ) / (2 * h)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    err = np.abs(analytic - numeric)
    rel = np.divide(err, scale, out=np.zeros_like(err), where=scale > 0)
    return float(rel.max())


def cosine(a, b) -> float:
    return float(np.dot(a, b) / (math.sqrt(np.dot(a, a)) * math.sqrt(np.dot(b, b))))
