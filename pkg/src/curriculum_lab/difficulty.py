"""Global (ideal) and local difficulty scores.

Both are ``g(loss)``: the global score uses the optimal hypothesis w_bar,
the local score the current one w_t. ``g`` is fixed by the problem (sqrt for
regression, identity for hinge) and is deliberately not configurable.
Passing an externally trained hypothesis as ``w_bar`` gives teacher-based
scoring with the same call.
"""

from __future__ import annotations

import numpy as np

from .losses import Kind, Problem, check_norm, loss
from .vecspace import LabeledExample


def global_score(problem: Problem, ex: LabeledExample, w_bar) -> float:
    return float(problem.g(loss(problem, ex, w_bar)))


def local_score(problem: Problem, ex: LabeledExample, w_t) -> float:
    return float(problem.g(loss(problem, ex, w_t)))


def batch_scores(problem: Problem, X: np.ndarray, y: np.ndarray, w) -> np.ndarray:
    """Scores of every row of ``X`` (bias included) under hypothesis ``w``."""
    w = np.asarray(w, dtype=np.float64)
    margin = X @ w
    if problem.kind is Kind.REGRESSION:
        return np.abs(margin - y)
    check_norm(w, problem.norm)
    return np.maximum(1.0 - margin * y, 0.0)
