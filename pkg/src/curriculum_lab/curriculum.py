"""Finite-pool SGD under ordering policies.

A :class:`Pool` is a planted training set whose examples carry their true
global score. A :class:`SchedulePolicy` picks the next example from the
pool; :func:`run_training` runs the SGD loop and records a
:class:`Trajectory`, and :func:`race` pits policies against each other on
shared seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .difficulty import batch_scores
from .losses import Kind, Problem, check_norm, cosine, update
from .vecspace import BaseDistribution, LabeledExample, RngStream, with_bias

TIE_EPS = 1e-9


@dataclass(frozen=True)
class ScoreLaw:
    """Law of the planted per-example global score.

    ``kind`` is ``constant`` (value ``scale``), ``half_normal`` (scale
    ``scale``) or ``uniform`` (on [0, scale]).
    """

    kind: str = "half_normal"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "half_normal", "uniform"):
            raise ValueError(f"unknown score law {self.kind!r}")
        if self.scale < 0 or (self.kind != "constant" and self.scale == 0):
            raise ValueError("score scale must be positive")

    def sample(self, rng: RngStream, n: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(n, float(self.scale))
        if self.kind == "half_normal":
            return np.abs(rng.gen.standard_normal(n)) * self.scale
        return rng.gen.random(n) * self.scale

    def mean(self) -> float:
        if self.kind == "constant":
            return float(self.scale)
        if self.kind == "half_normal":
            return float(stats.halfnorm(scale=self.scale).mean())
        return self.scale / 2.0

    def std(self) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "half_normal":
            return float(stats.halfnorm(scale=self.scale).std())
        return self.scale / math.sqrt(12.0)


@dataclass(frozen=True, eq=False)
class Pool:
    """Rows of ``X`` are full data points (last coordinate is the bias slot)."""

    kind: Kind
    X: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    w_bar: np.ndarray

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise ValueError("pool needs at least one example")
        if self.y.shape != (len(self.X),) or self.psi.shape != (len(self.X),):
            raise ValueError("labels and scores must match the number of rows")

    def __len__(self):
        return self.X.shape[0]

    def example(self, i: int) -> LabeledExample:
        return LabeledExample(self.X[i], self.y[i])

    def rescaled(self, A: float) -> "Pool":
        """Pool with every row multiplied by ``A`` (bias slot included) and w_bar divided by it."""
        if not A > 0:
            raise ValueError("A must be > 0")
        return Pool(self.kind, self.X * A, self.y.copy(), self.psi.copy(), self.w_bar / A)


def build_pool(
    dist: BaseDistribution,
    w_bar,
    size: int,
    score_law: ScoreLaw,
    rng: RngStream,
    kind: Kind = Kind.REGRESSION,
) -> Pool:
    """Planted pool whose examples have global scores drawn from ``score_law``.

    Regression labels are ``x.w_bar +- psi`` with a fair sign. Hinge labels
    are fair +-1 and each point is moved along the feature part of w_bar
    until ``(x.w_bar) y = 1 - psi``.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    kind = Kind(kind)
    w_bar = np.asarray(w_bar, dtype=np.float64)
    if w_bar.shape != (dist.dim + 1,):
        raise ValueError("w_bar must have length dim + 1")
    F = dist.sample(rng, size)
    psi = score_law.sample(rng, size)
    sign = np.where(rng.gen.random(size) < 0.5, 1.0, -1.0)
    if kind is Kind.REGRESSION:
        X = with_bias(F)
        y = X @ w_bar + sign * psi
    else:
        wf, wb = w_bar[:-1], w_bar[-1]
        nf = float(np.linalg.norm(wf))
        if nf == 0.0:
            raise ValueError("w_bar needs a nonzero feature part")
        e = wf / nf
        t = (sign * (1.0 - psi) - wb) / nf
        F = F - np.outer(F @ e, e) + np.outer(t, e)
        X = with_bias(F)
        y = sign
    return Pool(kind, X, y, psi, w_bar)


class PolicyTag(str, Enum):
    UNIFORM = "uniform"
    CURRICULUM_GLOBAL = "curriculum_global"
    ANTI_CURRICULUM = "anti_curriculum"
    SELF_PACED_LOCAL = "self_paced_local"
    HARD_MINING_LOCAL = "hard_mining_local"
    COMBINED = "combined"


LOCAL_TAGS = (PolicyTag.SELF_PACED_LOCAL, PolicyTag.HARD_MINING_LOCAL, PolicyTag.COMBINED)


@dataclass(frozen=True)
class SchedulePolicy:
    """Ordering policy with linear pacing ``p(t) = p0 + (1 - p0) min(t / horizon, 1)``.

    ``p0 = 1`` switches pacing off (full pool at every step).
    """

    tag: PolicyTag = PolicyTag.UNIFORM
    p0: float = 0.1
    horizon: int = 10_000
    refresh: int = 10

    def __post_init__(self):
        object.__setattr__(self, "tag", PolicyTag(self.tag))
        if not 0 < self.p0 <= 1:
            raise ValueError("p0 must lie in (0, 1]")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.refresh < 1:
            raise ValueError("refresh period must be a positive integer")

    def pacing(self, t: int) -> float:
        return self.p0 + (1.0 - self.p0) * min(t / self.horizon, 1.0)

    def fraction_size(self, t: int, n: int) -> int:
        return max(1, min(n, math.ceil(self.pacing(t) * n - TIE_EPS)))


class SchedulerState:
    """Sort orders used by :func:`next_example`; local scores refresh lazily."""

    def __init__(self, policy: SchedulePolicy, pool: Pool, problem: Problem):
        self.policy = policy
        self.pool = pool
        self.problem = problem
        ids = np.arange(len(pool))
        self.by_psi = np.lexsort((ids, pool.psi))
        self.by_psi_desc = np.lexsort((ids, -pool.psi))
        self.upsilon: Optional[np.ndarray] = None
        self.by_ups: Optional[np.ndarray] = None
        self.by_ups_desc: Optional[np.ndarray] = None
        self.refreshed_at: Optional[int] = None

    def refresh(self, w_t, t: int) -> None:
        ids = np.arange(len(self.pool))
        self.upsilon = batch_scores(self.problem, self.pool.X, self.pool.y, w_t)
        self.by_ups = np.lexsort((ids, self.upsilon))
        self.by_ups_desc = np.lexsort((ids, -self.upsilon))
        self.refreshed_at = t

    def ensure_fresh(self, w_t, t: int) -> None:
        if self.refreshed_at is None or t - self.refreshed_at >= self.policy.refresh:
            self.refresh(w_t, t)


def next_example(
    policy: SchedulePolicy, pool: Pool, w_t, t: int, rng: RngStream, state: Optional[SchedulerState] = None,
    problem: Optional[Problem] = None,
) -> int:
    """Index of the next training example."""
    n = len(pool)
    if state is None:
        state = SchedulerState(policy, pool, problem or Problem(pool.kind, 1.0))
    tag = policy.tag
    if tag is PolicyTag.UNIFORM:
        return int(rng.gen.integers(n))
    k = policy.fraction_size(t, n)
    if tag is PolicyTag.CURRICULUM_GLOBAL:
        return int(state.by_psi[rng.gen.integers(k)])
    if tag is PolicyTag.ANTI_CURRICULUM:
        return int(state.by_psi_desc[rng.gen.integers(k)])
    state.ensure_fresh(w_t, t)
    if tag is PolicyTag.SELF_PACED_LOCAL:
        return int(state.by_ups[rng.gen.integers(k)])
    if tag is PolicyTag.HARD_MINING_LOCAL:
        return int(state.by_ups_desc[rng.gen.integers(k)])
    # combined: every example scoring no worse globally than the k-th easiest, then the locally hardest
    cutoff = pool.psi[state.by_psi[k - 1]]
    eligible = pool.psi <= cutoff
    order = state.by_ups_desc
    return int(order[np.argmax(eligible[order])])


@dataclass
class Trajectory:
    """``steps + 1`` records; record 0 is the initial hypothesis.

    ``metric`` is ||w_t - w_bar|| (regression) or cos(w_t, w_bar) (hinge);
    ``example_id`` is -1 for record 0; ``pool_loss`` is NaN where skipped.
    """

    kind: Kind
    step: np.ndarray
    example_id: np.ndarray
    metric: np.ndarray
    pool_loss: np.ndarray
    w_final: np.ndarray = field(repr=False, default=None)

    def __len__(self):
        return len(self.step)

    def records(self) -> list[dict]:
        return [
            {
                "step": int(s),
                "example_id": int(i),
                "metric": float(m),
                "pool_loss": None if math.isnan(p) else float(p),
            }
            for s, i, m, p in zip(self.step, self.example_id, self.metric, self.pool_loss)
        ]


def _metric(kind: Kind, w, w_bar) -> float:
    if kind is Kind.REGRESSION:
        return float(np.linalg.norm(w - w_bar))
    return cosine(w, w_bar)


def _pool_loss(kind: Kind, pool: Pool, w) -> float:
    m = pool.X @ w
    if kind is Kind.REGRESSION:
        return float(np.mean((m - pool.y) ** 2))
    return float(np.mean(np.maximum(1.0 - m * pool.y, 0.0)))


def run_training(
    problem: Problem,
    policy: SchedulePolicy,
    pool: Pool,
    w0,
    steps: int,
    rng: RngStream,
    *,
    loss_every: int = 1,
) -> Trajectory:
    """``steps`` single-example SGD updates chosen by ``policy``.

    The pool loss is evaluated every ``loss_every`` records (0 disables it).
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if problem.kind is not pool.kind:
        raise ValueError("problem and pool kinds differ")
    w = np.array(w0, dtype=np.float64)
    if w.shape != pool.w_bar.shape:
        raise ValueError("w0 must match the pool dimension")
    if problem.kind is Kind.HINGE:
        check_norm(w, problem.norm)
    state = SchedulerState(policy, pool, problem)
    step = np.arange(steps + 1)
    ids = np.full(steps + 1, -1, dtype=np.int64)
    metric = np.empty(steps + 1)
    pool_loss = np.full(steps + 1, np.nan)

    def record(t):
        metric[t] = _metric(problem.kind, w, pool.w_bar)
        if loss_every and t % loss_every == 0:
            pool_loss[t] = _pool_loss(problem.kind, pool, w)

    record(0)
    for t in range(steps):
        i = next_example(policy, pool, w, t, rng, state)
        w = update(problem, pool.X[i], pool.y[i], w)
        ids[t + 1] = i
        record(t + 1)
    if not np.all(np.isfinite(metric)):
        raise FloatingPointError("trajectory metric diverged")
    return Trajectory(problem.kind, step, ids, metric, pool_loss, w)


@dataclass(frozen=True)
class SignTest:
    wins: int
    trials: int
    p_value: float


def sign_test(better: Sequence[float], worse: Sequence[float], lower_is_better: bool = True) -> SignTest:
    """One-sided paired sign test that ``better`` beats ``worse``; exact ties are dropped."""
    a = np.asarray(better, dtype=np.float64)
    b = np.asarray(worse, dtype=np.float64)
    diff = (b - a) if lower_is_better else (a - b)
    wins = int(np.sum(diff > 0))
    trials = int(np.sum(diff != 0))
    p = float(stats.binomtest(wins, trials, 0.5, alternative="greater").pvalue) if trials else 1.0
    return SignTest(wins, trials, p)


@dataclass
class RaceResult:
    kind: Kind
    seeds: list
    checkpoint: int
    trajectories: dict  # policy name -> list of Trajectory, one per seed
    at_checkpoint: dict  # policy name -> array of metrics at the checkpoint
    final: dict

    @property
    def lower_is_better(self) -> bool:
        return self.kind is Kind.REGRESSION

    def compare(self, better: str, worse: str, at: str = "checkpoint") -> SignTest:
        src = self.at_checkpoint if at == "checkpoint" else self.final
        return sign_test(src[better], src[worse], self.lower_is_better)


def race(
    problem: Problem,
    policies: Mapping[str, SchedulePolicy],
    setup: Callable[[RngStream], tuple],
    steps: int,
    seeds: Sequence[int],
    checkpoint: Optional[int] = None,
    *,
    loss_every: int = 0,
    keep_trajectories: bool = False,
) -> RaceResult:
    """Run every policy on every seed.

    ``setup(rng)`` returns ``(pool, w0)`` and is called with stream 0 of the
    seed; all policies then train from stream 1, so runs are paired.
    """
    if not policies:
        raise ValueError("need at least one policy")
    checkpoint = steps if checkpoint is None else checkpoint
    if not 0 <= checkpoint <= steps:
        raise ValueError("checkpoint must lie in [0, steps]")
    trajectories = {name: [] for name in policies}
    at_cp = {name: [] for name in policies}
    final = {name: [] for name in policies}
    for seed in seeds:
        pool, w0 = setup(RngStream(seed, 0))
        for name, policy in policies.items():
            traj = run_training(problem, policy, pool, w0, steps, RngStream(seed, 1), loss_every=loss_every)
            at_cp[name].append(traj.metric[checkpoint])
            final[name].append(traj.metric[-1])
            if keep_trajectories:
                trajectories[name].append(traj)
    return RaceResult(
        problem.kind,
        list(seeds),
        checkpoint,
        trajectories,
        {k: np.array(v) for k, v in at_cp.items()},
        {k: np.array(v) for k, v in final.items()},
    )
