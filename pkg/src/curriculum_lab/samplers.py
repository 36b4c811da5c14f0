"""Difficulty-conditioned example generators.

All samplers are batched: they return a :class:`DrawBatch` holding ``n``
examples as arrays, and ``batch[i]`` gives the i-th draw as a
:class:`ConditionedDraw`. Every draw records its label branch and, where
defined, its region (regression) or half-space flag (hinge) so estimators can
stratify on them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import UnsupportedConditioning
from .geometry import HingeFrame, Region, hinge_bound_B, hinge_chi, region_classify_batch, region_u, zenith
from .vecspace import BaseDistribution, LabeledExample, RngStream, with_bias

REGIONS = (Region.A1, Region.A2, Region.A3, Region.A4)


@dataclass(frozen=True, eq=False)
class ConditionedDraw:
    ex: LabeledExample
    psi: float
    upsilon: Optional[float]
    region: Optional[Region]
    below_bound: Optional[bool]
    label_branch: int


@dataclass(frozen=True, eq=False)
class DrawBatch:
    X: np.ndarray
    y: np.ndarray
    psi: float
    upsilon: Optional[np.ndarray]
    region: Optional[np.ndarray]
    below_bound: Optional[np.ndarray]
    branch: np.ndarray

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i) -> ConditionedDraw:
        return ConditionedDraw(
            ex=LabeledExample(self.X[i], self.y[i]),
            psi=self.psi,
            upsilon=None if self.upsilon is None else float(self.upsilon[i]),
            region=None if self.region is None else Region(self.region[i]),
            below_bound=None if self.below_bound is None else bool(self.below_bound[i]),
            label_branch=int(self.branch[i]),
        )


def _classify_all(X, w_bar, w_t, y, psi, branch):
    z, lam = zenith(w_t, w_bar)
    regions, _ = region_classify_batch(X @ z, psi, lam, branch)
    return np.abs(X @ w_t - y), regions


def draw_psi_regression(
    dist: BaseDistribution, w_bar, psi: float, rng: RngStream, n: int, w_t=None
) -> DrawBatch:
    """x ~ dist and y = x.w_bar +- psi with each sign having probability 1/2.

    With ``w_t`` given, local scores and the four branch-angle regions are attached too.
    """
    if psi < 0:
        raise ValueError("psi must be >= 0")
    w_bar = np.asarray(w_bar, dtype=np.float64)
    X = with_bias(dist.sample(rng, n))
    branch = np.where(rng.gen.random(n) < 0.5, 1, -1).astype(np.int8)
    y = X @ w_bar + branch * psi
    upsilon = regions = None
    if w_t is not None:
        upsilon, regions = _classify_all(X, w_bar, np.asarray(w_t, dtype=np.float64), y, psi, branch)
    return DrawBatch(X, y, float(psi), upsilon, regions, None, branch)


def region_law(dist: BaseDistribution, w_bar, w_t, psi: float, upsilon: float):
    """Zenith coordinates u_i of regions A1..A4 and their probabilities f(u_i)/sum f(u_j).

    Also returns the feature direction ``e`` and the offset/scale mapping
    ``u = nf * (features . e) + zb``.
    """
    z, lam = zenith(w_t, w_bar)
    zf, zb = z[:-1], z[-1]
    nf = float(np.linalg.norm(zf))
    if nf < 1e-12:
        raise UnsupportedConditioning("zenith is along the bias axis; u is constant under dist")
    e = zf / nf
    marginal = dist.marginal(e)
    u = np.array([region_u(r, psi, upsilon, lam) for r in REGIONS])
    dens = np.asarray(marginal.pdf((u - zb) / nf), dtype=np.float64)
    total = dens.sum()
    if not total > 0:
        raise UnsupportedConditioning("density vanishes at all four region points")
    return u, dens / total, e, nf, zb, lam


def draw_psi_upsilon_regression(
    dist: BaseDistribution, w_bar, w_t, psi: float, upsilon: float, rng: RngStream, n: int
) -> DrawBatch:
    """Draws with global score ``psi`` and local score ``upsilon``.

    A region is picked with probability proportional to the zenith-marginal
    density at its u value; the transverse part comes from the exact
    conditional of ``dist`` given that u.
    """
    if psi < 0 or upsilon < 0:
        raise ValueError("scores must be >= 0")
    w_bar = np.asarray(w_bar, dtype=np.float64)
    w_t = np.asarray(w_t, dtype=np.float64)
    u, p, e, nf, zb, lam = region_law(dist, w_bar, w_t, psi, upsilon)
    idx = rng.gen.choice(4, size=n, p=p)
    t = (u[idx] - zb) / nf
    X = with_bias(dist.sample_given(e[None, :], t[:, None], rng, n))
    branch = np.array([REGIONS[i].branch for i in idx], dtype=np.int8)
    y = X @ w_bar + branch * psi
    ups, regions = _classify_all(X, w_bar, w_t, y, psi, branch)
    return DrawBatch(X, y, float(psi), ups, regions, None, branch)


def _hinge_axes(dim: int, k: int) -> np.ndarray:
    return np.eye(dim)[:k]


def _hinge_batch(F, frame, psi, negative_label):
    d = F.shape[1]
    w_bar, w_t = frame.embed(d)
    below = F[:, 1] < hinge_bound_B(psi, frame)
    if negative_label:
        F = -F
    X = with_bias(F)
    label = -1.0 if negative_label else 1.0
    y = np.full(len(F), label)
    ups = np.maximum(1.0 - (X @ w_t) * y, 0.0)
    branch = np.full(len(F), int(label), dtype=np.int8)
    return DrawBatch(X, y, float(psi), ups, None, below, branch)


def draw_psi_hinge(
    dist: BaseDistribution, frame: HingeFrame, psi: float, rng: RngStream, n: int, negative_label=False
) -> DrawBatch:
    """Hinge draws with global score ``psi`` in the frame w_bar = e1, w_t = (cos, sin, 0, ...).

    Features 2..d come from ``dist`` conditioned on x1 = 1 - psi; y = +1.
    ``negative_label`` mirrors the draw (features negated, y = -1), leaving
    both scores and the cosine increment unchanged.
    """
    if psi < 0:
        raise ValueError("psi must be >= 0")
    F = dist.sample_given(_hinge_axes(dist.dim, 1), [[1.0 - psi]], rng, n)
    return _hinge_batch(F, frame, psi, negative_label)


def draw_psi_upsilon_hinge(
    dist: BaseDistribution,
    frame: HingeFrame,
    psi: float,
    upsilon: float,
    rng: RngStream,
    n: int,
    negative_label=False,
) -> DrawBatch:
    """x1 = 1 - psi, x2 = chi(psi, upsilon), x3.. from the conditional of ``dist``."""
    if not upsilon > 0:
        raise ValueError("upsilon must be > 0")
    vals = [[1.0 - psi, hinge_chi(psi, upsilon, frame)]]
    F = dist.sample_given(_hinge_axes(dist.dim, 2), vals, rng, n)
    return _hinge_batch(F, frame, psi, negative_label)


def hinge_x2_marginal(dist: BaseDistribution, psi: float):
    """Law of x2 given x1 = 1 - psi (the density integrated against in the hinge rate)."""
    E = _hinge_axes(dist.dim, 2)
    return dist.marginal(E[1], given_axes=E[:1], given_values=[1.0 - psi])


# scalar conveniences ------------------------------------------------------


def draw_given_psi_regression(dist, w_bar, psi, rng, w_t=None) -> ConditionedDraw:
    return draw_psi_regression(dist, w_bar, psi, rng, 1, w_t=w_t)[0]


def draw_given_psi_upsilon_regression(dist, w_bar, w_t, psi, upsilon, rng) -> ConditionedDraw:
    return draw_psi_upsilon_regression(dist, w_bar, w_t, psi, upsilon, rng, 1)[0]


def draw_given_psi_hinge(dist, frame, psi, rng, negative_label=False) -> ConditionedDraw:
    return draw_psi_hinge(dist, frame, psi, rng, 1, negative_label)[0]


def draw_given_psi_upsilon_hinge(dist, frame, psi, upsilon, rng, negative_label=False) -> ConditionedDraw:
    return draw_psi_upsilon_hinge(dist, frame, psi, upsilon, rng, 1, negative_label)[0]

