"""Expected one-step convergence rates.

Regression rate: E[ ||w_t - w_bar||^2 - ||w_{t+1} - w_bar||^2 | scores ].
Hinge rate: E[ cos(w_{t+1}, w_bar) - cos(w_t, w_bar) | scores ].

Monte Carlo estimators run the real SGD step on conditioned draws. Work is
split into fixed-size chunks, each with its own substream, and merged in
chunk order, so an estimate depends on (seed, n) but never on ``jobs``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from . import samplers
from .errors import UndefinedNabla
from .geometry import HingeFrame, hinge_bound_B, hinge_chi, zenith
from .vecspace import BaseDistribution, Marginal1D, PointMass, RngStream, with_bias

CHUNK = 1 << 16


class Method(str, Enum):
    MONTE_CARLO = "monte_carlo"
    CLOSED_FORM = "closed_form"
    QUADRATURE = "quadrature"
    CONTROL_VARIATE = "control_variate"


@dataclass(frozen=True)
class RateEstimate:
    mean: float
    std_error: float
    n: int
    method: Method = Method.MONTE_CARLO

    @classmethod
    def exact(cls, value: float, method: Method = Method.CLOSED_FORM) -> "RateEstimate":
        return cls(float(value), 0.0, 0, method)


class Accumulator:
    """Streaming mean and co-moment matrix of vector observations (Chan et al. merge)."""

    def __init__(self, k: int = 1):
        self.n = 0
        self.mean = np.zeros(k)
        self.m2 = np.zeros((k, k))

    @classmethod
    def of(cls, values: np.ndarray) -> "Accumulator":
        v = np.asarray(values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        acc = cls(v.shape[1])
        acc.n = v.shape[0]
        if acc.n:
            acc.mean = v.mean(axis=0)
            c = v - acc.mean
            acc.m2 = c.T @ c
        return acc

    def merge(self, other: "Accumulator") -> "Accumulator":
        if other.n == 0:
            return self
        if self.n == 0:
            self.n, self.mean, self.m2 = other.n, other.mean.copy(), other.m2.copy()
            return self
        n = self.n + other.n
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.n / n)
        self.m2 = self.m2 + other.m2 + np.outer(delta, delta) * (self.n * other.n / n)
        self.n = n
        return self

    @property
    def cov_of_mean(self) -> np.ndarray:
        if self.n < 2:
            return np.full_like(self.m2, np.nan)
        return self.m2 / (self.n - 1) / self.n

    @property
    def std_error(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov_of_mean), 0.0, None))

    def estimate(self, j: int = 0) -> RateEstimate:
        return RateEstimate(float(self.mean[j]), float(self.std_error[j]), self.n)


def run_chunks(kernel: Callable[[RngStream, int], np.ndarray], n: int, rng: RngStream, jobs: int = 1) -> Accumulator:
    """Evaluate ``kernel(substream_i, size_i)`` over fixed chunks and merge in order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sizes = [CHUNK] * (n // CHUNK) + ([n % CHUNK] if n % CHUNK else [])

    def work(i):
        return Accumulator.of(kernel(rng.substream(i), sizes[i]))

    if jobs > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(i) for i in range(len(sizes))]
    total = Accumulator(parts[0].mean.size)
    for p in parts:
        total.merge(p)
    return total


# regression -----------------------------------------------------------------


def regression_decrement(X, y, w_t, w_bar, eta) -> np.ndarray:
    """Per-example ||w_t - w_bar||^2 - ||w_{t+1} - w_bar||^2 after one SGD step."""
    res = X @ w_t - y
    w_next = w_t[None, :] - (2.0 * eta * res)[:, None] * X
    e0 = w_t - w_bar
    e1 = w_next - w_bar[None, :]
    return float(e0 @ e0) - np.einsum("ij,ij->i", e1, e1)


def mc_delta_regression(
    dist: BaseDistribution,
    w_bar,
    w_t,
    psi: float,
    eta: float,
    n: int,
    rng: RngStream,
    *,
    paired_branches: bool = False,
    jobs: int = 1,
) -> RateEstimate:
    """Monte Carlo rate at fixed global score.

    With ``paired_branches`` each x is scored under both labels x.w_bar +- psi
    and the two decrements are averaged (branch stratification).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    w_bar = np.asarray(w_bar, dtype=np.float64)
    w_t = np.asarray(w_t, dtype=np.float64)
    zenith(w_t, w_bar)

    def kernel(sub, size):
        b = samplers.draw_psi_regression(dist, w_bar, psi, sub, size)
        d = regression_decrement(b.X, b.y, w_t, w_bar, eta)
        if paired_branches:
            mirrored = b.y - 2 * b.branch * psi
            d = 0.5 * (d + regression_decrement(b.X, mirrored, w_t, w_bar, eta))
        return d

    return run_chunks(kernel, n, rng, jobs).estimate()


@dataclass(frozen=True)
class CurveEstimate:
    """Estimates on a score grid from shared draws; ``cov`` is the covariance of the means."""

    grid: tuple
    mean: np.ndarray
    cov: np.ndarray
    n: int

    @property
    def std_error(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))

    def points(self) -> list:
        return [
            (float(s), RateEstimate(float(m), float(e), self.n))
            for s, m, e in zip(self.grid, self.mean, self.std_error)
        ]

    def diff_std_errors(self) -> np.ndarray:
        c = self.cov
        i = np.arange(len(self.grid) - 1)
        return np.sqrt(np.clip(c[i, i] + c[i + 1, i + 1] - 2 * c[i, i + 1], 0.0, None))


def mc_delta_regression_curve(
    dist: BaseDistribution,
    w_bar,
    w_t,
    psis: Sequence[float],
    eta: float,
    n: int,
    rng: RngStream,
    *,
    paired_branches: bool = True,
    jobs: int = 1,
) -> CurveEstimate:
    """Rates at every grid score from the same feature draws (common random numbers)."""
    if n < 2:
        raise ValueError("n must be >= 2")
    grid = tuple(sorted(float(p) for p in psis))
    if not grid or grid[0] < 0:
        raise ValueError("scores must be >= 0")
    w_bar = np.asarray(w_bar, dtype=np.float64)
    w_t = np.asarray(w_t, dtype=np.float64)
    zenith(w_t, w_bar)

    def kernel(sub, size):
        b = samplers.draw_psi_regression(dist, w_bar, 0.0, sub, size)
        base = b.X @ w_bar
        cols = []
        for psi in grid:
            d = regression_decrement(b.X, base + b.branch * psi, w_t, w_bar, eta)
            if paired_branches:
                d = 0.5 * (d + regression_decrement(b.X, base - b.branch * psi, w_t, w_bar, eta))
            cols.append(d)
        return np.column_stack(cols)

    acc = run_chunks(kernel, n, rng, jobs)
    return CurveEstimate(grid, acc.mean.copy(), acc.cov_of_mean, acc.n)


def mc_delta_regression_local(
    dist: BaseDistribution, w_bar, w_t, psi: float, upsilon: float, eta: float, n: int, rng: RngStream, jobs: int = 1
) -> RateEstimate:
    """Monte Carlo rate at fixed global and local scores."""
    w_bar = np.asarray(w_bar, dtype=np.float64)
    w_t = np.asarray(w_t, dtype=np.float64)

    def kernel(sub, size):
        b = samplers.draw_psi_upsilon_regression(dist, w_bar, w_t, psi, upsilon, sub, size)
        return regression_decrement(b.X, b.y, w_t, w_bar, eta)

    return run_chunks(kernel, n, rng, jobs).estimate()


@dataclass(frozen=True)
class DistributionMoments:
    """E[r^2], E[r^2 cos^2], E[r^4 cos^2] with r = ||x|| and theta measured from the zenith.

    ``cov`` is the covariance of the three mean estimates (zero when exact).
    """

    m_r2: float
    m_r2c2: float
    m_r4c2: float
    cov: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)), compare=False)
    n: int = 0

    def __post_init__(self):
        if min(self.m_r2, self.m_r2c2, self.m_r4c2) < 0:
            raise ValueError("moments must be nonnegative")
        if self.m_r2c2 > self.m_r2 * (1 + 1e-12):
            raise ValueError("E[r^2 cos^2] cannot exceed E[r^2]")

    @property
    def std_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))


def _moment_columns(X, z) -> np.ndarray:
    r2 = np.einsum("ij,ij->i", X, X)
    u2 = (X @ z) ** 2
    return np.column_stack([r2, u2, r2 * u2])


def moment_oracle(
    dist: BaseDistribution, w_bar, w_t, psi: float, n: int, rng: RngStream, jobs: int = 1
) -> DistributionMoments:
    """Plug-in estimates of the three moments; exact (zero covariance) for point masses."""
    w_bar = np.asarray(w_bar, dtype=np.float64)
    z, _ = zenith(w_t, w_bar)
    if isinstance(dist, PointMass):
        X = with_bias(np.array([a for a, _ in dist.atoms]))
        w = np.array([wt for _, wt in dist.atoms])
        m = w @ _moment_columns(X, z)
        return DistributionMoments(*map(float, m), n=0)

    def kernel(sub, size):
        b = samplers.draw_psi_regression(dist, w_bar, psi, sub, size)
        return _moment_columns(b.X, z)

    acc = run_chunks(kernel, n, rng, jobs)
    return DistributionMoments(*map(float, acc.mean), cov=acc.cov_of_mean, n=acc.n)


def _closed_gradient(psi, lam, eta) -> np.ndarray:
    return 4.0 * np.array([-(eta**2) * psi**2, eta * lam**2, -(eta**2) * lam**2])


def closed_delta_regression(moments: DistributionMoments, psi: float, lam: float, eta: float) -> float:
    """4 * (eta lam^2 E[r^2 c^2] - eta^2 lam^2 E[r^4 c^2] - eta^2 psi^2 E[r^2])."""
    m = np.array([moments.m_r2, moments.m_r2c2, moments.m_r4c2])
    return float(_closed_gradient(psi, lam, eta) @ m)


def closed_delta_regression_se(moments: DistributionMoments, psi: float, lam: float, eta: float) -> float:
    """Standard error of :func:`closed_delta_regression` propagated from the moment covariance."""
    g = _closed_gradient(psi, lam, eta)
    return float(math.sqrt(max(0.0, g @ moments.cov @ g)))


def d_delta_d_psi(moments: DistributionMoments, psi: float, eta: float) -> float:
    return -8.0 * eta**2 * moments.m_r2 * psi


def d_delta_d_lambda(moments: DistributionMoments, lam: float, eta: float) -> float:
    return 8.0 * eta * lam * (moments.m_r2c2 - eta * moments.m_r4c2)


def eta_bound(moments: DistributionMoments) -> float:
    """Largest step size for which the rate is nondecreasing in lam."""
    if not moments.m_r4c2 > 0:
        raise ValueError("E[r^4 cos^2] is zero (mass at r = 0 or cos = 0); the bound is undefined")
    return moments.m_r2c2 / moments.m_r4c2


def nabla(f: Callable, psi: float, upsilon: float, lam: float) -> float:
    """(f(a) - f(b) - f(c) + f(d)) / (f(a) + f(b) + f(c) + f(d)) at the four region points."""
    pts = np.array([psi + upsilon, psi - upsilon, -psi + upsilon, -psi - upsilon]) / lam
    fa, fb, fc, fd = (float(v) for v in np.asarray(f(pts), dtype=np.float64))
    den = fa + fb + fc + fd
    if not den > 0:
        raise UndefinedNabla("density vanishes at all four points")
    return (fa - fb - fc + fd) / den


def zenith_density(dist: BaseDistribution, w_bar, w_t) -> Callable:
    """Density of u = x . (w_bar - w_t)/lam under ``dist`` (bias included)."""
    z, _ = zenith(w_t, w_bar)
    zf, zb = z[:-1], z[-1]
    nf = float(np.linalg.norm(zf))
    marginal = dist.marginal(zf / nf)
    scale = 1.0 if marginal.discrete else 1.0 / nf
    return lambda u: scale * marginal.pdf((np.asarray(u) - zb) / nf)


def closed_delta_regression_local(psi: float, upsilon: float, eta: float, nabla_value: float) -> float:
    """4 eta (psi^2 + upsilon^2 + 2 psi upsilon nabla)."""
    if abs(nabla_value) > 1 + 1e-12:
        raise ValueError("nabla must lie in [-1, 1]")
    return 4.0 * eta * (psi**2 + upsilon**2 + 2.0 * psi * upsilon * nabla_value)


def first_order_delta_regression_local(psi: float, upsilon: float, eta: float, nabla_value: float) -> float:
    """First-order conditional rate including the label-branch cross term: 4 eta (upsilon^2 + psi upsilon nabla).

    Conditioning on the local score breaks the +-psi label symmetry, so the
    term -4 eta E[(+-psi) x.(w_t - w_bar)] no longer averages out; it equals
    -4 eta (psi^2 + psi upsilon nabla). This is what Monte Carlo measures.
    """
    if abs(nabla_value) > 1 + 1e-12:
        raise ValueError("nabla must lie in [-1, 1]")
    return 4.0 * eta * (upsilon**2 + psi * upsilon * nabla_value)


# hinge ------------------------------------------------------------------------


def hinge_increment(X, y, frame: HingeFrame, eta: float) -> np.ndarray:
    """Per-example cosine increment after one projected step (unit-norm frame)."""
    w_bar, w_t = frame.embed(X.shape[1] - 1)
    active = (X @ w_t) * y <= 1.0
    V = w_t[None, :] + (eta * active * y)[:, None] * X
    norms = np.linalg.norm(V, axis=1)
    return np.where(active, (V @ w_bar) / norms - frame.cos_theta, 0.0)


def mc_delta_hinge(
    dist: BaseDistribution,
    frame: HingeFrame,
    psi: float,
    eta: float,
    n: int,
    rng: RngStream,
    *,
    negative_label: bool = False,
    jobs: int = 1,
) -> RateEstimate:
    if n < 2:
        raise ValueError("n must be >= 2")

    def kernel(sub, size):
        b = samplers.draw_psi_hinge(dist, frame, psi, sub, size, negative_label)
        return hinge_increment(b.X, b.y, frame, eta)

    return run_chunks(kernel, n, rng, jobs).estimate()


def mc_delta_hinge_local(
    dist: BaseDistribution, frame: HingeFrame, psi: float, upsilon: float, eta: float, n: int, rng: RngStream, jobs=1
) -> RateEstimate:
    def kernel(sub, size):
        b = samplers.draw_psi_upsilon_hinge(dist, frame, psi, upsilon, sub, size)
        return hinge_increment(b.X, b.y, frame, eta)

    return run_chunks(kernel, n, rng, jobs).estimate()


def hinge_first_order_increment(X, y, frame: HingeFrame) -> np.ndarray:
    """d/d(eta) of :func:`hinge_increment` at eta = 0, per example."""
    w_bar, w_t = frame.embed(X.shape[1] - 1)
    m_t = X @ w_t
    active = m_t * y <= 1.0
    return active * y * (X @ w_bar - frame.cos_theta * m_t)


def mc_hinge_curvature_residual(
    dist: BaseDistribution,
    frame: HingeFrame,
    psi: float,
    eta: float,
    n: int,
    rng: RngStream,
    *,
    jobs: int = 1,
) -> RateEstimate:
    """Mean of (increment - eta * first-order increment) on shared draws.

    Its expectation equals the MC rate minus the first-order quadrature, and
    its spread is O(eta^2), so the eta^2 bias is resolvable at moderate n.
    """
    if n < 2:
        raise ValueError("n must be >= 2")

    def kernel(sub, size):
        b = samplers.draw_psi_hinge(dist, frame, psi, sub, size)
        return hinge_increment(b.X, b.y, frame, eta) - eta * hinge_first_order_increment(b.X, b.y, frame)

    est = run_chunks(kernel, n, rng, jobs).estimate()
    return RateEstimate(est.mean, est.std_error, est.n, Method.CONTROL_VARIATE)


def hinge_first_order_integrand(x2, psi: float, frame: HingeFrame):
    """(1 - psi) sin^2 - x2 sin cos: the first-order cosine gain per unit eta at x2."""
    s, c = frame.sin_theta, frame.cos_theta
    return (1.0 - psi) * s * s - np.asarray(x2) * s * c


def quad_delta_hinge(f2: Marginal1D, frame: HingeFrame, psi: float, eta: float, tail: float = 1e-10) -> float:
    """eta * integral over x2 <= B(psi) of the first-order integrand against ``f2``."""
    B = hinge_bound_B(psi, frame)
    if f2.discrete:
        total = sum(w for _, w in f2.atoms)
        if abs(total - 1.0) > 1e-9:
            raise ValueError("atom weights are not normalized")
        return float(
            eta * sum(w * hinge_first_order_integrand(a, psi, frame) for a, w in f2.atoms if a <= B)
        )
    lo, hi = f2.support(tail)
    mass, _ = integrate.quad(f2.pdf, lo, hi, limit=200, points=[f2.mean()] if lo < f2.mean() < hi else None)
    if abs(mass - 1.0) > 1e-6:
        raise ValueError(f"marginal is not normalized on its support (mass {mass})")
    upper = min(B, hi)
    if upper <= lo:
        return 0.0
    value, _ = integrate.quad(
        lambda t: hinge_first_order_integrand(t, psi, frame) * f2.pdf(t),
        lo,
        upper,
        epsabs=1e-14,
        epsrel=1e-11,
        limit=400,
    )
    return float(eta * value)


def closed_delta_hinge_local(psi: float, upsilon: float, frame: HingeFrame, eta: float) -> float:
    """eta * ((1 - psi) sin^2 - chi(psi, upsilon) sin cos)."""
    if not upsilon > 0:
        raise ValueError("upsilon must be > 0")
    return float(eta * hinge_first_order_integrand(hinge_chi(psi, upsilon, frame), psi, frame))


# monotonicity -----------------------------------------------------------------


class Verdict(str, Enum):
    DECREASING = "decreasing"
    INCREASING = "increasing"
    MIXED = "mixed"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class ProbeResult:
    verdict: Verdict
    z_scores: tuple
    conclusive: tuple

    @property
    def conclusive_z(self) -> list:
        return [z for z, c in zip(self.z_scores, self.conclusive) if c]


def monotonicity_probe(curve, z_threshold: float = 3.0) -> ProbeResult:
    """Test successive differences of a curve at ``z_threshold`` SE.

    ``curve`` is a list of (score, RateEstimate) with independent points, or a
    :class:`CurveEstimate` whose covariance gives the difference SEs.
    Intervals with |z| below the threshold are inconclusive; the verdict uses
    conclusive intervals only and needs at least two of them.
    """
    if isinstance(curve, CurveEstimate):
        means = list(curve.mean)
        diff_se = list(curve.diff_std_errors())
    else:
        pts = sorted(curve, key=lambda p: p[0])
        means = [e.mean for _, e in pts]
        diff_se = [math.hypot(a.std_error, b.std_error) for (_, a), (_, b) in zip(pts, pts[1:])]
    if len(means) < 3:
        raise ValueError("need at least 3 grid points")
    zs, flags = [], []
    for a, b, se in zip(means, means[1:], diff_se):
        diff = b - a
        if se > 0:
            z = diff / se
        else:
            z = math.copysign(math.inf, diff) if diff != 0 else 0.0
        zs.append(float(z))
        flags.append(abs(z) >= z_threshold)
    signs = {z > 0 for z, c in zip(zs, flags) if c}
    if sum(flags) < 2:
        verdict = Verdict.INCONCLUSIVE
    elif signs == {False}:
        verdict = Verdict.DECREASING
    elif signs == {True}:
        verdict = Verdict.INCREASING
    else:
        verdict = Verdict.MIXED
    return ProbeResult(verdict, tuple(zs), tuple(flags))


def estimate_curve(grid: Sequence[float], fn: Callable[[float], object]) -> list:
    """[(score, RateEstimate)] with plain floats wrapped as exact closed-form values."""
    out = []
    for s in grid:
        v = fn(s)
        out.append((float(s), v if isinstance(v, RateEstimate) else RateEstimate.exact(v)))
    return out
