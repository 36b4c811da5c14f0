"""Constructive witnesses for the two negative results.

* :func:`build_theorem3`: a hypothesis near ``w_bar`` at which the expected
  regression decrement *falls* as the local score grows (preferring locally
  hard examples hurts there).
* :func:`build_hinge_low_psi`: a feature law for which the hinge rate is not
  decreasing in the global score below ``1 - cos(theta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ConstructionFailed, PreconditionError
from .estimators import RateEstimate, mc_delta_hinge, moment_oracle, quad_delta_hinge, run_chunks
from .geometry import HingeFrame, hinge_bound_B
from .samplers import hinge_x2_marginal
from .vecspace import BaseDistribution, PointMass, RngStream, UniformBox, with_bias

Z_SIGNIFICANCE = 3.0


@dataclass
class CounterexampleReport:
    kind: str
    parameters: dict
    measurements: dict
    verdict: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "parameters": dict(self.parameters),
            "measurements": dict(self.measurements),
            "verdict": bool(self.verdict),
            "details": dict(self.details),
        }


def _local_draws(dist, w_bar, w, upsilon, noise, rng, n):
    """x, and the sign s of x.w - y, for examples with |x.w - y| = upsilon.

    Labels are y = x.w_bar + eps with eps ~ ``noise``; conditioning on the
    local score reweights x by p(x.(w - w_bar) - upsilon) + p(x.(w - w_bar) + upsilon),
    realized here by rejection against the density's peak.
    """
    dw = w - w_bar
    peak = float(noise.pdf(0.0))
    out_x, out_s, have = [], [], 0
    while have < n:
        m = max(2 * (n - have), 1024)
        X = with_bias(dist.sample(rng, m))
        t = X @ dw
        p_plus = noise.pdf(t - upsilon)  # x.w - y = +upsilon
        p_minus = noise.pdf(t + upsilon)
        keep = rng.gen.random(m) * 2.0 * peak < p_plus + p_minus
        s = np.where(rng.gen.random(m) * (p_plus + p_minus) < p_plus, 1.0, -1.0)
        out_x.append(X[keep])
        out_s.append(s[keep])
        have += int(keep.sum())
    return np.vstack(out_x)[:n], np.concatenate(out_s)[:n]


def mc_delta_local_only(dist, w_bar, w, upsilon, eta, n, rng, noise, jobs=1) -> RateEstimate:
    """MC estimate of the squared-distance decrement given only the local score."""
    w_bar = np.asarray(w_bar, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    o = w - w_bar

    def kernel(sub, size):
        X, s = _local_draws(dist, w_bar, w, upsilon, noise, sub, size)
        # step is -2 eta s upsilon x; decrement of |w - w_bar|^2
        return 4 * eta * s * upsilon * (X @ o) - 4 * eta**2 * upsilon**2 * np.sum(X * X, axis=1)

    return run_chunks(kernel, n, rng, jobs).estimate()


def build_theorem3(
    dist: BaseDistribution,
    w_bar,
    upsilon: float,
    eta: float,
    rng: RngStream,
    *,
    noise_scale: float = 1.0,
    n: int = 200_000,
    direction=None,
    delta0: float = 1.0,
    max_halvings: int = 40,
    jobs: int = 1,
) -> CounterexampleReport:
    """Search w = w_bar + delta * direction, halving delta until the witness holds.

    The witness is a mean local-only decrement below zero at 3 SE that also
    satisfies mean < -2 eta^2 upsilon^2 E[r^2] + 3 SE.
    """
    if isinstance(dist, PointMass):
        raise PreconditionError("the construction needs a continuous feature law")
    if not (eta > 0 and upsilon > 0 and noise_scale > 0):
        raise PreconditionError("eta, upsilon and noise_scale must be > 0")
    w_bar = np.asarray(w_bar, dtype=np.float64)
    if w_bar.shape != (dist.dim + 1,):
        raise PreconditionError("w_bar must have length dim + 1")
    if direction is None:
        direction = np.zeros_like(w_bar)
        direction[0] = 1.0
    direction = np.asarray(direction, dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    noise = stats.norm(scale=noise_scale)

    moments = moment_oracle(dist, w_bar, w_bar - direction, 0.0, n, rng.substream(0), jobs=jobs)
    m_r2 = moments.m_r2
    bound = -2 * eta**2 * upsilon**2 * m_r2
    tried = []
    delta = float(delta0)
    for k in range(max_halvings + 1):
        w = w_bar + delta * direction
        est = mc_delta_local_only(dist, w_bar, w, upsilon, eta, n, rng.substream(k + 1), noise, jobs)
        tried.append({"delta": delta, "mean": est.mean, "std_error": est.std_error})
        negative = est.mean + Z_SIGNIFICANCE * est.std_error < 0
        below = est.mean < bound + Z_SIGNIFICANCE * est.std_error
        if negative and below:
            return CounterexampleReport(
                kind="theorem3",
                parameters={
                    "upsilon": upsilon,
                    "eta": eta,
                    "noise_scale": noise_scale,
                    "n": n,
                    "delta": delta,
                    "halvings": k,
                },
                measurements={
                    "delta_upsilon": est.mean,
                    "delta_upsilon_se": est.std_error,
                    "m_r2": m_r2,
                    "bound": bound,
                },
                verdict=True,
                details={"w": w.tolist(), "search": tried},
            )
        delta /= 2.0
    raise ConstructionFailed(f"no witness after {max_halvings} halvings of delta")


def truncated_x2_law(frame: HingeFrame, psi1: float, psi2: float, dim: int = 2) -> UniformBox:
    """Uniform features with x2 on (B(psi1), B(psi2)] and x1, x3.. on (-1, 1]."""
    lo = -np.ones(dim)
    hi = np.ones(dim)
    lo[1] = hinge_bound_B(psi1, frame)
    hi[1] = hinge_bound_B(psi2, frame)
    return UniformBox.from_bounds(lo, hi)


def build_hinge_low_psi(
    frame: HingeFrame,
    psi1: float,
    psi2: float,
    rng: RngStream,
    *,
    eta: float = 1e-3,
    n: int = 100_000,
    dim: int = 2,
    jobs: int = 1,
) -> CounterexampleReport:
    """Feature law with Delta(psi1) == 0 exactly and Delta(psi2) > 0."""
    if not frame.cos_theta > 0:
        raise PreconditionError("the construction needs cos(theta) > 0")
    if not 0 < psi1 < psi2 < 1 - frame.cos_theta:
        raise PreconditionError("need 0 < psi1 < psi2 < 1 - cos(theta)")
    if dim < 2:
        raise PreconditionError("dim must be >= 2")
    dist = truncated_x2_law(frame, psi1, psi2, dim)
    q1 = quad_delta_hinge(hinge_x2_marginal(dist, psi1), frame, psi1, eta)
    q2 = quad_delta_hinge(hinge_x2_marginal(dist, psi2), frame, psi2, eta)
    e1 = mc_delta_hinge(dist, frame, psi1, eta, n, rng.substream(1), jobs=jobs)
    e2 = mc_delta_hinge(dist, frame, psi2, eta, n, rng.substream(2), jobs=jobs)
    verdict = q1 == 0.0 and e1.mean == 0.0 and e2.mean > Z_SIGNIFICANCE * e2.std_error
    return CounterexampleReport(
        kind="hinge_low_psi",
        parameters={
            "theta": frame.theta,
            "psi1": psi1,
            "psi2": psi2,
            "eta": eta,
            "n": n,
            "truncation_low": float(dist.low[1]),
            "truncation_high": float(dist.high[1]),
        },
        measurements={
            "delta_psi1_quad": q1,
            "delta_psi1_mc": e1.mean,
            "delta_psi1_se": e1.std_error,
            "delta_psi2_quad": q2,
            "delta_psi2_mc": e2.mean,
            "delta_psi2_se": e2.std_error,
        },
        verdict=bool(verdict),
    )
