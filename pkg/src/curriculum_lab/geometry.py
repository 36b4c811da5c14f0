"""Parameter-space geometry.

Regression: a data point x defines the hyperplane Omega_x = {w : x.w = y};
points are described in polar form about the pole w_bar with zenith
w_bar - w_t (distance ``lam``). Hinge: the plane spanned by w_bar and w_t,
with w_bar on the first axis and w_t at angle theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateHyperplane, DimensionError, FrameDegeneracy, PoleDegeneracy
from .vecspace import LabeledExample

POLE_TOL = 1e-12
FRAME_TOL = 1e-9
AXIS_SNAP = 1e-15


def project_onto_omega(w_bar, ex: LabeledExample) -> np.ndarray:
    """Orthogonal projection z_bar of ``w_bar`` onto {w : x.w = y}."""
    w_bar = np.asarray(w_bar, dtype=np.float64)
    x = ex.x
    if w_bar.shape != x.shape:
        raise DimensionError("w_bar and x must have equal length")
    nx2 = float(x @ x)
    if nx2 == 0.0:
        raise DegenerateHyperplane("x is the zero vector")
    return w_bar - ((x @ w_bar - ex.y) / nx2) * x


def zenith(w_t, w_bar) -> tuple[np.ndarray, float]:
    """Unit zenith (w_bar - w_t)/lam and the distance lam."""
    o = np.asarray(w_bar, dtype=np.float64) - np.asarray(w_t, dtype=np.float64)
    lam = float(np.linalg.norm(o))
    if lam < POLE_TOL:
        raise PoleDegeneracy("w_t coincides with w_bar; the zenith is undefined")
    return o / lam, lam


@dataclass(frozen=True)
class PolarDecomposition:
    r: float
    cos_theta: float
    lam: float

    @property
    def u(self) -> float:
        """Zenith coordinate r*cos(theta)."""
        return self.r * self.cos_theta


def polar_decompose(x, w_t, w_bar) -> PolarDecomposition:
    x = np.asarray(x, dtype=np.float64)
    z, lam = zenith(w_t, w_bar)
    if x.shape != z.shape:
        raise DimensionError("x, w_t, w_bar must have equal length")
    r = float(np.linalg.norm(x))
    c = float(x @ z) / r if r > 0 else 0.0
    return PolarDecomposition(r=r, cos_theta=min(1.0, max(-1.0, c)), lam=lam)


def beta(r: float, psi: float, lam: float) -> float:
    """arccos(min(psi / (lam*r), 1)), in [0, pi/2]."""
    if not (r > 0 and lam > 0 and psi >= 0):
        raise ValueError("beta needs r > 0, lam > 0, psi >= 0")
    return math.acos(min(psi / (lam * r), 1.0))


@dataclass(frozen=True)
class HingeFrame:
    """Angle between w_bar and w_t, stored as (cos, sin) with sin > 0."""

    cos_theta: float
    sin_theta: float

    def __post_init__(self):
        if not self.sin_theta > FRAME_TOL:
            raise FrameDegeneracy("sin(theta) must be positive; w_t = +-w_bar has no 2-D frame")
        if abs(self.cos_theta**2 + self.sin_theta**2 - 1.0) > 1e-12:
            raise ValueError("cos^2 + sin^2 must equal 1")

    @classmethod
    def from_angle(cls, theta: float) -> "HingeFrame":
        s = math.sin(theta)
        if not s > FRAME_TOL:
            raise FrameDegeneracy(f"theta={theta!r} gives sin(theta) <= {FRAME_TOL}")
        c = math.cos(theta)
        # pi/2 is not representable; snap rounding residue so right angles are exact
        if abs(c) < AXIS_SNAP:
            c, s = 0.0, 1.0
        # renormalize so the invariant holds to the last ulp
        n = math.hypot(c, s)
        return cls(c / n, s / n)

    @classmethod
    def from_vectors(cls, w_bar, w_t) -> "HingeFrame":
        a = np.asarray(w_bar, dtype=np.float64)
        b = np.asarray(w_t, dtype=np.float64)
        c = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
        c = min(1.0, max(-1.0, c))
        s = math.sqrt(max(0.0, 1.0 - c * c))
        if not s > FRAME_TOL:
            raise FrameDegeneracy("w_t is parallel to w_bar")
        return cls(c, s)

    @property
    def theta(self) -> float:
        return math.atan2(self.sin_theta, self.cos_theta)

    @property
    def cot(self) -> float:
        return self.cos_theta / self.sin_theta

    def embed(self, d: int, A: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """(w_bar, w_t) in R^(d+1): w_bar = A e1, w_t = A(cos e1 + sin e2), bias slot zero."""
        if d < 2:
            raise DimensionError("the hinge frame needs at least two features")
        w_bar = np.zeros(d + 1)
        w_t = np.zeros(d + 1)
        w_bar[0] = A
        w_t[0] = A * self.cos_theta
        w_t[1] = A * self.sin_theta
        return w_bar, w_t


def hinge_bound_B(psi: float, frame: HingeFrame) -> float:
    """x2 threshold below which a point on the psi-hyperplane has x.w_t < 1."""
    return (psi - 1.0) * frame.cot + 1.0 / frame.sin_theta


def hinge_chi(psi: float, upsilon: float, frame: HingeFrame) -> float:
    """x2 coordinate of the points with global score psi and local score upsilon."""
    if upsilon < 0:
        raise ValueError("upsilon must be >= 0")
    return (psi - 1.0) * frame.cot + (1.0 - upsilon) / frame.sin_theta


class Region(str, Enum):
    A1 = "A1"
    A2 = "A2"
    A3 = "A3"
    A4 = "A4"

    @property
    def branch(self) -> int:
        """+1 for labels y = x.w_bar + psi, -1 for y = x.w_bar - psi."""
        return 1 if self in (Region.A1, Region.A2) else -1


def region_classify(u: float, psi: float, lam: float, label_branch: int) -> tuple[Region, float]:
    """Region tag and implied local score for zenith coordinate ``u``.

    Boundaries go to A1 (branch +) and A3 (branch -).
    """
    if not lam > 0:
        raise PoleDegeneracy("lam must be > 0")
    lu = lam * u
    if label_branch > 0:
        if lu >= -psi:
            return Region.A1, lu + psi
        return Region.A2, -lu - psi
    if lu >= psi:
        return Region.A3, lu - psi
    return Region.A4, psi - lu


def region_u(region: Region, psi: float, upsilon: float, lam: float) -> float:
    """Zenith coordinate u at which ``region`` has local score ``upsilon``."""
    lu = {
        Region.A1: -psi + upsilon,
        Region.A2: -psi - upsilon,
        Region.A3: psi + upsilon,
        Region.A4: psi - upsilon,
    }[Region(region)]
    return lu / lam


def region_classify_batch(u, psi: float, lam: float, branch) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`region_classify`; returns (region names, local scores)."""
    if not lam > 0:
        raise PoleDegeneracy("lam must be > 0")
    lu = lam * np.asarray(u, dtype=np.float64)
    plus = np.asarray(branch) > 0
    names = np.where(plus, np.where(lu >= -psi, "A1", "A2"), np.where(lu >= psi, "A3", "A4"))
    ups = np.where(plus, np.abs(lu + psi), np.abs(lu - psi))
    return names.astype(object), ups
