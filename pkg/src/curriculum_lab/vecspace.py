"""Core numeric types: parameter vectors, labeled examples, base feature
distributions and seeded random streams.

Convention used everywhere: a data point has ``d`` features and the bias
coordinate ``1`` is appended as the *last* entry, so both data points and
hypotheses live in R^(d+1).
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, stats

from .errors import DimensionError, UnsupportedConditioning

_MATCH_TOL = 1e-9
U64 = 2**64


def param_vector(coords) -> np.ndarray:
    """Validate ``coords`` and return it as a read-only float64 vector."""
    v = np.array(coords, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise DimensionError(f"parameter vector needs length >= 2, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("parameter vector has non-finite entries")
    v.setflags(write=False)
    return v


def dot(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(a @ b)


def with_bias(features) -> np.ndarray:
    """Append the bias coordinate 1 to a feature vector or to each row of a matrix."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 1:
        return np.append(f, 1.0)
    return np.hstack([f, np.ones((f.shape[0], 1))])


@dataclass(frozen=True, eq=False)
class LabeledExample:
    x: np.ndarray
    y: float

    def __post_init__(self):
        x = param_vector(self.x)
        if x[-1] != 1.0:
            raise ValueError(f"bias coordinate must be exactly 1, got {x[-1]!r}")
        if not math.isfinite(self.y):
            raise ValueError("label must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", float(self.y))

    @classmethod
    def from_features(cls, features, y: float) -> "LabeledExample":
        return cls(with_bias(features), y)

    @property
    def features(self) -> np.ndarray:
        return self.x[:-1]


class RngStream:
    """A seeded random stream.

    The generator is numpy's PCG64 seeded through ``SeedSequence(seed,
    spawn_key=(stream_id, ...))``, so a given ``(seed, stream_id)`` yields the
    same draws on every platform running the same numpy generator.
    Streams are not meant to be shared between workers; use :meth:`substream`.
    """

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple = ()):
        for name, value in (("seed", seed), ("stream_id", stream_id)):
            if not 0 <= int(value) < U64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self._path = tuple(_path)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id, *self._path))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def substream(self, *keys: int) -> "RngStream":
        """Independent child stream; depends only on (seed, stream_id, path, keys)."""
        if not keys:
            raise ValueError("substream needs at least one key")
        return RngStream(self.seed, self.stream_id, self._path + tuple(int(k) for k in keys))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, path={self._path})"


@dataclass(frozen=True)
class Marginal1D:
    """A one-dimensional marginal: either a frozen scipy continuous law or finite atoms.

    For atoms, :meth:`pdf` returns the probability mass at ``t`` (zero off the atoms).
    """

    rv: object = None
    atoms: tuple = ()

    @property
    def discrete(self) -> bool:
        return self.rv is None

    def pdf(self, t):
        t = np.asarray(t, dtype=np.float64)
        if not self.discrete:
            return self.rv.pdf(t)
        out = np.zeros_like(t)
        for value, weight in self.atoms:
            out = out + np.where(np.abs(t - value) <= _MATCH_TOL * max(1.0, abs(value)), weight, 0.0)
        return out

    def cdf(self, t):
        t = np.asarray(t, dtype=np.float64)
        if not self.discrete:
            return self.rv.cdf(t)
        out = np.zeros_like(t)
        for value, weight in self.atoms:
            out = out + np.where(value <= t, weight, 0.0)
        return out

    def support(self, tail: float = 1e-10) -> tuple[float, float]:
        """Interval holding all but ``tail`` mass on each side (exact for bounded laws)."""
        if self.discrete:
            values = [a for a, _ in self.atoms]
            return min(values), max(values)
        lo, hi = self.rv.support()
        if not math.isfinite(lo):
            lo = float(self.rv.ppf(tail))
        if not math.isfinite(hi):
            hi = float(self.rv.isf(tail))
        return float(lo), float(hi)

    def mean(self) -> float:
        if self.discrete:
            return float(sum(a * w for a, w in self.atoms))
        return float(self.rv.mean())


def _unit(e) -> np.ndarray:
    e = np.asarray(e, dtype=np.float64)
    n = np.linalg.norm(e)
    if n == 0:
        raise ValueError("direction must be nonzero")
    if abs(n - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    return e


def _as_axes(axes, dim: int) -> np.ndarray:
    if axes is None:
        return np.zeros((0, dim))
    E = np.atleast_2d(np.asarray(axes, dtype=np.float64))
    if E.shape[1] != dim:
        raise DimensionError(f"axes must have {dim} columns, got {E.shape}")
    if not np.allclose(E @ E.T, np.eye(E.shape[0]), atol=1e-9):
        raise ValueError("conditioning axes must be orthonormal")
    return E


def _as_values(values, n: int, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros((n, 0))
    v = np.asarray(values, dtype=np.float64)
    if v.ndim <= 1 or v.shape == (1, k):
        v = np.broadcast_to(v.reshape(1, -1), (n, k))
    if v.shape != (n, k):
        raise DimensionError(f"conditioning values must have shape {(n, k)}, got {v.shape}")
    return v


class BaseDistribution(ABC):
    """Law of the feature part of x (the bias is appended by :func:`sample_base`).

    Conditioning is expressed with orthonormal ``axes`` (k x d) and the values
    of ``axes @ features``; :meth:`marginal` gives the conditional law of
    ``direction @ features``, :meth:`sample_given` draws from the conditional.
    """

    dim: int

    @abstractmethod
    def sample(self, rng: RngStream, n: int) -> np.ndarray: ...

    @abstractmethod
    def marginal(self, direction, given_axes=None, given_values=None) -> Marginal1D: ...

    @abstractmethod
    def sample_given(self, axes, values, rng: RngStream, n: int) -> np.ndarray: ...

    def _check_direction(self, direction, E):
        e = _unit(direction)
        if e.shape != (self.dim,):
            raise DimensionError(f"direction must have length {self.dim}")
        if E.shape[0] and np.max(np.abs(E @ e)) > 1e-9:
            raise ValueError("direction must be orthogonal to the conditioning axes")
        return e


@dataclass(frozen=True)
class StandardGaussian(BaseDistribution):
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    def sample(self, rng, n):
        return rng.gen.standard_normal((n, self.dim))

    def marginal(self, direction, given_axes=None, given_values=None):
        E = _as_axes(given_axes, self.dim)
        self._check_direction(direction, E)
        return Marginal1D(rv=stats.norm())

    def sample_given(self, axes, values, rng, n):
        E = _as_axes(axes, self.dim)
        v = _as_values(values, n, E.shape[0])
        z = rng.gen.standard_normal((n, self.dim))
        return z - (z @ E.T) @ E + v @ E


@dataclass(frozen=True)
class UniformBall(BaseDistribution):
    dim: int
    radius: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.radius > 0:
            raise ValueError("radius must be > 0")

    def _residual_radius(self, v: np.ndarray) -> np.ndarray:
        r2 = self.radius**2 - np.sum(v * v, axis=-1)
        return np.sqrt(np.clip(r2, 0.0, None)), r2

    def sample(self, rng, n):
        return self.sample_given(None, None, rng, n)

    def marginal(self, direction, given_axes=None, given_values=None):
        E = _as_axes(given_axes, self.dim)
        self._check_direction(direction, E)
        k = E.shape[0]
        v = _as_values(given_values, 1, k)[0]
        rad, r2 = self._residual_radius(v)
        if r2 <= 0:
            raise UnsupportedConditioning("conditioning values lie outside the ball")
        m = self.dim - k
        # 1-D projection of a uniform m-ball of radius R is R*(2*Beta(a, a) - 1), a = (m+1)/2
        a = (m + 1) / 2.0
        return Marginal1D(rv=stats.beta(a, a, loc=-float(rad), scale=2 * float(rad)))

    def sample_given(self, axes, values, rng, n):
        E = _as_axes(axes, self.dim)
        k = E.shape[0]
        v = _as_values(values, n, k)
        rad, r2 = self._residual_radius(v)
        if np.any(r2 < 0):
            raise UnsupportedConditioning("conditioning values lie outside the ball")
        m = self.dim - k
        base = v @ E
        if m == 0:
            return base
        C = linalg.null_space(E).T if k else np.eye(self.dim)
        g = rng.gen.standard_normal((n, m))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        scale = rad * rng.gen.random(n) ** (1.0 / m)
        return base + (g * scale[:, None]) @ C


@dataclass(frozen=True)
class UniformBox(BaseDistribution):
    """Uniform on prod_j (center_j - h_j, center_j + h_j].

    ``half_width`` may be a scalar or one value per coordinate; ``center``
    defaults to the origin. Only coordinate-axis projections and conditioning
    are supported (other directions give piecewise-polynomial marginals whose
    conditionals are not product laws).
    """

    dim: int
    half_width: object = 1.0
    center: Optional[tuple] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        h = np.broadcast_to(np.asarray(self.half_width, dtype=np.float64), (self.dim,)).copy()
        if not np.all(h > 0):
            raise ValueError("half-width must be > 0")
        c = np.zeros(self.dim) if self.center is None else np.asarray(self.center, dtype=np.float64)
        if c.shape != (self.dim,):
            raise DimensionError("center must have length dim")
        object.__setattr__(self, "_h", h)
        object.__setattr__(self, "_c", c)
        object.__setattr__(self, "_lo", c - h)
        object.__setattr__(self, "_hi", c + h)

    @classmethod
    def from_bounds(cls, low, high) -> "UniformBox":
        """Box on prod_j (low_j, high_j] with the endpoints stored exactly."""
        lo = np.atleast_1d(np.asarray(low, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(high, dtype=np.float64))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("low and high must be vectors of equal length")
        if not np.all(hi > lo):
            raise ValueError("need high > low on every axis")
        box = cls(lo.size, tuple((hi - lo) / 2), tuple((hi + lo) / 2))
        object.__setattr__(box, "_lo", lo)
        object.__setattr__(box, "_hi", hi)
        return box

    @property
    def low(self) -> np.ndarray:
        return self._lo

    @property
    def high(self) -> np.ndarray:
        return self._hi

    def _axis(self, e) -> tuple[int, float]:
        idx = np.flatnonzero(np.abs(e) > 1e-12)
        if idx.size != 1:
            raise UnsupportedConditioning("box marginals are only available along coordinate axes")
        j = int(idx[0])
        return j, float(np.sign(e[j]))

    def sample(self, rng, n):
        u = rng.gen.random((n, self.dim))
        return np.maximum(self.high - (self.high - self.low) * u, np.nextafter(self.low, np.inf))

    def _fix(self, E, v) -> dict:
        fixed = {}
        for row, col in zip(E, v.T):
            j, sgn = self._axis(row)
            vals = sgn * col
            if np.any(vals < self.low[j]) or np.any(vals > self.high[j]):
                raise UnsupportedConditioning(f"value outside the box support on axis {j}")
            fixed[j] = vals
        return fixed

    def marginal(self, direction, given_axes=None, given_values=None):
        E = _as_axes(given_axes, self.dim)
        e = self._check_direction(direction, E)
        self._fix(E, _as_values(given_values, 1, E.shape[0]))
        j, sgn = self._axis(e)
        lo, hi = sorted((sgn * self.low[j], sgn * self.high[j]))
        return Marginal1D(rv=stats.uniform(loc=lo, scale=hi - lo))

    def sample_given(self, axes, values, rng, n):
        E = _as_axes(axes, self.dim)
        fixed = self._fix(E, _as_values(values, n, E.shape[0]))
        out = self.sample(rng, n)
        for j, vals in fixed.items():
            out[:, j] = vals
        return out


@dataclass(frozen=True)
class PointMass(BaseDistribution):
    """Finite mixture of atoms; ``atoms`` is a sequence of (features, weight)."""

    atoms: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("point mass needs at least one atom")
        pts = np.array([np.atleast_1d(np.asarray(a, dtype=np.float64)) for a, _ in self.atoms])
        w = np.array([float(wt) for _, wt in self.atoms])
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("atom weights must be positive and sum to 1")
        object.__setattr__(self, "atoms", tuple((tuple(p), float(wt)) for p, wt in zip(pts, w)))
        object.__setattr__(self, "dim", pts.shape[1])
        object.__setattr__(self, "_pts", pts)
        object.__setattr__(self, "_w", w)

    def sample(self, rng, n):
        idx = rng.gen.choice(len(self._w), size=n, p=self._w)
        return self._pts[idx].copy()

    def _matching(self, E, v) -> np.ndarray:
        proj = self._pts @ E.T
        tol = _MATCH_TOL * np.maximum(1.0, np.abs(v))
        return np.all(np.abs(proj - v) <= tol, axis=1)

    def marginal(self, direction, given_axes=None, given_values=None):
        E = _as_axes(given_axes, self.dim)
        e = self._check_direction(direction, E)
        v = _as_values(given_values, 1, E.shape[0])[0]
        mask = self._matching(E, v)
        if not mask.any():
            raise UnsupportedConditioning("no atom matches the conditioning values")
        w = self._w[mask] / self._w[mask].sum()
        merged: dict[float, float] = {}
        for t, wt in zip(self._pts[mask] @ e, w):
            key = next((k for k in merged if abs(k - t) <= _MATCH_TOL * max(1.0, abs(t))), float(t))
            merged[key] = merged.get(key, 0.0) + float(wt)
        return Marginal1D(atoms=tuple(sorted(merged.items())))

    def sample_given(self, axes, values, rng, n):
        E = _as_axes(axes, self.dim)
        v = _as_values(values, n, E.shape[0])
        out = np.empty((n, self.dim))
        rows, inverse = np.unique(v, axis=0, return_inverse=True)
        inverse = np.asarray(inverse).reshape(-1)
        for i, row in enumerate(rows):
            mask = self._matching(E, row)
            if not mask.any():
                raise UnsupportedConditioning("no atom matches the conditioning values")
            where = np.flatnonzero(inverse == i)
            w = self._w[mask] / self._w[mask].sum()
            pick = rng.gen.choice(np.flatnonzero(mask), size=where.size, p=w)
            out[where] = self._pts[pick]
        return out


def sample_base(dist: BaseDistribution, rng: RngStream) -> np.ndarray:
    """One draw of x = [features, 1]."""
    return param_vector(with_bias(dist.sample(rng, 1)[0]))


def sample_base_batch(dist: BaseDistribution, rng: RngStream, n: int) -> np.ndarray:
    return with_bias(dist.sample(rng, n))
