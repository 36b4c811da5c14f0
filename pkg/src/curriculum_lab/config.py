"""Experiment configuration: TOML file plus command-line overrides.

Every section is optional; omitted keys take the defaults below. Unknown
keys and values violating a module precondition raise :class:`ConfigError`
before any computation starts.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .curriculum import PolicyTag, ScoreLaw
from .errors import CurriculumLabError
from .losses import Kind
from .vecspace import StandardGaussian, UniformBall, UniformBox


class ConfigError(CurriculumLabError):
    """Invalid or inconsistent configuration."""


@dataclass(frozen=True)
class ProblemSection:
    kind: str = "regression"
    eta: float = 0.01
    norm: float = 1.0


@dataclass(frozen=True)
class DistributionSection:
    kind: str = "gaussian"  # gaussian | ball | box
    dim: int = 2
    radius: float = 1.0
    half_width: float = 1.0


@dataclass(frozen=True)
class GeometrySection:
    lam: tuple = (0.5, 1.0, 2.0)
    theta: tuple = (math.pi / 3, math.pi / 2, 2 * math.pi / 3)
    w_bar: Optional[tuple] = None  # default e1 (bias weight 0)
    zenith: Optional[tuple] = None  # default e1


@dataclass(frozen=True)
class GridSection:
    psi: tuple = (0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0)
    upsilon: tuple = ()


@dataclass(frozen=True)
class MonteCarloSection:
    n: int = 100_000
    z: float = 3.0


@dataclass(frozen=True)
class RaceSection:
    policies: tuple = ("curriculum_global", "anti_curriculum")
    pool_size: int = 10_000
    steps: int = 1_000
    horizon: int = 10_000
    checkpoint: Optional[int] = None
    seeds: int = 100
    score_law: str = "half_normal"
    score_scale: float = 2.0
    p0: float = 0.1
    refresh: int = 10
    alpha: float = 0.01


@dataclass(frozen=True)
class CounterexampleSection:
    mode: str = "theorem3"  # theorem3 | hinge_low_psi
    upsilon: float = 1.0
    eta: float = 0.01
    n: int = 200_000
    theta: float = math.pi / 3
    psi1: float = 0.1
    psi2: float = 0.4


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    jobs: int = 1
    out: str = "out"
    format: str = "csv"
    problem: ProblemSection = field(default_factory=ProblemSection)
    distribution: DistributionSection = field(default_factory=DistributionSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    grid: GridSection = field(default_factory=GridSection)
    mc: MonteCarloSection = field(default_factory=MonteCarloSection)
    race: RaceSection = field(default_factory=RaceSection)
    counterexample: CounterexampleSection = field(default_factory=CounterexampleSection)

    # derived objects ---------------------------------------------------

    def make_distribution(self):
        d = self.distribution
        if d.kind == "gaussian":
            return StandardGaussian(d.dim)
        if d.kind == "ball":
            return UniformBall(d.dim, d.radius)
        return UniformBox(d.dim, d.half_width)

    def w_bar(self) -> np.ndarray:
        dim = self.distribution.dim
        if self.geometry.w_bar is not None:
            return np.array(self.geometry.w_bar, dtype=np.float64)
        w = np.zeros(dim + 1)
        w[0] = 1.0
        return w

    def zenith(self) -> np.ndarray:
        dim = self.distribution.dim
        if self.geometry.zenith is not None:
            z = np.array(self.geometry.zenith, dtype=np.float64)
            return z / np.linalg.norm(z)
        z = np.zeros(dim + 1)
        z[0] = 1.0
        return z

    def score_law(self) -> ScoreLaw:
        return ScoreLaw(self.race.score_law, self.race.score_scale)

    def to_dict(self) -> dict:
        return _plain(asdict(self))

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form (output location excluded)."""
        d = self.to_dict()
        d.pop("out")
        d.pop("jobs")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), allow_nan=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


SECTIONS = {
    "problem": ProblemSection,
    "distribution": DistributionSection,
    "geometry": GeometrySection,
    "grid": GridSection,
    "mc": MonteCarloSection,
    "race": RaceSection,
    "counterexample": CounterexampleSection,
}
TOP_LEVEL = ("seed", "jobs", "out", "format")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _coerce(cls, name, raw):
    """Convert a TOML value to the type of the dataclass default."""
    default = {f.name: f for f in fields(cls)}[name].default
    if isinstance(default, tuple) or (default is None and isinstance(raw, list)):
        if not isinstance(raw, list):
            raise ConfigError(f"{cls.__name__}.{name} must be a list")
        return tuple(raw)
    if isinstance(default, bool) or raw is None:
        return raw
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(raw, bool) or not isinstance(raw, int):
            raise ConfigError(f"{name} must be an integer, got {raw!r}")
        return raw
    if isinstance(default, float):
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigError(f"{name} must be a number, got {raw!r}")
        return float(raw)
    if isinstance(default, str) and not isinstance(raw, str):
        raise ConfigError(f"{name} must be a string, got {raw!r}")
    return raw


def _section(cls, table: dict):
    if not isinstance(table, dict):
        raise ConfigError(f"[{cls.__name__}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = set(table) - known
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)} in {cls.__name__}")
    return cls(**{k: _coerce(cls, k, v) for k, v in table.items()})


def from_dict(data: dict) -> ExperimentConfig:
    unknown = set(data) - set(SECTIONS) - set(TOP_LEVEL)
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    kwargs = {k: _coerce(ExperimentConfig, k, data[k]) for k in TOP_LEVEL if k in data}
    for name, cls in SECTIONS.items():
        if name in data:
            kwargs[name] = _section(cls, data[name])
    cfg = ExperimentConfig(**kwargs)
    validate(cfg)
    return cfg


def load(path) -> ExperimentConfig:
    try:
        with open(Path(path), "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc
    return from_dict(data)


def with_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Apply non-None top-level overrides (flags win over the file)."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    out = replace(cfg, **changes)
    validate(out)
    return out


def _check(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _finite(values, name):
    _check(all(isinstance(v, (int, float)) and math.isfinite(v) for v in values), f"{name} must be finite numbers")


def validate(cfg: ExperimentConfig) -> None:
    _check(0 <= cfg.seed < 2**64, "seed must be an unsigned 64-bit integer")
    _check(cfg.jobs >= 1, "jobs must be >= 1")
    _check(cfg.format in ("csv", "json"), "format must be csv or json")

    p = cfg.problem
    _check(p.kind in (k.value for k in Kind), f"problem.kind must be one of {[k.value for k in Kind]}")
    _check(math.isfinite(p.eta) and p.eta > 0, "problem.eta must be > 0")
    _check(math.isfinite(p.norm) and p.norm > 0, "problem.norm must be > 0")

    d = cfg.distribution
    _check(d.kind in ("gaussian", "ball", "box"), "distribution.kind must be gaussian, ball or box")
    _check(d.dim >= 1, "distribution.dim must be >= 1")
    _check(d.radius > 0 and d.half_width > 0, "distribution radius and half_width must be > 0")
    if p.kind == "hinge":
        _check(d.dim >= 2, "hinge experiments need distribution.dim >= 2")

    g = cfg.geometry
    _finite(g.lam, "geometry.lam")
    _finite(g.theta, "geometry.theta")
    _check(len(g.lam) >= 1 and all(v > 0 for v in g.lam), "geometry.lam must be a nonempty list of values > 0")
    _check(
        len(g.theta) >= 1 and all(0 < v < math.pi for v in g.theta),
        "geometry.theta must be a nonempty list of angles in (0, pi)",
    )
    for name in ("w_bar", "zenith"):
        v = getattr(g, name)
        if v is not None:
            _finite(v, f"geometry.{name}")
            _check(len(v) == d.dim + 1, f"geometry.{name} must have length dim + 1")
    if g.zenith is not None:
        z = np.asarray(g.zenith, dtype=float)
        _check(np.linalg.norm(z[:-1]) > 0, "geometry.zenith needs a nonzero feature part")
    if d.kind == "box" and g.zenith is not None:
        z = np.asarray(g.zenith, dtype=float)[:-1]
        _check(np.count_nonzero(z) == 1, "box distributions need an axis-aligned zenith")

    gr = cfg.grid
    _finite(gr.psi, "grid.psi")
    _finite(gr.upsilon, "grid.upsilon")
    _check(len(gr.psi) >= 1 and all(v >= 0 for v in gr.psi), "grid.psi must be a nonempty list of values >= 0")
    _check(all(v >= 0 for v in gr.upsilon), "grid.upsilon values must be >= 0")
    if p.kind == "hinge":
        _check(all(v > 0 for v in gr.upsilon), "hinge local scores must be > 0")

    _check(cfg.mc.n >= 2, "mc.n must be >= 2")
    _check(cfg.mc.z > 0, "mc.z must be > 0")

    r = cfg.race
    valid_tags = [t.value for t in PolicyTag]
    _check(len(r.policies) >= 1, "race.policies must be nonempty")
    _check(all(t in valid_tags for t in r.policies), f"race.policies entries must be in {valid_tags}")
    _check(len(set(r.policies)) == len(r.policies), "race.policies must not repeat")
    _check(r.pool_size >= 1 and r.seeds >= 1 and r.steps >= 0, "race sizes must be positive")
    _check(r.horizon >= 1 and r.refresh >= 1, "race.horizon and race.refresh must be >= 1")
    _check(0 < r.p0 <= 1, "race.p0 must lie in (0, 1]")
    _check(0 < r.alpha < 1, "race.alpha must lie in (0, 1)")
    _check(
        r.checkpoint is None or (isinstance(r.checkpoint, int) and 0 <= r.checkpoint <= r.steps),
        "race.checkpoint must be an integer in [0, steps]",
    )
    try:
        ScoreLaw(r.score_law, r.score_scale)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    c = cfg.counterexample
    _check(c.mode in ("theorem3", "hinge_low_psi"), "counterexample.mode must be theorem3 or hinge_low_psi")
    _check(c.eta > 0 and c.upsilon > 0 and c.n >= 2, "counterexample eta, upsilon must be > 0 and n >= 2")
    if c.mode == "hinge_low_psi":
        _check(0 < c.theta < math.pi, "counterexample.theta must lie in (0, pi)")
        cos = math.cos(c.theta)
        _check(cos > 0, "the low-psi construction needs cos(theta) > 0")
        _check(0 < c.psi1 < c.psi2 < 1 - cos, "need 0 < psi1 < psi2 < 1 - cos(theta)")
