"""Simulation lab for difficulty-ordered SGD on linear regression and hinge classification."""

from .curriculum import Pool, PolicyTag, SchedulePolicy, ScoreLaw, Trajectory, build_pool, race, run_training
from .errors import CurriculumLabError
from .losses import Kind, Problem
from .vecspace import LabeledExample, PointMass, RngStream, StandardGaussian, UniformBall, UniformBox

__version__ = "0.1.0"

__all__ = [
    "CurriculumLabError",
    "Kind",
    "LabeledExample",
    "PointMass",
    "PolicyTag",
    "Pool",
    "Problem",
    "RngStream",
    "SchedulePolicy",
    "ScoreLaw",
    "StandardGaussian",
    "Trajectory",
    "UniformBall",
    "UniformBox",
    "build_pool",
    "race",
    "run_training",
]
