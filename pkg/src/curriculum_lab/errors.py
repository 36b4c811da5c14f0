"""Exception hierarchy.

Every error raised by the library derives from :class:`CurriculumLabError`,
which is a ``ValueError`` so callers validating user input can catch either.
"""


class CurriculumLabError(ValueError):
    pass


class DimensionError(CurriculumLabError):
    pass


class ContractViolation(CurriculumLabError):
    """An input violates a documented precondition (e.g. unnormalized hinge w)."""


class DegenerateProjection(CurriculumLabError):
    """Projected hinge step would have to normalize the zero vector."""


class DegenerateHyperplane(CurriculumLabError):
    """x == 0, so {w : x.w = y} is not a hyperplane."""


class NonDifferentiablePoint(CurriculumLabError):
    pass


class PoleDegeneracy(CurriculumLabError):
    """w_t == w_bar; the zenith direction w_bar - w_t is undefined."""


class FrameDegeneracy(CurriculumLabError):
    """sin(theta) ~ 0; the two-axis hinge frame is undefined."""


class UnsupportedConditioning(CurriculumLabError):
    """The distribution cannot be conditioned as requested (zero density, non axis-aligned box, ...)."""


class UndefinedNabla(CurriculumLabError):
    pass


class ConstructionFailed(CurriculumLabError):
    pass


class PreconditionError(CurriculumLabError):
    pass
