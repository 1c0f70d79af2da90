"""Exception and warning types shared across the package."""


class DasError(Exception):
    """Base class for all package errors."""


class ValidationError(DasError, ValueError):
    """Invalid parameter or malformed input."""


class CycleDetected(ValidationError):
    """An adjacency matrix that should be acyclic contains a directed cycle."""


class DimensionMismatch(ValidationError):
    """Two objects that must share a node count or shape do not."""


class InsufficientSamples(ValidationError):
    """Fewer observations than an estimator needs."""


class InvalidDof(ValidationError):
    """Non-positive or non-finite degrees of freedom."""


class InvalidDegreesOfFreedom(InvalidDof):
    """Degrees of freedom of a nested-model comparison are inconsistent."""


class EmptyDataset(ValidationError):
    """A dataset with zero rows or zero columns."""


class NumericalFailure(DasError, ArithmeticError):
    """A linear solve failed even after increasing the ridge."""


class ZeroVariancePair(RuntimeWarning):
    """Both samples of a two-sample test have exactly zero variance."""


class SingularDesign(RuntimeWarning):
    """A regression design was rank deficient and was ridge-stabilized."""
