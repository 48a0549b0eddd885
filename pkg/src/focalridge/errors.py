"""Exception hierarchy.

Every failure the library can report has its own class so callers (and the
CLI) can tell them apart without parsing messages.
"""


class FocalRidgeError(Exception):
    """Base class for all library errors."""


class DataValidationError(FocalRidgeError, ValueError):
    """Raised when an input table violates a dataset invariant."""


class NonBinaryTreatmentError(DataValidationError):
    pass


class MissingValueError(DataValidationError):
    pass


class RowCountMismatchError(DataValidationError):
    pass


class NoTreatmentsError(DataValidationError):
    pass


class ConstantFocalError(DataValidationError):
    """All rows treated, or none treated: the focal regressor has no variation."""


class MissingColumnError(DataValidationError):
    pass


class DegenerateDesignError(FocalRidgeError, ValueError):
    """A numerical problem makes the requested estimate undefined."""


class SingularDesignError(DegenerateDesignError):
    pass


class NuisanceFitError(DegenerateDesignError):
    """A nuisance regression could not be fitted (e.g. collinear covariates)."""


class InsufficientDataError(DegenerateDesignError):
    pass


class DimensionMismatchError(FocalRidgeError, ValueError):
    pass


class UnsupportedError(FocalRidgeError, NotImplementedError):
    pass
