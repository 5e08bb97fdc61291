class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class UndefinedPosteriorError(ValidationError):
    """The observed symbol has zero mass under the mixture."""


class NumericalError(ArithmeticError):
    """A numerical routine produced a result outside its tolerance."""


class TrainingDivergedError(RuntimeError):
    """A training loss became non-finite."""
