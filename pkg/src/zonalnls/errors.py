class ZonalError(Exception):
    """Base class for every failure raised by zonalnls."""


class InvalidParameterError(ZonalError, ValueError):
    pass


class LengthMismatchError(InvalidParameterError):
    pass


class InsufficientRuleError(InvalidParameterError):
    """The quadrature rule cannot integrate the required polynomial degree."""


class RuleMismatchError(InvalidParameterError):
    pass


class EmptyBandError(InvalidParameterError):
    """No harmonic degree lies in the requested dyadic band."""


class TensorDegreeError(InvalidParameterError):
    """An input is supported on degrees the triple-product tensor does not cover."""


class UnderResolvedError(ZonalError):
    pass


class DegenerateFitError(ZonalError):
    pass


class EnumerationBudgetError(ZonalError):
    pass


class NonFiniteError(ZonalError, ArithmeticError):
    """A nodewise update produced NaN or Inf, usually because the solution blew up."""


class ConditionUndefinedError(ZonalError):
    pass


class NoGaugeError(ZonalError):
    pass


class DegenerateNonlinearityError(ZonalError):
    pass


class AtBlowupError(ZonalError, ArithmeticError):
    pass


class TensorCacheError(ZonalError):
    pass


class ConfigError(ZonalError):
    pass
