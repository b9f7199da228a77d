"""Exception types shared across the package."""


class CPAttnError(Exception):
    pass


class ParameterError(CPAttnError, ValueError):
    """Invalid argument values (node counts, thresholds, lengths)."""


class ShapeError(CPAttnError, ValueError):
    pass


class NumericError(CPAttnError, ArithmeticError):
    pass


class ConsistencyError(CPAttnError, ValueError):
    """Objects built against incompatible graphs or assignments."""


class CPGenerationError(CPAttnError, RuntimeError):
    pass
