"""Exception hierarchy shared across the package."""


class KgExtrapError(Exception):
    """Base class for all package errors."""


class ParseError(KgExtrapError, ValueError):
    """A triple file line could not be parsed."""


class EmptyGraphError(KgExtrapError, ValueError):
    pass


class ConstraintViolation(KgExtrapError, ValueError):
    """Train/test graphs violate the problem formulation (e.g. no overlap)."""


class ContractError(KgExtrapError, ValueError):
    """A documented precondition of an operation does not hold."""


class SamplingError(KgExtrapError, RuntimeError):
    pass


class DivergenceError(KgExtrapError, FloatingPointError):
    """Training produced a non-finite loss or gradient."""


class ConfigError(KgExtrapError, ValueError):
    pass


class DomainError(KgExtrapError, ValueError):
    """A math op received an input outside its domain (log of <= 0, divide by 0)."""


class ShapeError(KgExtrapError, ValueError):
    pass
