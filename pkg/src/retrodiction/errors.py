"""Exception hierarchy.

Every failure raised by the library derives from :class:`RetrodictionError`,
so callers (notably the CLI) can separate input problems from bugs.
"""


class RetrodictionError(Exception):
    """Base class for all library errors."""


# probabilities and channels

class NegativeMass(RetrodictionError, ValueError):
    pass


class NotNormalized(RetrodictionError, ValueError):
    pass


class NotSquare(RetrodictionError, ValueError):
    pass


class NotInvariant(RetrodictionError, ValueError):
    pass


class EmptySupport(RetrodictionError, ValueError):
    pass


class AlphabetMismatch(RetrodictionError, ValueError):
    pass


class PriorOutsideSupport(RetrodictionError, ValueError):
    pass


class SupportMismatch(RetrodictionError, ValueError):
    """Forward and reverse processes disagree on which pairs are possible."""


# f-families and fluctuation relations

class ZeroParameter(RetrodictionError, ValueError):
    pass


class NonInvertibleCustom(RetrodictionError, ValueError):
    pass


class DomainError(RetrodictionError, ValueError):
    pass


class MissingReverseAtom(RetrodictionError, ValueError):
    pass


class DivergenceInfinite(RetrodictionError, ArithmeticError):
    pass


# quantum

class InvalidOperator(RetrodictionError, ValueError):
    """Matrix fails a Hermiticity, positivity or trace requirement."""


class DimensionMismatch(RetrodictionError, ValueError):
    pass


class SingularReference(RetrodictionError, ValueError):
    pass


class NotCPTP(RetrodictionError, ValueError):
    pass


class ZeroOutcomeWeight(RetrodictionError, ValueError):
    pass


# scenarios

class NotBijective(RetrodictionError, ValueError):
    pass


class EmptyShell(RetrodictionError, ValueError):
    pass


class NonUniqueSteadyState(RetrodictionError, ValueError):
    pass


class SingularSteadyState(RetrodictionError, ValueError):
    pass


# scenario files and outputs

class ParseError(RetrodictionError, ValueError):
    pass


class SchemaError(RetrodictionError, ValueError):
    pass


class VersionError(RetrodictionError, ValueError):
    pass


class IoError(RetrodictionError, OSError):
    pass
