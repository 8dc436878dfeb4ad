"""Exception hierarchy shared by all modules."""


class BRWError(Exception):
    """Base class; the CLI maps subclasses to exit codes."""


class ConfigError(BRWError, ValueError):
    pass


# kernel validation
class AsymmetricKernel(ConfigError):
    pass


class NotIrreducible(ConfigError):
    pass


class ZeroOffsetPresent(ConfigError):
    pass


class SingularQ(BRWError, ArithmeticError):
    pass


# numerics
class ToleranceNotReached(BRWError, ArithmeticError):
    pass


class RecurrentCase(BRWError, ValueError):
    pass


class DivergentIntegral(BRWError, ValueError):
    pass


class DomainError(BRWError, ValueError):
    pass


class UnsupportedDimension(BRWError, ValueError):
    pass


# simulation
class RateOverflow(BRWError, RuntimeError):
    pass


class MissingSigmaCurve(BRWError, ValueError):
    pass


# pipeline / statistics
class GridMismatch(BRWError, ValueError):
    pass


class NotPSD(BRWError, ArithmeticError):
    pass


class TooFewReplicates(BRWError, ValueError):
    pass


class TooFewEffective(BRWError, ValueError):
    """Degenerate sample (e.g. zero variance)."""


class NonpositiveInput(BRWError, ValueError):
    pass


class DataIntegrityError(BRWError):
    pass
