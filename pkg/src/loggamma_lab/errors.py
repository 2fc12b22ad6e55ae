"""Exception hierarchy shared by all modules."""


class LabError(Exception):
    """Base class for every error raised by loggamma_lab."""


class DomainError(LabError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class PoleError(DomainError):
    """Argument within the pole-proximity threshold of a singularity."""


class NumericOverflowError(LabError, ArithmeticError):
    """Result not representable in double precision."""


class ConvergenceError(LabError, RuntimeError):
    """Iteration or series did not reach the requested tolerance."""


class GeometryError(LabError, ValueError):
    """Contour parameters give an invalid or infeasible geometry."""


class HypothesisError(LabError, ValueError):
    """Parameters violate the hypotheses under which a formula is valid."""


class ImaginaryResidualError(LabError, ArithmeticError):
    """A quantity that must be real has a large imaginary part."""


class ConfigError(LabError, ValueError):
    """Invalid experiment configuration."""
