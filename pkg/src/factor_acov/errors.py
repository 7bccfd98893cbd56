"""Exception hierarchy.

Two families: ``InvalidInput`` for malformed arguments and files, and
``NumericalCondition`` for well-formed inputs at which an estimate or its
standard errors do not exist (singular systems, Heywood cases, ...). The CLI
maps the latter to exit code 2.
"""


class FactorAcovError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(FactorAcovError, ValueError):
    pass


class WrongMode(InvalidInput):
    """A covariance matrix was passed where a correlation matrix is needed, or vice versa."""


class ParseError(InvalidInput):
    pass


class InternalContractViolation(FactorAcovError):
    pass


class NumericalCondition(FactorAcovError):
    pass


class SingularSystem(NumericalCondition):
    """Linear system too ill-conditioned to solve (coincident eigenvalues, non-unique solution)."""


class SingularInput(NumericalCondition):
    """The input matrix is singular where an inverse is required."""


class RankDeficient(NumericalCondition):
    pass


class CommunalityCollapse(RankDeficient):
    """A communality reached zero during alpha factoring."""


class HeywoodCase(NumericalCondition):
    pass


class NotConverged(NumericalCondition):
    pass


class ImproperScale(NumericalCondition):
    """Image factoring converged to a non-positive scale."""


class NumericalBreakdown(NumericalCondition):
    pass


class UnreliableSimulation(NumericalCondition):
    pass
