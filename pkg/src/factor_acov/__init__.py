"""Factor analysis estimates with delta-method asymptotic standard errors.

Five extraction methods (iterated principal component, principal factor,
least-square, alpha and image factoring) are fitted as fixed points; their
defining equations are differentiated implicitly to obtain the Jacobian of
the loadings and uniquenesses with respect to the covariance or correlation
matrix, which is then sandwiched with the asymptotic covariance of the
sample matrix.
"""

from .errors import (
    CommunalityCollapse,
    FactorAcovError,
    HeywoodCase,
    ImproperScale,
    InternalContractViolation,
    InvalidInput,
    NotConverged,
    NumericalBreakdown,
    NumericalCondition,
    ParseError,
    RankDeficient,
    SingularInput,
    SingularSystem,
    UnreliableSimulation,
    WrongMode,
)
from .extraction import METHODS, FactorSolution, fit
from .jacobians import JacobianSystem, SeReport, assemble_se, loading_jacobian, uniqueness_jacobian
from .linalg_core import SymmetricMatrix, solve_linear, vec_by_rows
from .rotation import RotatedSolution, rotated_se, varimax
from .sigma_cov import AcovMatrix, acov_sample_correlations, acov_sample_covariances, load_external_acov
from .simulation import SimulationReport, run_simulation, wishart_correlation

__version__ = "0.1.0"
