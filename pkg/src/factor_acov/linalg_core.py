"""Matrix types, row-major vectorization, symmetric eigendecomposition and dense solves.

Index conventions
-----------------
A p-by-k loading matrix is flattened by rows, so loading (i, r) sits at flat
position ``i*k + r`` (0-based; ``(i-1)k + r`` 1-based). A p-by-p covariance
matrix is flattened the same way, keeping both (x, y) and (y, x): the
derivative matrices in this package therefore have p**2 columns and the
asymptotic covariance of the vectorized matrix is p**2-by-p**2.
"""

import warnings
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
import scipy.linalg

from .errors import InvalidInput, SingularSystem, WrongMode

Mode = Literal["covariance", "correlation"]

COND_LIMIT = 1e12


@dataclass(frozen=True)
class SymmetricMatrix:
    """A covariance or correlation matrix.

    The array is copied and made read-only on construction. Symmetry is
    checked exactly; pass ``symmetrize=True`` to average away rounding noise
    first.
    """

    entries: np.ndarray
    mode: Mode = "covariance"
    symmetrize: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InvalidInput(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidInput("matrix has non-finite entries")
        if self.mode not in ("covariance", "correlation"):
            raise InvalidInput(f"unknown mode {self.mode!r}")
        if self.symmetrize:
            a = (a + a.T) / 2
        if not np.array_equal(a, a.T):
            raise InvalidInput("matrix is not symmetric")
        if self.mode == "correlation" and not np.all(np.diag(a) == 1.0):
            raise WrongMode("correlation matrix must have a unit diagonal")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def order(self) -> int:
        return self.entries.shape[0]

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    def check_psd(self, rtol=1e-10):
        """Raise InvalidInput unless the smallest eigenvalue is >= -rtol * largest."""
        w = np.linalg.eigvalsh(self.entries)
        if w[0] < -rtol * max(abs(w[-1]), np.finfo(float).tiny):
            raise InvalidInput(f"matrix is not positive semidefinite (min eigenvalue {w[0]:.3g})")
        return self

    def to_correlation(self) -> "SymmetricMatrix":
        if self.mode == "correlation":
            return self
        d = np.sqrt(np.diag(self.entries))
        if np.any(d <= 0):
            raise InvalidInput("non-positive variance; cannot standardize")
        r = self.entries / np.outer(d, d)
        r = (r + r.T) / 2
        np.fill_diagonal(r, 1.0)
        return SymmetricMatrix(r, "correlation")


def as_array(sigma) -> np.ndarray:
    """Return the entries of a SymmetricMatrix, or validate a raw square array."""
    if isinstance(sigma, SymmetricMatrix):
        return sigma.entries
    a = np.asarray(sigma, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("matrix has non-finite entries")
    return a


def mode_of(sigma) -> Mode:
    return sigma.mode if isinstance(sigma, SymmetricMatrix) else "covariance"


@dataclass(frozen=True)
class RowVec:
    """A matrix flattened by rows, remembering its source shape."""

    values: np.ndarray
    source_shape: tuple

    def __post_init__(self):
        rows, cols = self.source_shape
        if self.values.ndim != 1 or self.values.size != rows * cols:
            raise InvalidInput(
                f"vector of length {self.values.size} does not match shape {self.source_shape}"
            )

    def index(self, i, r) -> int:
        """Flat 0-based position of element (i, r), both 0-based."""
        rows, cols = self.source_shape
        if not (0 <= i < rows and 0 <= r < cols):
            raise InvalidInput(f"element ({i}, {r}) outside shape {self.source_shape}")
        return i * cols + r


def vec_by_rows(m) -> RowVec:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise InvalidInput(f"vec_by_rows needs a 2-d array, got {m.ndim}-d")
    return RowVec(m.reshape(-1).copy(), tuple(m.shape))


def unvec(v: RowVec) -> np.ndarray:
    return v.values.reshape(v.source_shape).copy()


@dataclass(frozen=True)
class EigenPairs:
    values: np.ndarray
    vectors: np.ndarray


def sign_normalize(columns: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive (first index wins ties)."""
    columns = np.array(columns, dtype=float)
    if columns.size == 0:
        return columns
    idx = np.argmax(np.abs(columns), axis=0)
    signs = np.sign(columns[idx, np.arange(columns.shape[1])])
    signs[signs == 0] = 1.0
    return columns * signs


def symmetric_eigen(s) -> EigenPairs:
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending."""
    a = as_array(s)
    w, v = np.linalg.eigh(a)
    order = np.argsort(w)[::-1]
    return EigenPairs(w[order], sign_normalize(v[:, order]))


def condition_estimate(lu_piv, anorm) -> float:
    """Reciprocal-free 1-norm condition estimate from an LU factorization (LAPACK gecon)."""
    lu, _ = lu_piv
    gecon = scipy.linalg.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    if info != 0 or rcond == 0:
        return np.inf
    return 1.0 / rcond


def solve_linear(k_mat, rhs, cond_limit=COND_LIMIT) -> np.ndarray:
    """Solve ``k_mat @ x = rhs`` by LU with a condition check.

    Raises SingularSystem when the estimated 1-norm condition number exceeds
    ``cond_limit``, or when the solution fails the residual bound
    ``max|K x - rhs| <= 1e-9 max|rhs|``.
    """
    k_mat = np.asarray(k_mat, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if k_mat.ndim != 2 or k_mat.shape[0] != k_mat.shape[1]:
        raise InvalidInput(f"coefficient matrix must be square, got {k_mat.shape}")
    if rhs.shape[0] != k_mat.shape[0]:
        raise InvalidInput(f"right-hand side has {rhs.shape[0]} rows, expected {k_mat.shape[0]}")
    if not (np.all(np.isfinite(k_mat)) and np.all(np.isfinite(rhs))):
        raise InvalidInput("non-finite entries in linear system")
    if k_mat.shape[0] == 0:
        return np.zeros(rhs.shape)
    anorm = np.abs(k_mat).sum(axis=0).max()
    if anorm == 0:
        raise SingularSystem("coefficient matrix is zero")
    # singularity is reported through the condition estimate below
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu_piv = scipy.linalg.lu_factor(k_mat, check_finite=False)
    cond = condition_estimate(lu_piv, anorm)
    if cond > cond_limit:
        raise SingularSystem(f"coefficient matrix is numerically singular (condition ~ {cond:.3g})")
    x = scipy.linalg.lu_solve(lu_piv, rhs, check_finite=False)
    scale = np.abs(rhs).max() if rhs.size else 0.0
    if rhs.size and np.abs(k_mat @ x - rhs).max() > 1e-9 * max(scale, np.finfo(float).tiny):
        raise SingularSystem("linear solve failed the residual check")
    return x
