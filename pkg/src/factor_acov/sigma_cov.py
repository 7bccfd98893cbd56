"""Asymptotic covariance of the vectorized sample covariance / correlation matrix.

Both (x, y) and (y, x) are kept, so the result is p**2-by-p**2 with
duplicated rows and columns. Entries are already divided by the sample size:
they are the variances and covariances of the estimates themselves.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInput, WrongMode
from .linalg_core import SymmetricMatrix


@dataclass(frozen=True)
class AcovMatrix:
    entries: np.ndarray
    n: Optional[float] = None
    mode: Optional[str] = None  # None for externally supplied matrices

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise InvalidInput(f"acov must be square, got shape {a.shape}")
        p = int(round(np.sqrt(a.shape[0])))
        if p * p != a.shape[0] or p == 0:
            raise InvalidInput(f"acov dimension {a.shape[0]} is not a perfect square")
        if not np.all(np.isfinite(a)):
            raise InvalidInput("acov has non-finite entries")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def p(self) -> int:
        return int(round(np.sqrt(self.dim)))

    def check(self, sym_tol=1e-8, psd_rtol=1e-8):
        """Validate symmetry, positive semidefiniteness and (correlation) zero diagonal pairs."""
        a = self.entries
        scale = max(np.abs(a).max(), 1.0)
        if np.abs(a - a.T).max() > sym_tol * scale:
            raise InvalidInput("acov is not symmetric")
        tr = np.trace(a)
        if tr > 0:
            w = np.linalg.eigvalsh((a + a.T) / 2)
            if w[0] < -psd_rtol * tr / self.dim:
                raise InvalidInput(f"acov is not positive semidefinite (min eigenvalue {w[0]:.3g})")
        elif np.abs(a).max() > 0:
            raise InvalidInput("acov has a non-positive trace but non-zero entries")
        if self.mode == "correlation":
            diag_idx = np.arange(self.p) * (self.p + 1)
            if np.any(a[diag_idx] != 0) or np.any(a[:, diag_idx] != 0):
                raise InvalidInput("correlation acov must vanish on diagonal pairs")
        return self


def _check_n(n):
    if not np.isfinite(n) or n < 2:
        raise InvalidInput(f"sample size must be >= 2, got {n}")


def acov_sample_covariances(sigma: SymmetricMatrix, n) -> AcovMatrix:
    """Normal-theory acov(s_ij, s_kl) = (s_ik s_jl + s_il s_jk) / n."""
    if not isinstance(sigma, SymmetricMatrix):
        sigma = SymmetricMatrix(sigma, "covariance")
    if sigma.mode != "covariance":
        raise WrongMode("acov_sample_covariances needs a covariance-mode matrix")
    _check_n(n)
    s = sigma.entries
    p = s.shape[0]
    # a[i, j, k, l] = s_ik s_jl + s_il s_jk
    a = np.einsum("ik,jl->ijkl", s, s) + np.einsum("il,jk->ijkl", s, s)
    return AcovMatrix(a.reshape(p * p, p * p) / n, n=n, mode="covariance")


def acov_sample_correlations(sigma: SymmetricMatrix, n) -> AcovMatrix:
    """Normal-theory asymptotic covariances of sample correlation coefficients.

    For i != j and k != l,

        n acov(r_ij, r_kl) = 1/2 r_ij r_kl (r_ik^2 + r_il^2 + r_jk^2 + r_jl^2)
                             + r_ik r_jl + r_il r_jk
                             - r_ij (r_jk r_jl + r_ik r_il)
                             - r_kl (r_ik r_jk + r_il r_jl)

    and every row or column belonging to a diagonal pair (i, i) is zero.
    """
    if not isinstance(sigma, SymmetricMatrix):
        sigma = SymmetricMatrix(sigma, "correlation")
    if sigma.mode != "correlation":
        raise WrongMode("acov_sample_correlations needs a correlation-mode matrix")
    _check_n(n)
    r = sigma.entries
    p = r.shape[0]
    r2 = r * r
    rij_rkl = np.einsum("ij,kl->ijkl", r, r)
    squares = (
        r2[:, None, :, None] + r2[:, None, None, :] + r2[None, :, :, None] + r2[None, :, None, :]
    )
    a = (
        0.5 * rij_rkl * squares
        + np.einsum("ik,jl->ijkl", r, r)
        + np.einsum("il,jk->ijkl", r, r)
        - r[:, :, None, None] * (np.einsum("jk,jl->jkl", r, r)[None] + np.einsum("ik,il->ikl", r, r)[:, None])
        - r[None, None, :, :] * (np.einsum("ik,jk->ijk", r, r)[:, :, :, None] + np.einsum("il,jl->ijl", r, r)[:, :, None, :])
    )
    eye = np.eye(p, dtype=bool)
    a[eye] = 0.0
    a[:, :, eye] = 0.0
    return AcovMatrix(a.reshape(p * p, p * p) / n, n=n, mode="correlation")


def write_acov(path, acov: AcovMatrix):
    """Write the plain-text format: a line with ``dim`` then ``dim`` rows of ``dim`` reals."""
    with open(path, "w") as f:
        f.write(f"{acov.dim}\n")
        for row in acov.entries:
            f.write(" ".join(repr(float(v)) for v in row))
            f.write("\n")


def load_external_acov(path, n=None) -> AcovMatrix:
    """Read a user-supplied acov matrix, e.g. from a non-normal (fourth-moment) estimator."""
    with open(path) as f:
        lines = [ln for ln in (l.strip() for l in f) if ln and not ln.startswith("#")]
    if not lines:
        raise InvalidInput(f"{path}: empty acov file")
    try:
        dim = int(lines[0])
        rows = [[float(t) for t in ln.split()] for ln in lines[1:]]
    except ValueError as exc:
        raise InvalidInput(f"{path}: {exc}") from None
    if len(rows) != dim or any(len(row) != dim for row in rows):
        raise InvalidInput(f"{path}: expected {dim} rows of {dim} values")
    acov = AcovMatrix(np.array(rows, dtype=float).reshape(dim, dim), n=n, mode=None)
    return acov.check()
