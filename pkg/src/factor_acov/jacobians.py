"""Delta-method Jacobians and standard errors for unrotated factor solutions.

For each method the fixed-point equations of the extraction are
differentiated implicitly, giving a linear system ``lhs @ dLambda_v = rhs @
dSigma_v``. Rows are indexed by loading (i, r) at ``i*k + r`` and columns of
``rhs`` by covariance entry (x, y) at ``x*p + y``; (x, y) and (y, x) are
separate columns, as in :mod:`factor_acov.linalg_core`.

Because an off-diagonal covariance appears twice in the vectorization, the
derivative with respect to a *symmetric* change of sigma_xy is carried by the
sum of columns (x, y) and (y, x). Use :func:`symmetrize_columns` before
comparing with finite differences.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    CommunalityCollapse,
    InternalContractViolation,
    InvalidInput,
    NumericalBreakdown,
    WrongMode,
)
from .extraction import FactorSolution, _inverse
from .linalg_core import as_array, mode_of, solve_linear
from .sigma_cov import AcovMatrix


@dataclass(frozen=True)
class JacobianSystem:
    """Coefficient matrices and solved Jacobians for one solution.

    ``loading_jac`` is M with dLambda_v = M dSigma_v; ``uniq_jac`` maps
    dSigma_v to dpsi; ``phi`` (image only) gives dtau = phi' dSigma_v.
    ``gauge`` holds identification rows appended to a rank-deficient lhs
    (least-square with k >= 2), else None.
    """

    method: str
    lhs: np.ndarray
    rhs: np.ndarray
    loading_jac: np.ndarray
    uniq_jac: np.ndarray
    phi: Optional[np.ndarray] = None
    gauge: Optional[np.ndarray] = None

    @property
    def M(self):
        return self.loading_jac


@dataclass(frozen=True)
class SeReport:
    acov_loadings: np.ndarray
    acov_uniq: np.ndarray
    se_loadings: np.ndarray
    se_uniq: np.ndarray
    se_tau: Optional[float] = None
    acov_tau: Optional[float] = None


def symmetrize_columns(jac, p):
    """Average columns (x, y) and (y, x) of a p**2-column Jacobian."""
    jac = np.asarray(jac)
    swap = np.arange(p * p).reshape(p, p).T.reshape(-1)
    return (jac + jac[..., swap]) / 2


def _check_solution(sol, method_family):
    if sol.method not in method_family:
        raise InvalidInput(f"solution from {sol.method!r} cannot use this system")
    if not sol.converged:
        raise InvalidInput("Jacobians are only defined at a converged fixed point")


def build_pfa_system(sigma, sol: FactorSolution):
    """Coefficients A (pk x pk) and B (pk x p**2) with A dLambda_v = B dSigma_v.

    Valid for the converged fixed point shared by IPCFA and PFA (and the
    least-square solution computed by the same iteration).
    """
    _check_solution(sol, ("ipcfa", "pfa", "least_square"))
    s = as_array(sigma)
    lam = sol.loadings
    p, k = lam.shape
    theta = sol.eigenvalues
    h2 = (lam**2).sum(axis=1)
    a = np.zeros((p * k, p * k))
    b = np.zeros((p * k, p * p))
    for i in range(p):
        for r in range(k):
            row = i * k + r
            for t in range(k):
                if t == r:
                    a[row, i * k + t] = h2[i] - theta[r]
                else:
                    a[row, i * k + t] = 2 * lam[i, r] * lam[i, t]
            for j in range(p):
                if j != i:
                    a[row, j * k + r] = s[i, j] - 2 * lam[i, r] * lam[j, r]
                    b[row, i * p + j] = -lam[j, r]
    return a, b


def build_ls_system(sigma, sol: FactorSolution):
    """Coefficients C (pk x p**2) and D (pk x pk) with C dSigma_v = D dLambda_v.

    D is the Hessian of half the least-square criterion, so it is symmetric
    and, for k >= 2, singular along the rotations Lambda -> Lambda K.
    """
    _check_solution(sol, ("least_square", "ipcfa", "pfa"))
    s = as_array(sigma)
    lam = sol.loadings
    p, k = lam.shape
    gram = lam @ lam.T
    col_cross = lam.T @ lam  # sum_z lambda_zr lambda_zt
    c = np.zeros((p * k, p * p))
    d = np.zeros((p * k, p * k))
    for i in range(p):
        for r in range(k):
            row = i * k + r
            for t in range(k):
                d[row, i * k + t] = col_cross[r, t] - lam[i, r] * lam[i, t]
            for j in range(p):
                if j == i:
                    continue
                c[row, i * p + j] = lam[j, r]
                for t in range(k):
                    if t == r:
                        d[row, j * k + t] = -s[i, j] + lam[i, r] * lam[j, r] + gram[i, j]
                    else:
                        d[row, j * k + t] = lam[j, r] * lam[i, t]
    return c, d


def _rotation_gauge(lam):
    """Rows fixing the orientation of Lambda (Lambda' Lambda stays diagonal) and the null directions Lambda K."""
    p, k = lam.shape
    pairs = [(r, t) for r in range(k) for t in range(r + 1, k)]
    g = np.zeros((len(pairs), p * k))
    null = np.zeros((p * k, len(pairs)))
    for q, (r, t) in enumerate(pairs):
        for j in range(p):
            g[q, j * k + r] = lam[j, t]
            g[q, j * k + t] = lam[j, r]
            null[j * k + t, q] = lam[j, r]
            null[j * k + r, q] = -lam[j, t]
    return g, null


def build_alpha_system(sigma, sol: FactorSolution):
    """Coefficients E, F, G, J with dGamma_v = E dLambda_v and F dSigma_v = G dGamma_v + J dLambda_v."""
    _check_solution(sol, ("alpha",))
    if sol.gamma is None:
        raise InternalContractViolation("alpha solution is missing gamma")
    s = as_array(sigma)
    lam, gam = sol.loadings, sol.gamma
    h = sol.communalities
    if np.any(h <= 0):
        raise CommunalityCollapse("alpha Jacobian needs strictly positive communalities")
    p, k = lam.shape
    e = np.zeros((p * k, p * k))
    f = np.zeros((p * k, p * p))
    g = np.zeros((p * k, p * k))
    jm = np.zeros((p * k, p * k))
    lg = (lam * gam).sum(axis=0)
    for i in range(p):
        for r in range(k):
            row = i * k + r
            for t in range(k):
                e[row, i * k + t] = ((r == t) - 2 * gam[i, r] * lam[i, t]) / h[i]
                if t != r:
                    jm[row, i * k + t] = -2 * gam[i, r] * lam[i, t]
            g[row, row] = lam[i, r] ** 2 - h[i]
            jm[row, row] = lg[r] - lam[i, r] * gam[i, r]
            for j in range(p):
                if j == i:
                    continue
                f[row, i * p + j] = gam[j, r]
                g[row, j * k + r] = lam[i, r] * lam[j, r] - s[i, j]
                jm[row, j * k + r] = lam[i, r] * gam[j, r]
    return e, f, g, jm


def build_image_system(sigma, sol: FactorSolution):
    """Coefficients L, P, pi, mu, eta with L dSigma_v = P dLambda_v + pi dtau and dtau = mu' dSigma_v + eta' dLambda_v."""
    _check_solution(sol, ("image",))
    s = as_array(sigma)
    sinv = _inverse(s)
    lam, tau = sol.loadings, sol.tau
    p, k = lam.shape
    sii = np.diag(sinv)
    h = (lam**2).sum(axis=1)
    ss = (1.0 / sii) @ (1.0 / sii)
    # dinv[i, x, y] = sigma^ix sigma^iy / (sigma^ii)^2 = d(1/sigma^ii)/d sigma_xy
    dinv = np.einsum("ix,iy->ixy", sinv, sinv) / (sii**2)[:, None, None]
    weights = np.diag(s) - h - 2 * tau / sii
    mu = (np.diag(1.0 / sii) + np.einsum("i,ixy->xy", weights, dinv)) / ss
    mu = mu.reshape(-1)
    eta = (-2 * lam / (sii[:, None] * ss)).reshape(-1)
    pi = (lam / sii[:, None]).reshape(-1)
    col_ss = (lam**2).sum(axis=0)
    l_mat = np.zeros((p * k, p * p))
    p_mat = np.zeros((p * k, p * k))
    for i in range(p):
        for r in range(k):
            row = i * k + r
            l_mat[row] = (-tau * lam[i, r] * dinv[i]).reshape(-1)
            l_mat[row, i * p:(i + 1) * p] += lam[:, r]
            p_mat[row, row] = 2 * lam[i, r] ** 2 - s[i, i] + tau / sii[i] + col_ss[r]
            for j in range(p):
                if j != i:
                    p_mat[row, j * k + r] = 2 * lam[i, r] * lam[j, r] - s[i, j]
    return l_mat, p_mat, pi, mu, eta


def uniqueness_jacobian(sigma, sol: FactorSolution, loading_jac, phi=None, mode=None):
    """p x p**2 Jacobian of the uniquenesses.

    Covariance mode: T + Z M, from psi_i = sigma_ii - sum_t lambda_it^2.
    Correlation mode: Z M (sigma_ii is fixed at one).
    Image: Q, from psi_i = tau / sigma^ii, which needs ``phi``.
    """
    s = as_array(sigma)
    mode = mode or mode_of(sigma)
    p = s.shape[0]
    if sol.method == "image":
        if phi is None:
            raise InternalContractViolation("image uniqueness Jacobian needs phi")
        sinv = _inverse(s)
        sii = np.diag(sinv)
        q = (sii[:, None] * np.asarray(phi)[None, :]
             + sol.tau * np.einsum("ix,iy->ixy", sinv, sinv).reshape(p, p * p)) / (sii**2)[:, None]
        return q
    lam = sol.loadings
    k = lam.shape[1]
    z = np.zeros((p, p * k))
    for i in range(p):
        z[i, i * k:(i + 1) * k] = -2 * lam[i]
    u = z @ np.asarray(loading_jac).reshape(p * k, p * p)
    if mode == "covariance":
        u[np.arange(p), np.arange(p) * (p + 1)] += 1.0
    return u


def loading_jacobian(sigma, sol: FactorSolution) -> JacobianSystem:
    """Solve the method's implicit system for M (and phi for image)."""
    s = as_array(sigma)
    mode = mode_of(sigma)
    if sol.loadings.shape[0] != s.shape[0]:
        raise InvalidInput("solution and matrix have different orders")
    method = sol.method
    phi = None
    gauge = None
    if method in ("ipcfa", "pfa"):
        lhs, rhs = build_pfa_system(s, sol)
        m = solve_linear(lhs, rhs)
    elif method == "least_square":
        rhs, lhs = build_ls_system(s, sol)
        g, null = _rotation_gauge(sol.loadings)
        if g.shape[0] == 0:
            m = solve_linear(lhs, rhs)
        else:
            q = g.shape[0]
            bordered = np.block([[lhs, null], [g, np.zeros((q, q))]])
            sol_b = solve_linear(bordered, np.vstack([rhs, np.zeros((q, rhs.shape[1]))]))
            m = sol_b[: lhs.shape[0]]
            gauge = g
    elif method == "alpha":
        e, f, g_mat, jm = build_alpha_system(s, sol)
        lhs, rhs = g_mat @ e + jm, f
        m = solve_linear(lhs, rhs)
    elif method == "image":
        l_mat, p_mat, pi, mu, eta = build_image_system(s, sol)
        lhs, rhs = p_mat + np.outer(pi, eta), l_mat - np.outer(pi, mu)
        m = solve_linear(lhs, rhs)
        phi = mu + eta @ m
    else:
        raise InvalidInput(f"unknown method {method!r}")
    u = uniqueness_jacobian(s, sol, m, phi=phi, mode=mode)
    return JacobianSystem(method, lhs, rhs, m, u, phi=phi, gauge=gauge)


def sandwich(jac, acov):
    """jac @ acov @ jac', symmetrized."""
    out = jac @ acov @ jac.T
    return (out + out.T) / 2


def _se(cov, what):
    d = np.diag(cov).copy()
    if np.any(d < -1e-12):
        raise NumericalBreakdown(f"negative asymptotic variance for {what} ({d.min():.3g})")
    return np.sqrt(np.clip(d, 0.0, None))


def assemble_se(sigma, sol: FactorSolution, acov: AcovMatrix, system: Optional[JacobianSystem] = None) -> SeReport:
    """Asymptotic covariances and standard errors of loadings, uniquenesses and (image) tau."""
    s = as_array(sigma)
    p, k = sol.loadings.shape
    entries = acov.entries if isinstance(acov, AcovMatrix) else np.asarray(acov, dtype=float)
    if entries.shape != (p * p, p * p):
        raise InvalidInput(f"acov must be {p * p} x {p * p}, got {entries.shape}")
    acov_mode = getattr(acov, "mode", None)
    if acov_mode is not None and acov_mode != mode_of(sigma):
        raise WrongMode(f"{acov_mode} acov used with a {mode_of(sigma)} matrix")
    if system is None:
        system = loading_jacobian(sigma, sol)
    cov_l = sandwich(system.loading_jac, entries)
    cov_u = sandwich(system.uniq_jac, entries)
    se_l = _se(cov_l, "loadings").reshape(p, k)
    se_u = _se(cov_u, "uniquenesses")
    se_tau = var_tau = None
    if system.phi is not None:
        var_tau = float(system.phi @ entries @ system.phi)
        se_tau = float(_se(np.array([[var_tau]]), "tau")[0])
    return SeReport(cov_l, cov_u, se_l, se_u, se_tau, var_tau)
