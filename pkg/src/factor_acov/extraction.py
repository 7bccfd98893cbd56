"""Fitting IPCFA, PFA, least-square, alpha and image factor solutions.

Every fitter iterates to a fixed point and then certifies it: the defining
stationarity equations of the method are evaluated at the returned
solution and must hold to ``STATIONARITY_TOL``. The derivative formulas in
:mod:`factor_acov.jacobians` differentiate exactly those equations, so a
solution that fails the certificate is never returned.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    CommunalityCollapse,
    HeywoodCase,
    ImproperScale,
    InvalidInput,
    NotConverged,
    RankDeficient,
    SingularInput,
    SingularSystem,
)
from .linalg_core import as_array, sign_normalize

METHODS = ("ipcfa", "pfa", "least_square", "alpha", "image")

TOL = 1e-10
MAX_ITER = 5000
STATIONARITY_TOL = 1e-8
EIGEN_GAP_RTOL = 1e-8


@dataclass(frozen=True)
class FactorSolution:
    """Point estimates from one extraction method.

    ``gamma`` (alpha only) holds ``gamma_r = H^-2 lambda_r``; ``tau`` (image
    only) is the scale in ``Psi = tau * (Diag Sigma^-1)^-1``.
    """

    method: str
    loadings: np.ndarray
    uniquenesses: np.ndarray
    eigenvalues: np.ndarray
    communalities: np.ndarray
    iterations: int = 0
    converged: bool = True
    tau: Optional[float] = None
    gamma: Optional[np.ndarray] = None

    @property
    def p(self) -> int:
        return self.loadings.shape[0]

    @property
    def k(self) -> int:
        return self.loadings.shape[1]


def _validate(sigma, k):
    a = as_array(sigma)
    p = a.shape[0]
    if int(k) != k or k < 1:
        raise InvalidInput(f"k must be a positive integer, got {k}")
    if k >= p:
        raise InvalidInput(f"k must be < p (k={k}, p={p})")
    return a, int(k)


def _inverse(a):
    w = np.linalg.eigvalsh(a)
    top = np.abs(w).max()
    if top == 0 or np.abs(w).min() <= 1e-12 * top:
        raise SingularInput("matrix is singular")
    return np.linalg.inv(a)


def smc(sigma) -> np.ndarray:
    """Squared-multiple-correlation communality guesses, ``sigma_ii - 1/sigma^ii``."""
    a = as_array(sigma)
    return np.diag(a) - 1.0 / np.diag(_inverse(a))


def _top_k(m, k):
    """Top-k eigenvalues and unit eigenvectors of a symmetric matrix, plus the (k+1)-th value."""
    w, v = np.linalg.eigh(m)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    theta = w[:k]
    if theta[-1] <= 0:
        raise RankDeficient(f"eigenvalue {k} of the reduced matrix is {theta[-1]:.3g} <= 0")
    nxt = w[k] if k < len(w) else -np.inf
    return theta, sign_normalize(v[:, :k]), nxt


def _check_gaps(theta, nxt):
    """Raise SingularSystem when theta_1..theta_k, theta_{k+1} are not strictly separated.

    Applied at convergence, where a tie makes the loadings not locally
    unique, and at the first step, where a tie makes the iteration path
    depend on an arbitrary choice of eigenvectors.
    """
    vals = np.append(theta, nxt)
    scale = max(abs(vals[0]), np.finfo(float).tiny)
    gaps = -np.diff(vals)
    if np.any(gaps <= EIGEN_GAP_RTOL * scale):
        raise SingularSystem(
            "coincident eigenvalues among the leading factors; loadings are not locally unique"
        )


def _principal_axis(a, k, psi, tol, max_iter):
    diag = np.diag(a)
    for it in range(1, max_iter + 1):
        theta, vecs, nxt = _top_k(a - np.diag(psi), k)
        if it == 1:
            _check_gaps(theta, nxt)
        lam = vecs * np.sqrt(theta)
        new_psi = diag - (lam**2).sum(axis=1)
        delta = np.abs(new_psi - psi).max()
        psi = new_psi
        if delta <= tol:
            return lam, theta, nxt, psi, it
    raise NotConverged(f"principal-axis iteration did not converge in {max_iter} iterations")


def eigen_residual(sigma, solution: FactorSolution) -> float:
    """max |(Sigma - Psi) lambda_r - theta_r lambda_r| with Psi = Diag(uniquenesses)."""
    a = as_array(sigma)
    lam = solution.loadings
    return np.abs((a - np.diag(solution.uniquenesses)) @ lam - lam * solution.eigenvalues).max()


def ls_residual(sigma, loadings) -> float:
    """max over (i, r) of the least-square first-order condition residual.

    Residual (i, r) is ``sum_{z != i} lambda_zr (sigma_iz - sum_t lambda_it lambda_zt)``.
    """
    a = as_array(sigma)
    resid = a - loadings @ loadings.T
    np.fill_diagonal(resid, 0.0)
    return np.abs(resid @ loadings).max()


def _finish_principal(a, k, method, start, tol, max_iter, iterate):
    p = a.shape[0]
    if isinstance(start, str):
        if start == "zeros":
            psi0 = np.zeros(p)
        elif start == "smc":
            psi0 = np.diag(a) - smc(a)
        else:
            raise InvalidInput(f"unknown start {start!r}")
    else:
        psi0 = np.asarray(start, dtype=float)
        if psi0.shape != (p,):
            raise InvalidInput(f"start vector must have length {p}")
    if not iterate:
        theta, vecs, _ = _top_k(a - np.diag(psi0), k)
        lam = vecs * np.sqrt(theta)
        h2 = (lam**2).sum(axis=1)
        return FactorSolution(method, lam, np.diag(a) - h2, theta, h2, 1, False)
    lam, theta, nxt, psi, it = _principal_axis(a, k, psi0, tol, max_iter)
    _check_gaps(theta, nxt)
    h2 = (lam**2).sum(axis=1)
    psi = np.diag(a) - h2
    theta = (lam**2).sum(axis=0)
    sol = FactorSolution(method, lam, psi, theta, h2, it, True)
    if np.any(psi < 0):
        bad = np.flatnonzero(psi < 0) + 1
        raise HeywoodCase(f"negative uniqueness for variable(s) {bad.tolist()}")
    if eigen_residual(a, sol) > STATIONARITY_TOL:
        raise NotConverged("eigen equations not satisfied at the returned solution")
    return sol


def fit_principal(sigma, k, start="smc", iterate=True, tol=TOL, max_iter=MAX_ITER) -> FactorSolution:
    """Iterated principal-axis factoring.

    ``start="zeros"`` gives iterative principal component factor analysis
    (IPCFA), ``start="smc"`` principal factor analysis (PFA). An explicit
    starting uniqueness vector may be passed instead of a name. With
    ``iterate=False`` a single eigen step is taken and the result is flagged
    as not converged.
    """
    a, k = _validate(sigma, k)
    if isinstance(start, str):
        method = "ipcfa" if start == "zeros" else "pfa"
    else:
        method = "pfa"
    return _finish_principal(a, k, method, start, tol, max_iter, iterate)


def fit_least_square(sigma, k, start="smc", tol=TOL, max_iter=MAX_ITER) -> FactorSolution:
    """Least-square (unweighted off-diagonal) factoring.

    Computed by the principal-axis fixed point, whose limit minimizes the sum
    of squared off-diagonal residuals; the first-order conditions are
    checked explicitly before returning.
    """
    a, k = _validate(sigma, k)
    sol = _finish_principal(a, k, "least_square", start, tol, max_iter, True)
    if ls_residual(a, sol.loadings) > STATIONARITY_TOL:
        raise NotConverged("least-square first-order conditions not satisfied")
    return sol


def alpha_residual(sigma, solution: FactorSolution) -> float:
    """max |(Sigma - Psi) gamma_r - (gamma_r' lambda_r) lambda_r|."""
    a = as_array(sigma)
    lam, gam = solution.loadings, solution.gamma
    reduced = a - np.diag(solution.uniquenesses)
    return np.abs(reduced @ gam - lam * (gam * lam).sum(axis=0)).max()


def fit_alpha(sigma, k, start="smc", tol=TOL, max_iter=MAX_ITER) -> FactorSolution:
    """Alpha factoring.

    Iterates communalities h -> diag(Lambda Lambda') where Lambda = H B and B
    holds the top-k eigenvectors of H^-1 (Sigma - Psi) H^-1 scaled to length
    sqrt(theta). ``start`` is "smc" or an explicit uniqueness vector.
    """
    a, k = _validate(sigma, k)
    diag = np.diag(a)
    if isinstance(start, str):
        if start != "smc":
            raise InvalidInput(f"unknown start {start!r}")
        h2 = smc(a)
    else:
        h2 = diag - np.asarray(start, dtype=float)
    off = a - np.diag(diag)
    for it in range(1, max_iter + 1):
        if np.any(h2 <= 1e-8):
            raise CommunalityCollapse("a communality collapsed to zero during alpha iteration")
        h = np.sqrt(h2)
        theta, vecs, nxt = _top_k((off + np.diag(h2)) / np.outer(h, h), k)
        if it == 1:
            _check_gaps(theta, nxt)
        lam = h[:, None] * vecs * np.sqrt(theta)
        new_h2 = (lam**2).sum(axis=1)
        delta = np.abs(new_h2 - h2).max()
        h2 = new_h2
        if delta <= tol:
            break
    else:
        raise NotConverged(f"alpha iteration did not converge in {max_iter} iterations")
    _check_gaps(theta, nxt)
    if np.any(h2 <= 1e-8):
        raise CommunalityCollapse("a communality collapsed to zero during alpha iteration")
    lam = sign_normalize(lam)
    gam = lam / h2[:, None]
    psi = diag - h2
    sol = FactorSolution(
        "alpha", lam, psi, (gam * lam).sum(axis=0), h2, it, True, gamma=gam
    )
    if np.any(psi < 0):
        bad = np.flatnonzero(psi < 0) + 1
        raise HeywoodCase(f"negative uniqueness for variable(s) {bad.tolist()}")
    if alpha_residual(a, sol) > STATIONARITY_TOL:
        raise NotConverged("alpha fixed-point equations not satisfied")
    return sol


def image_scale_residual(sigma, solution: FactorSolution) -> float:
    """Residual of the normal equation tau * <d, d> = <d, diag(Sigma - Lambda Lambda')>, d = diag Delta."""
    a = as_array(sigma)
    d = 1.0 / np.diag(_inverse(a))
    return abs(solution.tau * d @ d - d @ (np.diag(a) - solution.communalities))


def image_eigen_residual(sigma, solution: FactorSolution) -> float:
    a = as_array(sigma)
    d = 1.0 / np.diag(_inverse(a))
    lam = solution.loadings
    return np.abs((a - solution.tau * np.diag(d)) @ lam - lam * solution.eigenvalues).max()


def image_start(a) -> float:
    """Initial scale: one minus the largest squared multiple correlation, kept in (0, 1]."""
    inv_diag = np.diag(_inverse(a))
    tau0 = np.min(1.0 / (np.diag(a) * inv_diag))
    return float(np.clip(tau0, np.finfo(float).eps, 1.0))


def fit_image(sigma, k, tau0=None, tol=TOL, max_iter=MAX_ITER) -> FactorSolution:
    """Principal-factor image analysis, Sigma = Lambda Lambda' + tau Delta.

    Alternates an eigen step on ``Sigma - tau Delta`` with the least-square
    regression of ``diag(Sigma - Lambda Lambda')`` on ``diag Delta``.
    """
    a, k = _validate(sigma, k)
    d = 1.0 / np.diag(_inverse(a))
    dd = d @ d
    diag = np.diag(a)
    tau = image_start(a) if tau0 is None else float(tau0)
    for it in range(1, max_iter + 1):
        theta, vecs, nxt = _top_k(a - tau * np.diag(d), k)
        if it == 1:
            _check_gaps(theta, nxt)
        lam = vecs * np.sqrt(theta)
        h2 = (lam**2).sum(axis=1)
        new_tau = d @ (diag - h2) / dd
        delta = abs(new_tau - tau) * max(d.max(), 1.0)
        tau = new_tau
        if delta <= tol:
            break
    else:
        raise NotConverged(f"image iteration did not converge in {max_iter} iterations")
    _check_gaps(theta, nxt)
    if tau <= 0:
        raise ImproperScale(f"image scale converged to {tau:.4g} <= 0")
    sol = FactorSolution(
        "image", lam, tau * d, (lam**2).sum(axis=0), h2, it, True, tau=float(tau)
    )
    if image_eigen_residual(a, sol) > STATIONARITY_TOL or image_scale_residual(a, sol) > STATIONARITY_TOL:
        raise NotConverged("image fixed-point equations not satisfied")
    return sol


def fit(sigma, k, method, **kwargs) -> FactorSolution:
    """Dispatch on method name."""
    if method in ("ipcfa", "pfa"):
        a, k = _validate(sigma, k)
        start = kwargs.pop("start", "zeros" if method == "ipcfa" else "smc")
        return _finish_principal(
            a, k, method, start, kwargs.pop("tol", TOL), kwargs.pop("max_iter", MAX_ITER),
            kwargs.pop("iterate", True),
        )
    if method == "least_square":
        return fit_least_square(sigma, k, **kwargs)
    if method == "alpha":
        return fit_alpha(sigma, k, **kwargs)
    if method == "image":
        return fit_image(sigma, k, **kwargs)
    raise InvalidInput(f"unknown method {method!r}; expected one of {METHODS}")
