"""Varimax rotation and standard errors of rotated loadings.

The raw varimax criterion of a p-by-k loading matrix Y is

    V(Y) = sum_r [ (1/p) sum_i y_ir^4 - ((1/p) sum_i y_ir^2)^2 ],

the summed variance of the squared loadings in each column. It is maximized
over orthogonal R by cycling through column pairs and rotating each pair by
the angle that maximizes V in that plane (Kaiser's closed form). With
``normalize=True`` the rows are scaled to unit communality first and scaled
back afterwards.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import InvalidInput, NotConverged, SingularSystem
from .extraction import FactorSolution
from .jacobians import sandwich, _se
from .sigma_cov import AcovMatrix

MAX_SWEEPS = 1000
STATIONARITY_TOL = 1e-9
FD_STEP = 1e-6
HESSIAN_STEP = 1e-4
HESSIAN_RTOL = 1e-8


@dataclass(frozen=True)
class RotatedSolution:
    """Rotated loadings ``rotated = loadings @ rotation``.

    ``criterion`` is the varimax value at the optimum (on the row-normalized
    matrix when ``normalized``); ``se`` holds standard errors when computed.
    """

    rotated: np.ndarray
    rotation: np.ndarray
    criterion: float
    normalized: bool = False
    sweeps: int = 0
    se: Optional[np.ndarray] = None


def varimax_criterion(y) -> float:
    y2 = np.asarray(y, dtype=float) ** 2
    return float((y2**2).mean(axis=0).sum() - (y2.mean(axis=0) ** 2).sum())


def _pair_terms(x, y):
    """Kaiser's numerator and denominator for the planar angle of columns x, y."""
    p = x.size
    u = x * x - y * y
    v = 2 * x * y
    a, b = u.sum(), v.sum()
    num = 2 * (u * v).sum() - 2 * a * b / p
    den = (u * u - v * v).sum() - (a * a - b * b) / p
    return num, den


def planar_derivatives(y) -> np.ndarray:
    """dV/dphi at phi = 0 for every column pair (a, b), a < b.

    The planar rotation sends (y_a, y_b) to
    (y_a cos phi + y_b sin phi, -y_a sin phi + y_b cos phi).
    """
    y = np.asarray(y, dtype=float)
    p, k = y.shape
    out = []
    for a in range(k - 1):
        for b in range(a + 1, k):
            num, _ = _pair_terms(y[:, a], y[:, b])
            out.append(num / p)
    return np.array(out)


def _row_scale(lam, normalize):
    if not normalize:
        return np.ones(lam.shape[0])
    h = np.sqrt((lam**2).sum(axis=1))
    if np.any(h == 0):
        raise InvalidInput("cannot row-normalize a loading matrix with a zero row")
    return h


def _cycle(x, r0, max_sweeps=MAX_SWEEPS):
    """Pairwise cycling from rotation ``r0``; returns (R, sweeps)."""
    p, k = x.shape
    r = np.array(r0, dtype=float)
    y = x @ r
    for sweep in range(1, max_sweeps + 1):
        largest = 0.0
        for a in range(k - 1):
            for b in range(a + 1, k):
                num, den = _pair_terms(y[:, a], y[:, b])
                phi = np.arctan2(num, den) / 4
                if phi == 0.0:
                    continue
                largest = max(largest, abs(phi))
                c, s = np.cos(phi), np.sin(phi)
                g = np.array([[c, -s], [s, c]])
                r[:, [a, b]] = r[:, [a, b]] @ g
                y[:, [a, b]] = y[:, [a, b]] @ g
        if largest < 1e-15 or np.abs(planar_derivatives(y)).max() <= STATIONARITY_TOL * 1e-3:
            # re-orthonormalize away accumulated rounding
            u, _, vt = np.linalg.svd(r)
            return u @ vt, sweep
    raise NotConverged(f"varimax did not converge in {max_sweeps} sweeps")


def _convention(y):
    """Column permutation and signs: descending sum of squares, largest-|.| entry positive."""
    order = np.argsort(-(y**2).sum(axis=0), kind="stable")
    y = y[:, order]
    idx = np.argmax(np.abs(y), axis=0)
    signs = np.sign(y[idx, np.arange(y.shape[1])])
    signs[signs == 0] = 1.0
    return order, signs


def varimax(loadings, normalize=False, start=None, reorder=True, max_sweeps=MAX_SWEEPS) -> RotatedSolution:
    """Varimax rotation of ``loadings``.

    Parameters
    ----------
    loadings : (p, k) array or FactorSolution
    normalize : bool
        Kaiser row normalization. Off by default (raw varimax).
    start : (k, k) orthogonal array, optional
        Initial rotation; the identity by default.
    reorder : bool
        Apply the column convention (descending sum of squares, each column's
        largest-magnitude entry positive). Disable to follow a rotation
        continuously from a warm start.
    """
    lam = loadings.loadings if isinstance(loadings, FactorSolution) else np.asarray(loadings, dtype=float)
    if lam.ndim != 2 or lam.shape[1] < 1:
        raise InvalidInput(f"loadings must be a p-by-k array, got shape {lam.shape}")
    p, k = lam.shape
    if k == 1:
        return RotatedSolution(lam.copy(), np.eye(1), varimax_criterion(lam), normalize)
    h = _row_scale(lam, normalize)
    x = lam / h[:, None]
    r0 = np.eye(k) if start is None else np.asarray(start, dtype=float)
    r, sweeps = _cycle(x, r0, max_sweeps)
    if reorder:
        order, signs = _convention(lam @ r)
        r = r[:, order] * signs
    rotated = lam @ r
    return RotatedSolution(rotated, r, varimax_criterion(x @ r), normalize, sweeps)


def criterion_hessian(loadings, rotation, normalize=False, step=HESSIAN_STEP) -> np.ndarray:
    """Hessian of V(X R expm(K)) over the k(k-1)/2 antisymmetric generators K, at K = 0."""
    lam = np.asarray(loadings, dtype=float)
    h = _row_scale(lam, normalize)
    y = (lam / h[:, None]) @ rotation
    k = y.shape[1]
    pairs = [(a, b) for a in range(k - 1) for b in range(a + 1, k)]

    def f(t):
        gen = np.zeros((k, k))
        for (a, b), ti in zip(pairs, t):
            gen[a, b], gen[b, a] = ti, -ti
        return varimax_criterion(y @ scipy.linalg.expm(gen))

    m = len(pairs)
    hess = np.zeros((m, m))
    eye = np.eye(m) * step
    for i in range(m):
        for j in range(i, m):
            val = (
                f(eye[i] + eye[j]) - f(eye[i] - eye[j]) - f(-eye[i] + eye[j]) + f(-eye[i] - eye[j])
            ) / (4 * step * step)
            hess[i, j] = hess[j, i] = val
    return hess


def check_local_uniqueness(loadings, rotation, normalize=False):
    """Raise SingularSystem unless the varimax optimum is a strict local maximum."""
    lam = np.asarray(loadings, dtype=float)
    if lam.shape[1] < 2:
        return
    hess = criterion_hessian(lam, rotation, normalize)
    scale = max(((lam / _row_scale(lam, normalize)[:, None]) ** 4).sum() / lam.shape[0], np.finfo(float).tiny)
    top = np.linalg.eigvalsh(hess)[-1]
    if top > -HESSIAN_RTOL * scale:
        raise SingularSystem(
            f"varimax optimum is not locally unique (largest Hessian eigenvalue {top:.3g})"
        )


def rotation_jacobian(loadings, base: RotatedSolution, step=FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of vec(varimax(Lambda)) w.r.t. vec(Lambda), both by rows.

    Each perturbed matrix is rotated starting from ``base.rotation`` without
    reordering, so the columns follow the base solution continuously.
    """
    lam = np.asarray(loadings, dtype=float)
    p, k = lam.shape
    jac = np.zeros((p * k, p * k))
    for c in range(p * k):
        e = np.zeros(p * k)
        e[c] = step
        e = e.reshape(p, k)
        plus = varimax(lam + e, base.normalized, start=base.rotation, reorder=False).rotated
        minus = varimax(lam - e, base.normalized, start=base.rotation, reorder=False).rotated
        jac[:, c] = (plus - minus).ravel() / (2 * step)
    return jac


def rotated_se(sigma, sol: FactorSolution, loading_jac, acov, normalize=False, rotated: Optional[RotatedSolution] = None):
    """Standard errors of varimax-rotated loadings by the chain J_rot @ M.

    Parameters
    ----------
    sigma : matrix the solution was fitted to (only used for shape checks)
    sol : FactorSolution
    loading_jac : (p*k, p**2) array
        dLambda_v / dSigma_v of the unrotated solution.
    acov : AcovMatrix or (p**2, p**2) array
    normalize : bool
        Kaiser normalization, ignored when ``rotated`` is given.
    rotated : RotatedSolution, optional
        Precomputed rotation of ``sol``.

    Returns
    -------
    (RotatedSolution with ``se`` filled, acov of the rotated loadings)
    """
    lam = sol.loadings
    p, k = lam.shape
    entries = acov.entries if isinstance(acov, AcovMatrix) else np.asarray(acov, dtype=float)
    loading_jac = np.asarray(loading_jac, dtype=float)
    if loading_jac.shape != (p * k, p * p) or entries.shape != (p * p, p * p):
        raise InvalidInput("loading Jacobian / acov shapes do not match the solution")
    if np.asarray(sigma).shape != (p, p) and not hasattr(sigma, "entries"):
        raise InvalidInput("sigma does not match the solution")
    base = rotated if rotated is not None else varimax(lam, normalize)
    if k == 1:
        jrot = np.eye(p)
    else:
        check_local_uniqueness(lam, base.rotation, base.normalized)
        jrot = rotation_jacobian(lam, base)
    chain = jrot @ loading_jac
    cov = sandwich(chain, entries)
    se = _se(cov, "rotated loadings").reshape(p, k)
    return RotatedSolution(base.rotated, base.rotation, base.criterion, base.normalized, base.sweeps, se), cov
