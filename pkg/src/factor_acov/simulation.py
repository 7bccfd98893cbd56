"""Monte Carlo check of the asymptotic standard errors.

Random sample correlation matrices are drawn from the Wishart distribution
with parameters (Sigma, n), each is re-factored, and the standard deviation
of the estimated uniquenesses across replicates is compared with the
delta-method standard errors at Sigma.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from . import extraction
from .errors import InvalidInput, NumericalCondition, UnreliableSimulation
from .jacobians import assemble_se
from .linalg_core import SymmetricMatrix, as_array
from .sigma_cov import acov_sample_correlations

MAX_FAILURE_RATE = 0.20


def _rng(rng_seed):
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def wishart_sample(sigma, n, rng_seed) -> np.ndarray:
    """One draw W ~ Wishart(Sigma, n) by the Bartlett decomposition.

    With Sigma = L L' and A lower triangular, A_ii = sqrt(chi2(n - i)) for
    i = 0..p-1 and A_ij ~ N(0, 1) below the diagonal, W = L A A' L'.
    """
    s = as_array(sigma)
    p = s.shape[0]
    if not n > p - 1:
        raise InvalidInput(f"Wishart degrees of freedom must exceed p - 1 (n={n}, p={p})")
    try:
        chol = np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        raise InvalidInput("Wishart scale matrix must be positive definite") from None
    rng = _rng(rng_seed)
    a = np.zeros((p, p))
    a[np.diag_indices(p)] = np.sqrt(rng.chisquare(n - np.arange(p)))
    rows, cols = np.tril_indices(p, -1)
    a[rows, cols] = rng.standard_normal(rows.size)
    la = chol @ a
    w = la @ la.T
    return (w + w.T) / 2


def wishart_correlation(sigma, n, rng_seed) -> SymmetricMatrix:
    """Draw W ~ Wishart(Sigma, n) and return W/n rescaled to a correlation matrix."""
    w = wishart_sample(sigma, n, rng_seed) / n
    d = np.sqrt(np.diag(w))
    r = w / np.outer(d, d)
    r = (r + r.T) / 2
    np.fill_diagonal(r, 1.0)
    return SymmetricMatrix(r, "correlation")


@dataclass(frozen=True)
class SimulationReport:
    m: int
    n: float
    method: str
    k: int
    empirical_se_uniq: Tuple[float, ...]
    theoretical_se_uniq: Tuple[float, ...]
    failures: int
    seed: int

    def to_json(self, **kw) -> str:
        return json.dumps(asdict(self), **kw)

    @classmethod
    def from_json(cls, text) -> "SimulationReport":
        d = json.loads(text)
        d["empirical_se_uniq"] = tuple(d["empirical_se_uniq"])
        d["theoretical_se_uniq"] = tuple(d["theoretical_se_uniq"])
        return cls(**d)


def _replicate(args):
    """Uniquenesses of one replicate, or None when the fit fails."""
    sigma, n, k, method, seed, index = args
    r = wishart_correlation(sigma, n, np.random.default_rng([seed, index]))
    try:
        sol = extraction.fit(r, k, method)
    except NumericalCondition:
        return None
    return sol.uniquenesses


def _replicates(sigma, n, k, method, seed, indices):
    return [_replicate((sigma, n, k, method, seed, i)) for i in indices]


def run_simulation(sigma, n, k, method, m, seed, workers: Optional[int] = None) -> SimulationReport:
    """Empirical versus delta-method standard errors of the uniquenesses.

    Parameters
    ----------
    sigma : SymmetricMatrix or array
        Population matrix; standardized to a correlation matrix if needed,
        since the replicates are correlation matrices.
    n : Wishart degrees of freedom (the sample size).
    k, method : passed to :func:`factor_acov.extraction.fit`.
    m : number of replicates (>= 2).
    seed : int
        Replicate i uses ``numpy.random.default_rng([seed, i])``, so the
        report does not depend on ``workers``.
    workers : int, optional
        Number of worker processes; serial when None or 1.
    """
    if m < 2:
        raise InvalidInput(f"need at least 2 replicates, got m={m}")
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise InvalidInput(f"seed must be a non-negative integer, got {seed!r}")
    sym = sigma if isinstance(sigma, SymmetricMatrix) else SymmetricMatrix(sigma, "covariance", symmetrize=True)
    sym = sym.to_correlation()
    s = sym.entries
    p = s.shape[0]
    if not n > p:
        raise InvalidInput(f"simulation needs n > p (n={n}, p={p})")

    base = extraction.fit(sym, k, method)
    theory = assemble_se(sym, base, acov_sample_correlations(sym, n)).se_uniq

    arr = np.array(s)
    if workers is None or workers <= 1:
        results = _replicates(arr, n, k, method, int(seed), range(m))
    else:
        chunks = np.array_split(np.arange(m), min(workers * 4, m))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_replicates, arr, n, k, method, int(seed), c.tolist()) for c in chunks]
            results = [psi for f in futures for psi in f.result()]

    ok = [psi for psi in results if psi is not None]
    failures = m - len(ok)
    if failures > MAX_FAILURE_RATE * m or len(ok) < 2:
        raise UnreliableSimulation(f"{failures} of {m} replicates failed")
    empirical = np.std(np.array(ok), axis=0, ddof=1)
    return SimulationReport(
        m=int(m),
        n=n,
        method=method,
        k=int(k),
        empirical_se_uniq=tuple(float(v) for v in empirical),
        theoretical_se_uniq=tuple(float(v) for v in theory),
        failures=int(failures),
        seed=int(seed),
    )
