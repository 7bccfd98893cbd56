"""Acceptance suite: one check per criterion, each reporting PASS/FAIL with its measured margin.

Run with ``pytest tests/test_acceptance.py -v`` (the summary lines are
printed at the end of the session) or directly with
``python tests/test_acceptance.py``.
"""

import functools
import itertools
import time

import numpy as np
import pytest

from factor_acov import extraction
from factor_acov.errors import RankDeficient, SingularSystem
from factor_acov.extraction import fit
from factor_acov.jacobians import assemble_se, loading_jacobian, symmetrize_columns, uniqueness_jacobian
from factor_acov.linalg_core import SymmetricMatrix
from factor_acov.rotation import rotated_se, varimax
from factor_acov.sigma_cov import acov_sample_correlations, acov_sample_covariances
from factor_acov.simulation import run_simulation
from conftest import LM_N, LM_PATH, exact_one_factor
from oracles import exact_image_instance, fd_solution, max_rel_err, monte_carlo_cov_of_moments, random_instance

# ---------------------------------------------------------------------------
# Published reference values: two-factor least-square solution of the
# ability-test correlations, n = 211
# ---------------------------------------------------------------------------

PUB_UNROTATED = np.array([
    [0.6639, 0.3285], [0.6879, 0.2388], [0.4956, 0.2831], [0.8470, -0.3037], [0.7035, -0.3179],
    [0.8037, -0.3581], [0.6686, 0.3889], [0.4236, 0.2552], [0.7718, 0.4398]])
PUB_UNROTATED_SE = np.array([
    [0.0397, 0.0502], [0.0381, 0.0545], [0.0536, 0.0657], [0.0249, 0.0372], [0.0392, 0.0637],
    [0.0297, 0.0659], [0.0440, 0.0654], [0.0609, 0.0813], [0.0347, 0.0598]])
PUB_ROTATED = np.array([
    [0.6745, 0.3063], [0.6202, 0.3815], [0.5328, 0.2047], [0.3007, 0.8481], [0.1990, 0.7459],
    [0.2312, 0.8490], [0.7242, 0.2717], [0.4656, 0.1666], [0.8289, 0.3194]])
PUB_ROTATED_SE = np.array([
    [0.0453, 0.0538], [0.0487, 0.0555], [0.0583, 0.0658], [0.0381, 0.0295], [0.0493, 0.0399],
    [0.0404, 0.0353], [0.0412, 0.0513], [0.0639, 0.0695], [0.0328, 0.0444]])
PUB_UNIQ = np.array([0.4512, 0.4698, 0.6743, 0.1904, 0.4040, 0.2258, 0.4018, 0.7555, 0.2109])
PUB_UNIQ_SE = np.array([0.0557, 0.0539, 0.0599, 0.0412, 0.0551, 0.0526, 0.0546, 0.0578, 0.0443])
PUB_THEORETICAL_SE = np.array([0.0556623, 0.0538818, 0.0598473, 0.0411420, 0.0550669,
                           0.0526150, 0.0546297, 0.0578393, 0.0443326])

ORACLE_INSTANCES = 20
ORACLE_SEED = 20240601
SIMULATION_SEED = 1

RESULTS = {}


def record(key, ok, detail):
    RESULTS[key] = (bool(ok), detail)
    assert ok, f"criterion {key}: {detail}"


def summary_lines():
    return [f"criterion {key:<4} {'PASS' if ok else 'FAIL'}  {detail}" for key, (ok, detail) in RESULTS.items()]


def lm_or_skip():
    if not LM_PATH.exists():
        pytest.skip(f"fixture {LM_PATH.name} not found; published-results reproduction criteria skipped")
    from factor_acov.cli import parse_matrix_file

    return parse_matrix_file(LM_PATH, "correlation")


# ---------------------------------------------------------------------------
# 1 and 2: finite-difference oracle on random instances
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def oracle_run():
    """Worst relative errors per method for M, U and phi, plus elapsed time."""
    rng = np.random.default_rng(ORACLE_SEED)
    worst = {m: {"M": 0.0, "U": 0.0, "phi": 0.0, "count": 0, "shapes": set()} for m in extraction.METHODS}
    start = time.perf_counter()
    for method in extraction.METHODS:
        for i in range(ORACLE_INSTANCES):
            k = 1 + i % 2
            # k = 2 needs p >= 5 for the model to be identified
            p = int(rng.integers(3, 7)) if k == 1 else int(rng.integers(5, 7))
            s, sol = random_instance(rng, p, k, method)
            sys = loading_jacobian(s, sol)
            fd = fd_solution(s, sol)
            w = worst[method]
            w["M"] = max(w["M"], max_rel_err(symmetrize_columns(sys.M, p), fd["loadings"]))
            u = uniqueness_jacobian(s, sol, sys.M, phi=sys.phi, mode="covariance")
            w["U"] = max(w["U"], max_rel_err(symmetrize_columns(u, p), fd["uniquenesses"]))
            if sys.phi is not None:
                w["phi"] = max(w["phi"], max_rel_err(symmetrize_columns(sys.phi, p), fd["tau"]))
            w["count"] += 1
            w["shapes"].add((p, k))
    return worst, time.perf_counter() - start


def test_criterion_1_loading_jacobians():
    worst, elapsed = oracle_run()
    ok = all(w["M"] <= 1e-5 and w["count"] >= 20 for w in worst.values()) and elapsed <= 120
    detail = ", ".join(f"{m} {w['M']:.1e}" for m, w in worst.items())
    record("1", ok, f"max rel err of M (tol 1e-5): {detail}; {ORACLE_INSTANCES} instances/method; {elapsed:.0f}s (limit 120s)")


def test_criterion_2_uniqueness_and_tau_chains():
    worst, _ = oracle_run()
    ok = all(w["U"] <= 1e-5 for w in worst.values()) and worst["image"]["phi"] <= 1e-5
    detail = ", ".join(f"{m} {w['U']:.1e}" for m, w in worst.items())
    record("2", ok, f"max rel err of U (tol 1e-5): {detail}; phi {worst['image']['phi']:.1e}")


# ---------------------------------------------------------------------------
# 3: sample-moment acov against Monte Carlo
# ---------------------------------------------------------------------------


def test_criterion_3_sigma_cov_monte_carlo():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(3, 3))
    cov = x @ x.T / 3 + np.eye(3)
    corr = SymmetricMatrix(cov, symmetrize=True).to_correlation()
    n, reps = 500, 200_000
    worst = 0.0
    for sigma, builder, is_corr in ((cov, acov_sample_covariances, False), (corr, acov_sample_correlations, True)):
        emp, se = monte_carlo_cov_of_moments(np.asarray(getattr(sigma, "entries", sigma)), n, reps, rng, correlation=is_corr)
        analytic = builder(sigma, n).entries
        z = np.abs(analytic - emp) / np.where(se > 0, se, np.inf)
        worst = max(worst, float(z.max()))
    r = SymmetricMatrix(np.array([[1.0, 0.5], [0.5, 1.0]]), "correlation")
    var12 = acov_sample_correlations(r, 100).entries[1, 1]
    ok = worst <= 3.0 and abs(var12 - 0.005625) <= 1e-15
    record("3", ok, f"worst |analytic - MC| = {worst:.2f} MC SE (limit 3); var(r12) = {var12:.6f}")


# ---------------------------------------------------------------------------
# 4 - 6: published tables
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def lm_solution():
    lm = lm_or_skip()
    sol = fit(lm, 2, "least_square")
    sys = loading_jacobian(lm, sol)
    acov = acov_sample_correlations(lm, LM_N)
    se = assemble_se(lm, sol, acov, sys)
    return lm, sol, sys, acov, se


def align_columns(est, ref):
    """Best column permutation and signs of ``est`` against ``ref`` (loadings are sign/order indeterminate)."""
    k = est.shape[1]
    best = None
    for perm in itertools.permutations(range(k)):
        cand = est[:, perm]
        signs = np.sign((cand * ref).sum(axis=0))
        signs[signs == 0] = 1
        cand = cand * signs
        err = np.abs(cand - ref).max()
        if best is None or err < best[0]:
            best = (err, list(perm), signs)
    return best


def test_criterion_4_theoretical_uniqueness_se():
    _, _, _, _, se = lm_solution()
    err = np.abs(se.se_uniq - PUB_THEORETICAL_SE).max()
    worst = int(np.argmax(np.abs(se.se_uniq - PUB_THEORETICAL_SE)))
    record("4", err <= 5e-5, f"max |SE(psi) - published| = {err:.2e} (tol 5e-5); worst X{worst + 1}: "
           f"{se.se_uniq[worst]:.7f} vs {PUB_THEORETICAL_SE[worst]:.7f}")


def test_criterion_5_simulation_consistency():
    lm, *_ = lm_solution()
    start = time.perf_counter()
    rep = run_simulation(lm, LM_N, 2, "least_square", 2000, SIMULATION_SEED)
    elapsed = time.perf_counter() - start
    emp = np.array(rep.empirical_se_uniq)
    rel = np.abs(emp / PUB_THEORETICAL_SE - 1).max()
    record("5", rel <= 0.10 and elapsed <= 300,
           f"max relative gap empirical vs published theoretical = {rel:.3f} (tol 0.10); "
           f"{rep.failures} failed replicates; {elapsed:.0f}s (limit 300s)")


def test_criterion_6a_unrotated_loadings():
    _, sol, *_ = lm_solution()
    err, perm, signs = align_columns(sol.loadings, PUB_UNROTATED)
    record("6a", err <= 5e-4, f"max |unrotated loading - published| = {err:.2e} (tol 5e-4), best column alignment")


def test_criterion_6b_uniquenesses():
    _, sol, *_ = lm_solution()
    err = np.abs(sol.uniquenesses - PUB_UNIQ).max()
    record("6b", err <= 5e-4, f"max |uniqueness - published| = {err:.2e} (tol 5e-4)")


def test_criterion_6c_unrotated_loading_se():
    _, sol, _, _, se = lm_solution()
    _, perm, _ = align_columns(sol.loadings, PUB_UNROTATED)
    err = np.abs(se.se_loadings[:, perm] - PUB_UNROTATED_SE).max()
    record("6c", err <= 5e-4, f"max |SE(unrotated loading) - published| = {err:.2e} (tol 5e-4)")


def test_criterion_6d_uniqueness_se():
    _, _, _, _, se = lm_solution()
    err = np.abs(se.se_uniq - PUB_UNIQ_SE).max()
    record("6d", err <= 5e-4, f"max |SE(uniqueness) - published| = {err:.2e} (tol 5e-4)")


@functools.lru_cache(maxsize=None)
def lm_rotations():
    lm, sol, sys, acov, _ = lm_solution()
    out = {}
    for normalize in (False, True):
        rot, _ = rotated_se(lm, sol, sys.M, acov, normalize=normalize)
        err, perm, signs = align_columns(rot.rotated, PUB_ROTATED)
        out[normalize] = (err, np.abs(rot.se[:, perm] - PUB_ROTATED_SE).max())
    return out


def test_criterion_6e_rotated_loadings():
    rots = lm_rotations()
    best = min(rots, key=lambda nz: rots[nz][0])
    err = rots[best][0]
    record("6e", err <= 5e-4, f"max |rotated loading - published| = {err:.2e} (tol 5e-4) with "
           f"{'normalized' if best else 'raw'} varimax (other: {rots[not best][0]:.2e})")


def test_criterion_6f_rotated_se():
    rots = lm_rotations()
    best = min(rots, key=lambda nz: rots[nz][0])
    err = rots[best][1]
    record("6f", err <= 5e-3, f"max |SE(rotated loading) - published| = {err:.2e} (tol 5e-3), "
           f"{'normalized' if best else 'raw'} varimax")


# ---------------------------------------------------------------------------
# 7 - 9
# ---------------------------------------------------------------------------


def test_criterion_7_exact_model_recovery():
    lam = np.array([0.8, 0.7, 0.6])
    worst = 0.0
    # an exact one-factor matrix whose uniquenesses are also proportional to
    # 1/sigma^ii, so that it is an exact model for image factoring too
    instances = [exact_one_factor(lam).entries, exact_image_instance(lam, 0.8)]
    for s in instances:
        target = np.sqrt(s[0, 1] * s[0, 2] / s[1, 2])
        for method in extraction.METHODS:
            if method == "image" and s is instances[0]:
                continue
            sol = fit(s, 1, method)
            worst = max(worst, abs(abs(sol.loadings[0, 0]) - target))
    record("7", worst <= 1e-7, f"max |lambda_1 - sqrt(s12 s13 / s23)| = {worst:.1e} over all methods (tol 1e-7)")


def test_criterion_8_identity_is_degenerate():
    returned = []
    for p in (3, 4, 5, 6):
        for k in range(1, p):
            for method in extraction.METHODS:
                for mode in ("correlation", "covariance"):
                    s = SymmetricMatrix(np.eye(p), mode)
                    acov = (acov_sample_correlations if mode == "correlation" else acov_sample_covariances)(s, 100)
                    try:
                        sol = fit(s, k, method)
                        assemble_se(s, sol, acov)
                        returned.append((p, k, method, mode))
                    except (SingularSystem, RankDeficient):
                        pass
    record("8", not returned, f"{len(returned)} of the (p, k, method, mode) cases returned SEs"
           + (f": {returned[:3]}" if returned else ""))


def test_criterion_9_determinism():
    lm = LM_PATH.exists() and lm_solution()[0]
    sigma = lm if lm is not False else exact_one_factor((0.8, 0.7, 0.6, 0.5, 0.4))
    k = 2 if lm is not False else 1
    reports = [run_simulation(sigma, 211, k, "least_square", 60, 42, workers=w) for w in (None, 1, 2, 4)]
    same = all(r == reports[0] for r in reports)
    bits = all(
        np.array(r.empirical_se_uniq).tobytes() == np.array(reports[0].empirical_se_uniq).tobytes()
        for r in reports
    )
    record("9", same and bits, "identical SimulationReports for workers = serial, 1, 2, 4")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
