import numpy as np
import pytest

from factor_acov.errors import InvalidInput, WrongMode
from factor_acov.linalg_core import SymmetricMatrix
from factor_acov.sigma_cov import (
    AcovMatrix,
    acov_sample_correlations,
    acov_sample_covariances,
    load_external_acov,
    write_acov,
)
from oracles import monte_carlo_cov_of_moments

MC_REPS = 200_000


def idx(p, i, j):
    return i * p + j


def random_cov(rng, p):
    x = rng.normal(size=(p, p))
    return x @ x.T / p + np.diag(rng.uniform(0.5, 1.5, size=p))


def random_corr(rng, p):
    return SymmetricMatrix(random_cov(rng, p), symmetrize=True).to_correlation()


def test_single_variable_covariance():
    a = acov_sample_covariances(SymmetricMatrix(np.array([[2.0]])), 100)
    assert a.entries[0, 0] == pytest.approx(0.08)


def test_diagonal_sigma_independent_pairs():
    a = acov_sample_covariances(SymmetricMatrix(np.diag([1.0, 2.0, 3.0, 4.0])), 50)
    assert a.entries[idx(4, 0, 1), idx(4, 2, 3)] == 0.0
    assert a.entries[idx(4, 0, 1), idx(4, 0, 1)] == pytest.approx(2.0 / 50)


def test_correlation_two_variable_reductions():
    a = acov_sample_correlations(SymmetricMatrix(np.eye(2), "correlation"), 100)
    assert a.entries[1, 1] == pytest.approx(0.01)
    r = SymmetricMatrix(np.array([[1.0, 0.5], [0.5, 1.0]]), "correlation")
    a = acov_sample_correlations(r, 100)
    assert a.entries[1, 1] == pytest.approx(0.005625, abs=1e-15)


def test_correlation_diagonal_pairs_vanish():
    rng = np.random.default_rng(0)
    a = acov_sample_correlations(random_corr(rng, 4), 30)
    diag = np.arange(4) * 5
    assert np.all(a.entries[diag] == 0) and np.all(a.entries[:, diag] == 0)
    a.check()


@pytest.mark.parametrize("builder", [acov_sample_covariances, acov_sample_correlations])
def test_exchange_symmetry_and_psd(builder):
    rng = np.random.default_rng(1)
    p = 4
    s = random_cov(rng, p) if builder is acov_sample_covariances else random_corr(rng, p)
    a = builder(s, 40).entries.reshape(p, p, p, p)
    assert np.allclose(a, a.transpose(1, 0, 2, 3), atol=1e-15, rtol=0)
    assert np.allclose(a, a.transpose(0, 1, 3, 2), atol=1e-15, rtol=0)
    assert np.allclose(a, a.transpose(2, 3, 0, 1), atol=1e-15, rtol=0)
    builder(s, 40).check()


def test_covariance_scales_as_one_over_n():
    s = random_cov(np.random.default_rng(2), 3)
    assert np.allclose(acov_sample_covariances(s, 10).entries, 5 * acov_sample_covariances(s, 50).entries,
                       rtol=1e-15, atol=0)


def test_correlation_invariant_to_rescaling():
    rng = np.random.default_rng(3)
    cov = random_cov(rng, 3)
    scale = np.diag([0.5, 2.0, 7.0])
    r1 = SymmetricMatrix(cov).to_correlation()
    r2 = SymmetricMatrix(scale @ cov @ scale, symmetrize=True).to_correlation()
    a1 = acov_sample_correlations(r1, 100).entries
    a2 = acov_sample_correlations(r2, 100).entries
    assert np.allclose(a1, a2, atol=1e-14, rtol=0)


def test_mode_checks():
    with pytest.raises(WrongMode):
        acov_sample_covariances(SymmetricMatrix(np.eye(2), "correlation"), 10)
    with pytest.raises(WrongMode):
        acov_sample_correlations(SymmetricMatrix(np.eye(2)), 10)
    with pytest.raises(InvalidInput):
        acov_sample_covariances(np.eye(2), 1)


def test_external_round_trip(tmp_path):
    a = acov_sample_correlations(random_corr(np.random.default_rng(4), 3), 211)
    write_acov(tmp_path / "a.txt", a)
    b = load_external_acov(tmp_path / "a.txt")
    assert np.abs(a.entries - b.entries).max() <= 1e-12
    assert b.mode is None


def test_external_zero_is_valid(tmp_path):
    (tmp_path / "z.txt").write_text("4\n" + "0 0 0 0\n" * 4)
    assert np.all(load_external_acov(tmp_path / "z.txt").entries == 0)


def test_external_rejects_asymmetry_and_bad_dims(tmp_path):
    rows = np.eye(4)
    rows[0, 1] = 0.5
    (tmp_path / "a.txt").write_text("4\n" + "\n".join(" ".join(map(str, r)) for r in rows))
    with pytest.raises(InvalidInput):
        load_external_acov(tmp_path / "a.txt")
    (tmp_path / "b.txt").write_text("3\n1 0 0\n0 1 0\n0 0 1\n")
    with pytest.raises(InvalidInput):
        load_external_acov(tmp_path / "b.txt")
    with pytest.raises(InvalidInput):
        AcovMatrix(np.ones((2, 3)))


def _within_mc(analytic, empirical, se, nsig=3.0):
    """Entrywise |analytic - empirical| <= nsig MC standard errors (plus roundoff slack)."""
    return np.abs(analytic - empirical) <= nsig * se + 1e-12


@pytest.mark.slow
def test_covariances_match_monte_carlo():
    rng = np.random.default_rng(20240611)
    sigma = random_cov(rng, 3)
    n = 500
    emp, se = monte_carlo_cov_of_moments(sigma, n, MC_REPS, rng)
    ok = _within_mc(acov_sample_covariances(sigma, n).entries, emp, se)
    assert ok.all(), f"{(~ok).sum()} entries outside 3 MC SE"


@pytest.mark.slow
def test_correlations_match_monte_carlo():
    rng = np.random.default_rng(20240612)
    r = random_corr(rng, 3)
    n = 500
    emp, se = monte_carlo_cov_of_moments(r.entries, n, MC_REPS, rng, correlation=True)
    ok = _within_mc(acov_sample_correlations(r, n).entries, emp, se)
    assert ok.all(), f"{(~ok).sum()} entries outside 3 MC SE"
