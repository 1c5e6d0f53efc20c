import numpy as np
import pytest

from oracles import dense_mvn_logpdf
from pipscreen import _backend, kernel

BACKENDS = _backend.available()


@pytest.fixture(params=BACKENDS)
def impl(request):
    return _backend.load(request.param)


def test_fallback_always_available():
    assert "python" in BACKENDS


@pytest.mark.parametrize("n,p", [(1, 1), (2, 3), (17, 5), (50, 8)])
def test_correlation_matrices_identical(n, p):
    rng = np.random.default_rng(n * 10 + p)
    X = rng.random((n, p))
    dist = kernel.scaled_distances(X, 1.9)
    log_rho = np.log(rng.uniform(0.05, 1.0, p))
    mats = [_backend.load(b).corr_matrix(dist, log_rho, n) for b in BACKENDS]
    for m in mats[1:]:
        np.testing.assert_array_equal(m, mats[0])


def test_loglik_matches_dense_oracle(impl):
    rng = np.random.default_rng(8)
    X = rng.random((20, 4))
    resid = rng.standard_normal(20)
    rho = np.array([0.2, 0.5, 0.99, 1.0])
    dist = kernel.scaled_distances(X, 1.9)
    cov = kernel.assemble_covariance(kernel.corr_matrix(X, rho, 1.9), 0.8, 0.01)
    val = impl.gasp_loglik(dist, np.log(rho), resid, 0.8, 0.01)
    assert val == pytest.approx(dense_mvn_logpdf(resid, 0, cov), abs=1e-8)


def test_jitter_and_failure(impl):
    # two coincident rows with no nugget need jitter; a negative variance cannot be rescued
    X = np.array([[0.2], [0.2], [0.7]])
    dist = kernel.scaled_distances(X, 1.9)
    assert np.isfinite(impl.gasp_loglik(dist, np.log([0.5]), np.array([0.1, 0.1, 0.3]), 1.0, 1e-300))
    with pytest.raises(np.linalg.LinAlgError):
        impl.gasp_loglik(dist, np.log([0.5]), np.zeros(3), -1.0, 1e-3)


def test_shape_checks(impl):
    dist = kernel.scaled_distances(np.random.default_rng(0).random((4, 2)), 1.9)
    with pytest.raises(ValueError):
        impl.corr_matrix(dist, np.zeros(3), 4)
    with pytest.raises(ValueError):
        impl.gasp_loglik(dist, np.zeros(2), np.zeros(5), 1.0, 1.0)
