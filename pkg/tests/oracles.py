"""Independent reference computations used by the tests.

Nothing here calls into :mod:`pipscreen`; each oracle recomputes its
quantity from textbook formulas with plain numpy/scipy.
"""

import math

import numpy as np
from scipy import stats
from scipy.special import logsumexp


def dense_mvn_logpdf(y, mean, cov):
    """log N(y | mean, cov) from an explicit inverse and determinant."""
    r = np.asarray(y, float) - np.asarray(mean, float)
    sign, logdet = np.linalg.slogdet(cov)
    assert sign > 0
    return -0.5 * (len(r) * math.log(2 * math.pi) + logdet + r @ np.linalg.inv(cov) @ r)


def prior_mc_log_marginal(X, y, rho_prior, n_draws, rng, a=1.9, s2=(3.0, 1.0), s02=(4.0, 0.02),
                          chunk=100_000):
    """Plain Monte Carlo over the prior of log m(y | model) with zero mean.

    ``rho_prior[l]`` is ``"uniform"``, ``("beta", alpha)`` or ``"one"`` (input
    removed). Returns (log m, delta-method standard error of log m).
    """
    X = np.asarray(X, float)
    n, p = X.shape
    d = np.abs(X[:, None, :] - X[None, :, :]) ** a * 2.0**a      # (n, n, p)
    logw = []
    for start in range(0, n_draws, chunk):
        m = min(chunk, n_draws - start)
        log_rho = np.zeros((m, p))
        for l, spec in enumerate(rho_prior):
            if spec == "uniform":
                log_rho[:, l] = np.log(rng.random(m))
            elif spec == "one":
                pass
            else:
                _, alpha = spec
                # inverse CDF of Beta(alpha, 1): u ** (1 / alpha)
                log_rho[:, l] = np.log(rng.random(m)) / alpha
        sigma2 = stats.invgamma(s2[0], scale=s2[1]).rvs(m, random_state=rng)
        sigma02 = stats.invgamma(s02[0], scale=s02[1]).rvs(m, random_state=rng)
        R = np.exp(np.einsum("ijl,ml->mij", d, log_rho))
        cov = sigma2[:, None, None] * R + sigma02[:, None, None] * np.eye(n)
        L = np.linalg.cholesky(cov)
        z = np.linalg.solve(L, np.broadcast_to(y, (m, n))[..., None])[..., 0]
        logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
        logw.append(-0.5 * (n * math.log(2 * math.pi) + logdet + (z * z).sum(axis=1)))
    logw = np.concatenate(logw)
    log_m = logsumexp(logw) - math.log(logw.size)
    w = np.exp(logw - logw.max())
    se = w.std(ddof=1) / (w.mean() * math.sqrt(w.size))
    return float(log_m), float(se)
