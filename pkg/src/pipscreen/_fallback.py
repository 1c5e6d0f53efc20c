"""Pure numpy versions of the compiled kernels in ``_core.pyx``."""

import numpy as np
from scipy import linalg

NAME = "python"

LOG_2PI = np.log(2.0 * np.pi)
JITTER_LEVELS = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


def corr_matrix(dist, log_rho, n):
    """Separable correlation matrix from packed per-pair, per-input distances."""
    if dist.shape[1] != len(log_rho) or dist.shape[0] != n * (n - 1) // 2:
        raise ValueError("dist, log_rho and n are inconsistent")
    s = np.zeros(dist.shape[0])
    for l in range(dist.shape[1]):
        s += dist[:, l] * log_rho[l]
    out = np.eye(n)
    iu = np.triu_indices(n, 1)
    v = np.exp(s)
    out[iu] = v
    out.T[iu] = v
    return out


def cholesky_jittered(cov):
    """Lower Cholesky factor of ``cov``, escalating diagonal jitter on failure."""
    n = cov.shape[0]
    scale = np.trace(cov) / n
    for level in JITTER_LEVELS:
        work = cov if level == 0.0 else cov + (level * scale) * np.eye(n)
        try:
            return linalg.cholesky(work, lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError(
        "covariance not positive definite after jitter escalation")


def gasp_loglik(dist, log_rho, resid, sigma2, sigma02, extra=None):
    """Log N(resid | 0, sigma2 R + sigma02 I [+ extra])."""
    n = len(resid)
    if dist.shape[0] != n * (n - 1) // 2 or dist.shape[1] != len(log_rho):
        raise ValueError("dimension mismatch in gasp_loglik")
    cov = sigma2 * corr_matrix(dist, log_rho, n)
    cov[np.diag_indices(n)] += sigma02
    if extra is not None:
        cov = cov + extra
    if not np.all(np.isfinite(cov)):
        raise np.linalg.LinAlgError("non-finite covariance")
    chol = cholesky_jittered(cov)
    z = linalg.solve_triangular(chol, resid, lower=True, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (n * LOG_2PI + logdet + z @ z)
