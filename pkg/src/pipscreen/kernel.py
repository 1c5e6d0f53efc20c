"""Separable power-exponential correlation in the rho parametrization.

For one input the correlation between two configurations is

    c(x_i, x_j | rho) = rho ** (2**a * |x_i - x_j|**a),

with ``rho`` in (0, 1]; ``rho == 1`` makes the input inert. Inputs are
assumed to be scaled to [0, 1] before they reach this module.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import NumericalError
from ._fallback import cholesky_jittered


@dataclass(frozen=True)
class KernelConfig:
    """Power-exponential exponent ``a``, fixed for an analysis."""

    a: float = 1.9

    def __post_init__(self):
        _check_exponent(self.a)


def _check_exponent(a):
    if not (0.0 < a <= 2.0):
        raise ValueError(f"kernel exponent a must lie in (0, 2], got {a}")


def _check_rho(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(~np.isfinite(rho)) or np.any(rho <= 0.0) or np.any(rho > 1.0):
        raise ValueError("rho values must lie in (0, 1]")
    return rho


def check_design(X):
    """Return ``X`` as a 2-D float array after checking it lies in [0, 1]."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError("design must be an n x p matrix with n, p >= 1")
    if np.any(~np.isfinite(X)) or X.min() < 0.0 or X.max() > 1.0:
        raise ValueError("design entries must lie in [0, 1]")
    return X


def corr1d(xi: float, xj: float, rho: float, a: float) -> float:
    """Correlation contributed by a single input."""
    _check_exponent(a)
    if not (0.0 < rho <= 1.0):
        raise ValueError("rho must lie in (0, 1]")
    return rho ** (2.0**a * abs(xi - xj) ** a)


def scaled_distances(X, a: float) -> np.ndarray:
    """Per-input exponents ``2**a |x_li - x_lj|**a`` for every pair i < j.

    Returned packed as an (n(n-1)/2, p) array in row-major pair order. They
    depend only on the design, so samplers compute them once.
    """
    _check_exponent(a)
    X = np.asarray(X, dtype=float)
    i, j = np.triu_indices(X.shape[0], 1)
    return np.ascontiguousarray(2.0**a * np.abs(X[i] - X[j]) ** a)


def corr_from_distances(dist, log_rho, n: int) -> np.ndarray:
    """n x n correlation matrix from packed distances and ``log(rho)``."""
    return _backend.corr_matrix(
        np.ascontiguousarray(dist, dtype=float),
        np.ascontiguousarray(log_rho, dtype=float),
        int(n),
    )


def corr_matrix(X, rho, a: float) -> np.ndarray:
    """Separable correlation matrix R for design ``X`` and range vector ``rho``."""
    X = check_design(X)
    rho = _check_rho(np.atleast_1d(rho))
    if rho.shape != (X.shape[1],):
        raise ValueError(
            f"rho has length {rho.size} but the design has {X.shape[1]} inputs")
    return corr_from_distances(scaled_distances(X, a), np.log(rho), X.shape[0])


def assemble_covariance(R, sigma2: float, sigma02: float) -> np.ndarray:
    """Sigma = sigma2 * R + sigma02 * I."""
    if not (sigma2 > 0.0 and sigma02 > 0.0):
        raise ValueError("variances must be strictly positive")
    R = np.asarray(R, dtype=float)
    cov = sigma2 * R
    cov[np.diag_indices_from(cov)] += sigma02
    return cov


def factorize(cov) -> np.ndarray:
    """Lower Cholesky factor under the jitter policy.

    Jitter of ``1e-10 * trace/n`` is added on failure and escalated by
    factors of ten up to ``1e-6 * trace/n``.
    """
    try:
        return cholesky_jittered(np.asarray(cov, dtype=float))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(str(exc)) from exc


def psi_to_rho(psi, a: float):
    """Map a power-exponential range ``psi`` to ``rho = exp(-(1/2)**a / psi)``."""
    return np.exp(-(0.5**a) / np.asarray(psi, dtype=float))


def rho_to_psi(rho, a: float):
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        return -(0.5**a) / np.log(rho)


BACKEND = _backend.BACKEND
