"""Gaussian log-densities for field observations."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol, runtime_checkable

import numpy as np
from scipy import linalg

from . import _backend
from .errors import NumericalError
from .kernel import assemble_covariance, check_design, corr_matrix, factorize, scaled_distances

LOG_2PI = np.log(2.0 * np.pi)


@runtime_checkable
class ComputerModel(Protocol):
    """Vectorized computer model ``f(X, theta) -> (n,)``.

    ``X`` holds model-scale inputs, one configuration per row. Providers
    declare ``thread_safe``; single-threaded models are evaluated serially.
    """

    thread_safe: bool

    def __call__(self, X: np.ndarray, theta: np.ndarray) -> np.ndarray: ...


class PointwiseModel:
    """Adapt a scalar ``f(x, theta) -> float`` to the vectorized interface."""

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray], float], thread_safe=False):
        self.fn = fn
        self.thread_safe = thread_safe

    def __call__(self, X, theta):
        theta = np.asarray(theta, dtype=float)
        return np.array([float(self.fn(row, theta)) for row in np.asarray(X, dtype=float)])


class ZeroModel:
    """``f == 0``: plain GaSP regression of y on the inputs."""

    thread_safe = True

    def __call__(self, X, theta):
        return np.zeros(len(X))


@dataclass(frozen=True)
class FieldObservations:
    """Field data ``y`` observed at design rows ``X``.

    ``X`` is the [0, 1]-scaled design seen by the kernel. ``X_model`` holds
    the same rows on the scale the computer model expects; it defaults to
    ``X`` when the data are already on the unit cube.
    """

    X: np.ndarray
    y: np.ndarray
    X_model: np.ndarray = field(default=None)

    def __post_init__(self):
        X = check_design(self.X)
        y = np.asarray(self.y, dtype=float).ravel()
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"y has {y.size} entries but X has {X.shape[0]} rows")
        Xm = X if self.X_model is None else np.asarray(self.X_model, dtype=float)
        if Xm.shape[0] != X.shape[0]:
            raise ValueError("X_model and X must have the same number of rows")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X_model", Xm)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]


def mvn_logpdf(y, mean, cov) -> float:
    """Log density of N(mean, cov) at ``y`` via a Cholesky factorization."""
    y = np.asarray(y, dtype=float).ravel()
    mean = np.asarray(mean, dtype=float).ravel()
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    n = y.size
    if mean.size != n or cov.shape != (n, n):
        raise ValueError("dimension mismatch between y, mean and cov")
    chol = factorize(cov)
    z = linalg.solve_triangular(chol, y - mean, lower=True, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(-0.5 * (n * LOG_2PI + logdet + z @ z))


def evaluate_model(model, X, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float).ravel()
    out = np.asarray(model(X, theta), dtype=float).ravel()
    if out.shape[0] != len(X):
        raise ValueError(f"computer model returned {out.size} values for {len(X)} rows")
    return out


def field_log_likelihood(data: FieldObservations, theta, rho, sigma2, sigma02,
                         model, a: float = 1.9) -> float:
    """log N(y | f(theta), sigma2 R(rho) + sigma02 I)."""
    mean = evaluate_model(model, data.X_model, theta)
    cov = assemble_covariance(corr_matrix(data.X, rho, a), sigma2, sigma02)
    return mvn_logpdf(data.y, mean, cov)


class GaspLikelihood:
    """Repeated evaluation of the discrepancy-GaSP likelihood on one design.

    The per-input distance tensor is computed once; each call assembles
    ``sigma2 R + sigma02 I (+ extra)`` and factorizes it in the selected
    kernel backend.
    """

    def __init__(self, X, a: float = 1.9, backend=None):
        self.X = check_design(X)
        self.a = a
        self.dist = scaled_distances(self.X, a)
        self._impl = _backend.impl if backend is None else _backend.load(backend)

    @property
    def backend(self):
        return self._impl.NAME

    def __call__(self, resid, log_rho, sigma2, sigma02, extra=None) -> float:
        try:
            return self._impl.gasp_loglik(
                self.dist,
                np.ascontiguousarray(log_rho, dtype=float),
                np.ascontiguousarray(resid, dtype=float),
                float(sigma2),
                float(sigma02),
                extra,
            )
        except np.linalg.LinAlgError as exc:
            raise NumericalError(str(exc)) from exc
