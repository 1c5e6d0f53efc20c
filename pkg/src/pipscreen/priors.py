"""Priors on the discrepancy parameters and the unconstrained reparametrization.

Under the full model every ``rho_l`` has a Uniform(0, 1) slab prior. The
spike used for post-processing is Beta(alpha, 1), concentrated near 1.
Variances use inverse-gamma priors (shape/rate), and calibration parameters
are uniform on bounded boxes.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
from typing import Sequence

import numpy as np
from scipy import special, stats


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of pi(sigma2) pi(sigma02) pi(theta).

    Bounded theta supports and proper inverse-gamma priors keep the prior on
    (sigma2, sigma02, theta) proper, bounded and away from zero variances,
    which is what the spike-to-point-mass limit needs.
    """

    sigma2_shape: float = 3.0
    sigma2_rate: float = 1.0
    sigma02_shape: float = 4.0
    sigma02_rate: float = 0.02
    theta_bounds: tuple = ()

    def __post_init__(self):
        for name in ("sigma2_shape", "sigma2_rate", "sigma02_shape", "sigma02_rate"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and strictly positive, got {v}")
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.theta_bounds)
        for lo, hi in bounds:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"theta bounds must be finite with lower < upper, got {(lo, hi)}")
        object.__setattr__(self, "theta_bounds", bounds)

    @property
    def k(self):
        return len(self.theta_bounds)

    def sigma2_median(self):
        return float(stats.invgamma(self.sigma2_shape, scale=self.sigma2_rate).median())

    def sigma02_median(self):
        return float(stats.invgamma(self.sigma02_shape, scale=self.sigma02_rate).median())


@dataclass(frozen=True)
class SpikeConfig:
    """Shape of the Beta(alpha, 1) spike; one shared value or one per input."""

    alpha: float | tuple = 100.0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if np.any(~np.isfinite(a)) or np.any(a < 1.0):
            raise ValueError("spike alpha must be >= 1")

    def per_input(self, p: int) -> np.ndarray:
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if a.size == 1:
            return np.full(p, a[0])
        if a.size != p:
            raise ValueError(f"got {a.size} spike shapes for {p} inputs")
        return a


@dataclass(frozen=True)
class ModelSpacePrior:
    """Independent Bernoulli(tau_l) prior on inclusion; ``tau=None`` is constant."""

    tau: tuple | None = None

    def __post_init__(self):
        if self.tau is not None:
            t = tuple(float(v) for v in np.atleast_1d(self.tau))
            if any(not (0.0 < v < 1.0) for v in t):
                raise ValueError("prior inclusion probabilities must lie in (0, 1)")
            object.__setattr__(self, "tau", t)

    @property
    def is_constant(self):
        return self.tau is None or all(v == 0.5 for v in self.tau)

    def log_prior(self, gammas: np.ndarray, p: int) -> np.ndarray:
        """Unnormalized log pi(gamma) for integer-coded models."""
        gammas = np.asarray(gammas, dtype=np.int64)
        if self.is_constant:
            return np.zeros(gammas.shape)
        tau = np.asarray(self.tau, dtype=float)
        if tau.size == 1:
            tau = np.full(p, tau[0])
        if tau.size != p:
            raise ValueError(f"got {tau.size} inclusion probabilities for {p} inputs")
        bits = (gammas[..., None] >> np.arange(p)) & 1
        return bits @ np.log(tau) + (1 - bits) @ np.log1p(-tau)


def spike_log_density(rho, alpha):
    """log Beta(rho | alpha, 1) = log(alpha) + (alpha - 1) log(rho)."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0.0) or np.any(rho > 1.0):
        raise ValueError("rho must lie in (0, 1]")
    if np.any(np.asarray(alpha) < 1.0):
        raise ValueError("spike alpha must be >= 1")
    out = np.log(alpha) + (np.asarray(alpha, dtype=float) - 1.0) * np.log(rho)
    return float(out) if out.ndim == 0 else out


def slab_log_density(rho):
    """Uniform(0, 1) slab: 0 inside (0, 1], -inf elsewhere."""
    rho = np.asarray(rho, dtype=float)
    out = np.where((rho > 0.0) & (rho <= 1.0), 0.0, -np.inf)
    return float(out) if out.ndim == 0 else out


def invgamma_log_density(x: float, shape: float, rate: float) -> float:
    if not x > 0.0:
        return -math.inf
    return (shape * math.log(rate) - math.lgamma(shape)
            - (shape + 1.0) * math.log(x) - rate / x)


def log_prior_eta(theta, sigma2, sigma02, spec: PriorSpec) -> float:
    """log pi(theta) + log pi(sigma2) + log pi(sigma02); -inf off the support."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float)) if spec.k else np.empty(0)
    if theta.size != spec.k:
        raise ValueError(f"theta has {theta.size} entries, prior expects {spec.k}")
    total = (invgamma_log_density(sigma2, spec.sigma2_shape, spec.sigma2_rate)
             + invgamma_log_density(sigma02, spec.sigma02_shape, spec.sigma02_rate))
    for t, (lo, hi) in zip(theta, spec.theta_bounds):
        if not (lo <= t <= hi):
            return -math.inf
        total -= math.log(hi - lo)
    return total


@dataclass(frozen=True)
class Params:
    """Constrained parameter values (rho, sigma2, sigma02, theta)."""

    rho: np.ndarray
    sigma2: float
    sigma02: float
    theta: np.ndarray


def _log_sigmoid(u):
    return -np.logaddexp(0.0, -u)


class ParamLayout:
    """Bijection between constrained parameters and an unconstrained vector.

    Order: ``logit(rho_1..p), log(sigma2), log(sigma02), logit of theta``
    rescaled to its bounds. Calibration parameters held fixed are simply
    absent (``k = 0``).
    """

    def __init__(self, p: int, theta_bounds: Sequence = ()):
        self.p = int(p)
        self.theta_bounds = np.asarray(theta_bounds, dtype=float).reshape(-1, 2)
        self.k = self.theta_bounds.shape[0]
        self.dim = self.p + 2 + self.k
        self._lo = self.theta_bounds[:, 0]
        self._width = self.theta_bounds[:, 1] - self.theta_bounds[:, 0]

    def names(self):
        return ([f"rho_{i + 1}" for i in range(self.p)] + ["sigma2", "sigma02"]
                + [f"theta_{i + 1}" for i in range(self.k)])

    def to_unconstrained(self, params: Params):
        """Return ``(u, log_jacobian)``; the Jacobian is that of the inverse map."""
        rho = np.asarray(params.rho, dtype=float)
        theta = np.asarray(params.theta, dtype=float).ravel()
        vals = np.concatenate([rho, [params.sigma2, params.sigma02], theta])
        if np.any(~np.isfinite(vals)):
            raise ValueError("parameters must be finite")
        if rho.shape != (self.p,) or theta.shape != (self.k,):
            raise ValueError("parameter dimensions do not match the layout")
        if np.any(rho <= 0) or np.any(rho >= 1):
            raise ValueError("rho must lie strictly inside (0, 1) to be transformed")
        if params.sigma2 <= 0 or params.sigma02 <= 0:
            raise ValueError("variances must be positive")
        t = (theta - self._lo) / self._width
        if np.any(t <= 0) or np.any(t >= 1):
            raise ValueError("theta must lie strictly inside its bounds")
        u = np.concatenate([special.logit(rho), [math.log(params.sigma2), math.log(params.sigma02)],
                            special.logit(t)])
        return u, self.log_jacobian(u)

    def from_unconstrained(self, u) -> Params:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,) or np.any(~np.isfinite(u)):
            raise ValueError("unconstrained vector must be finite with the layout's dimension")
        p = self.p
        return Params(
            rho=special.expit(u[:p]),
            sigma2=math.exp(u[p]),
            sigma02=math.exp(u[p + 1]),
            theta=self._lo + self._width * special.expit(u[p + 2:]),
        )

    def log_rho(self, u):
        """log(rho) straight from the logit scale, accurate as rho -> 1."""
        return _log_sigmoid(np.asarray(u, dtype=float)[: self.p])

    def log_jacobian(self, u) -> float:
        """log |d from_unconstrained / du|."""
        u = np.asarray(u, dtype=float)
        p = self.p
        logit_part = np.concatenate([u[:p], u[p + 2:]])
        jac = np.sum(_log_sigmoid(logit_part) + _log_sigmoid(-logit_part))
        return float(jac + u[p] + u[p + 1] + np.sum(np.log(self._width)))
