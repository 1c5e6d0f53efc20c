"""GaSP emulator for slow computer models.

The emulator is fitted on design runs ``f(D)`` only and then frozen. Its
conditional mean ``e(theta)`` replaces ``f(theta)`` in the field
likelihood and its conditional covariance ``sigma_f2 K(theta)`` is added to
the discrepancy and noise covariance.

The emulator kernel is the power-exponential family with the same
exponent ``a`` over all ``p + k`` design columns, written in range form
``exp(-sum_l |d_l|**a / psi_l)`` on min/max-scaled columns. In the rho
parametrization this is ``rho_l = exp(-(1/2)**a / psi_l)``. The mean is a
constant fitted by generalized least squares, and ``sigma_f2`` is profiled
out of the marginal likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass
import json
import math

import numpy as np
from scipy import linalg, optimize
from scipy.stats import qmc

from .errors import ConfigError, NumericalError
from .kernel import KernelConfig, assemble_covariance, corr_matrix, factorize
from .likelihood import FieldObservations, mvn_logpdf

SIGMA_F2_FLOOR = 1e-12
LOG_PSI_BOUNDS = (math.log(1e-3), math.log(1e3))
START_HALF_WIDTH = 2.0
N_STARTS = 8


@dataclass(frozen=True)
class EmulatorDesign:
    """Computer-model runs: rows of ``D`` are ``(x_1..x_p, theta_1..theta_k)``."""

    D: np.ndarray
    fD: np.ndarray
    p: int
    k: int

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        fD = np.asarray(self.fD, dtype=float).ravel()
        if D.shape[1] != self.p + self.k:
            raise ConfigError(f"design has {D.shape[1]} columns, expected p + k = {self.p + self.k}")
        if fD.size != D.shape[0]:
            raise ConfigError("one model output per design row is required")
        if D.shape[0] < self.p + self.k + 2:
            raise ConfigError(f"need at least p + k + 2 = {self.p + self.k + 2} design runs")
        if not (np.all(np.isfinite(D)) and np.all(np.isfinite(fD))):
            raise ConfigError("design contains non-finite values")
        if np.unique(D, axis=0).shape[0] != D.shape[0]:
            raise ConfigError("design rows must be distinct")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "fD", fD)

    @property
    def n(self):
        return self.D.shape[0]

    @classmethod
    def from_csv(cls, path) -> "EmulatorDesign":
        """Read columns ``x_1..x_p, theta_1..theta_k, f``."""
        with open(path, newline="") as fh:
            header = [h.strip() for h in fh.readline().split(",")]
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if "f" not in header:
            raise ConfigError(f"{path}: no 'f' column")
        xs = [i for i, h in enumerate(header) if h.startswith("x_")]
        ts = [i for i, h in enumerate(header) if h.startswith("theta_")]
        if len(xs) + len(ts) + 1 != len(header):
            raise ConfigError(f"{path}: unexpected columns {header}")
        return cls(D=data[:, xs + ts], fD=data[:, header.index("f")], p=len(xs), k=len(ts))


def _cross_log_corr(A, B, log_psi, a):
    """(len(A), len(B)) matrix of ``-sum_l |A_l - B_l|**a / psi_l``."""
    inv_psi = np.exp(-np.asarray(log_psi))
    out = np.zeros((A.shape[0], B.shape[0]))
    for l in range(A.shape[1]):
        out -= np.abs(A[:, l, None] - B[None, :, l]) ** a * inv_psi[l]
    return out


def _gls(chol, f):
    """GLS constant mean, profiled variance and quadratic-form pieces."""
    ones = np.ones_like(f)
    Li1 = linalg.solve_triangular(chol, ones, lower=True, check_finite=False)
    Lif = linalg.solve_triangular(chol, f, lower=True, check_finite=False)
    beta = float(Li1 @ Lif) / float(Li1 @ Li1)
    r = Lif - beta * Li1
    sigma_f2 = max(float(r @ r) / f.size, SIGMA_F2_FLOOR)
    return beta, sigma_f2


def profile_log_likelihood(log_psi, Z, f, a) -> float:
    """Constant-mean GaSP marginal log-likelihood with beta and sigma_f2 profiled out."""
    R = np.exp(_cross_log_corr(Z, Z, log_psi, a))
    chol = factorize(R)
    beta, sigma_f2 = _gls(chol, f)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    n = f.size
    return -0.5 * (n * math.log(2.0 * math.pi * sigma_f2) + logdet + n)


@dataclass
class FittedEmulator:
    log_psi: np.ndarray
    beta: float
    sigma_f2: float
    a: float
    lo: np.ndarray
    width: np.ndarray
    design: EmulatorDesign

    def __post_init__(self):
        self.log_psi = np.asarray(self.log_psi, dtype=float)
        self.lo = np.asarray(self.lo, dtype=float)
        self.width = np.asarray(self.width, dtype=float)
        self._Z = self.scale(self.design.D)
        self._chol = factorize(np.exp(_cross_log_corr(self._Z, self._Z, self.log_psi, self.a)))
        self._weights = linalg.cho_solve((self._chol, True), self.design.fD - self.beta,
                                         check_finite=False)

    @property
    def p(self):
        return self.design.p

    @property
    def k(self):
        return self.design.k

    def scale(self, D) -> np.ndarray:
        return (np.asarray(D, dtype=float) - self.lo) / self.width

    def predict(self, D):
        """Conditional mean and conditional correlation at raw-scale rows ``D``."""
        Z = self.scale(np.atleast_2d(D))
        r = np.exp(_cross_log_corr(Z, self._Z, self.log_psi, self.a))
        mean = self.beta + r @ self._weights
        v = linalg.solve_triangular(self._chol, r.T, lower=True, check_finite=False)
        K = np.exp(_cross_log_corr(Z, Z, self.log_psi, self.a)) - v.T @ v
        return mean, 0.5 * (K + K.T)

    def to_json(self) -> dict:
        return {
            "schema": "pipscreen.emulator/1",
            "p": self.p,
            "k": self.k,
            "a": self.a,
            "log_psi": self.log_psi.tolist(),
            "beta": self.beta,
            "sigma_f2": self.sigma_f2,
            "scaling": {"lo": self.lo.tolist(), "width": self.width.tolist()},
            "D": self.design.D.tolist(),
            "fD": self.design.fD.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FittedEmulator":
        if doc.get("schema") != "pipscreen.emulator/1":
            raise ValueError("not an emulator document")
        design = EmulatorDesign(D=np.array(doc["D"]), fD=np.array(doc["fD"]),
                                p=int(doc["p"]), k=int(doc["k"]))
        return cls(log_psi=doc["log_psi"], beta=float(doc["beta"]),
                   sigma_f2=float(doc["sigma_f2"]), a=float(doc["a"]),
                   lo=doc["scaling"]["lo"], width=doc["scaling"]["width"], design=design)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FittedEmulator":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def fit_emulator(design: EmulatorDesign, kernel_config: KernelConfig | None = None,
                 n_starts: int = N_STARTS) -> FittedEmulator:
    """Maximize the profile marginal likelihood over log ranges.

    Starts come from an unscrambled Halton sequence in a box of log ranges
    around the value giving moderate correlations, so fits are
    deterministic. Each start runs L-BFGS-B within
    ``LOG_PSI_BOUNDS``; the best converged optimum wins.
    """
    a = (kernel_config or KernelConfig()).a
    D, f = design.D, design.fD
    lo = D.min(axis=0)
    width = D.max(axis=0) - lo
    width[width == 0.0] = 1.0
    Z = (D - lo) / width
    dim = D.shape[1]
    lb, ub = LOG_PSI_BOUNDS
    # centre the starts where sum_l E|d_l|**a / psi_l is about one, so the
    # correlation matrix is neither the identity nor all ones
    centre = math.log(dim * 2.0 / ((a + 1.0) * (a + 2.0)))
    unit = qmc.Halton(d=dim, scramble=False).random(n_starts + 1)[1:]
    starts = np.clip(centre + START_HALF_WIDTH * (2.0 * unit - 1.0), lb, ub)

    def objective(x):
        try:
            return -profile_log_likelihood(x, Z, f, a)
        except NumericalError:
            return 1e300

    best = None
    for x0 in starts:
        res = optimize.minimize(objective, x0, method="L-BFGS-B", bounds=[(lb, ub)] * dim)
        if np.isfinite(res.fun) and res.fun < 1e300 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise NumericalError("emulator fit failed from every start")
    chol = factorize(np.exp(_cross_log_corr(Z, Z, best.x, a)))
    beta, sigma_f2 = _gls(chol, f)
    return FittedEmulator(log_psi=best.x, beta=beta, sigma_f2=sigma_f2, a=a, lo=lo,
                          width=width, design=design)


def _design_rows(X, theta):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    theta = np.asarray(theta, dtype=float).ravel()
    return np.column_stack([X, np.tile(theta, (X.shape[0], 1))])


def emulator_mean_cov(em: FittedEmulator, X, theta):
    """``e(theta)`` and conditional correlation ``K`` at field rows ``X`` (raw scale)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != em.p or np.size(theta) != em.k:
        raise ValueError(f"emulator expects {em.p} inputs and {em.k} parameters")
    return em.predict(_design_rows(X, theta))


class EmulatorMeanTerm:
    """Mean and extra covariance ``(e(theta), sigma_f2 K(theta))`` for the sampler.

    Field rows share one theta, so the x-part of every cross-correlation and
    the prior correlation among field rows do not depend on theta; both are
    computed once.
    """

    def __init__(self, em: FittedEmulator, X_model):
        self.em = em
        X = np.atleast_2d(np.asarray(X_model, dtype=float))
        p = em.p
        Zx = (X - em.lo[:p]) / em.width[:p]
        self._Dx = em._Z[:, :p]
        self._Dt = em._Z[:, p:]
        self._cross_x = _cross_log_corr(Zx, self._Dx, em.log_psi[:p], em.a)
        self._prior_x = np.exp(_cross_log_corr(Zx, Zx, em.log_psi[:p], em.a))

    def __call__(self, theta):
        em = self.em
        p = em.p
        zt = (np.asarray(theta, dtype=float).ravel() - em.lo[p:]) / em.width[p:]
        log_t = _cross_log_corr(zt[None, :], self._Dt, em.log_psi[p:], em.a)
        r = np.exp(self._cross_x + log_t)
        mean = em.beta + r @ em._weights
        v = linalg.solve_triangular(em._chol, r.T, lower=True, check_finite=False)
        K = self._prior_x - v.T @ v
        return mean, em.sigma_f2 * 0.5 * (K + K.T)


def extended_log_likelihood(data: FieldObservations, em: FittedEmulator, theta, rho,
                            sigma2, sigma02, sigma_f2=None, a: float = 1.9) -> float:
    """log N(y | e(theta), sigma_f2 K + sigma2 R + sigma02 I).

    ``sigma_f2`` defaults to the fitted plug-in value; ``a`` is the
    discrepancy kernel exponent.
    """
    sigma_f2 = em.sigma_f2 if sigma_f2 is None else sigma_f2
    mean, K = emulator_mean_cov(em, data.X_model, theta)
    cov = assemble_covariance(corr_matrix(data.X, rho, a), sigma2, sigma02)
    if sigma_f2 > 0:
        cov = cov + sigma_f2 * K
    return mvn_logpdf(data.y, mean, cov)
