"""Full-model posterior sampler.

Metropolis-within-Gibbs warmup on the unconstrained scale, then a joint
Gaussian random-walk Metropolis-Hastings run whose proposal covariance is
estimated from the warmup draws. Adaptation only happens between phases
(apart from step-size tuning inside the warmup).

Random streams: replication ``i`` of master seed ``m`` uses
``numpy.random.SeedSequence(m, spawn_key=(i,))``; nested keys extend the
tuple (see :func:`derive_seed`).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import csv
import logging
import math
import warnings

import numpy as np
from scipy import special

from .errors import ConfigError, NumericalError
from .likelihood import FieldObservations, GaspLikelihood, evaluate_model
from .priors import ParamLayout, PriorSpec, invgamma_log_density

log = logging.getLogger(__name__)

MH_ACCEPT_RANGE = (0.1, 0.6)


def derive_seed(master: int, *key: int) -> int:
    """Integer seed for the stream at ``key`` under ``master``."""
    ss = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SamplerConfig:
    seed: int
    n_mwg: int = 5000
    n_mh: int = 10000
    burn_in: int = 0
    thinning: int = 1
    step_size: float = 0.3
    adapt_every: int = 100
    target_accept: float = 0.44
    mh_scale: float | None = None

    def __post_init__(self):
        if self.seed is None:
            raise ConfigError("a sampler seed is mandatory")
        if self.n_mwg < 0 or self.n_mh < 1:
            raise ConfigError("n_mwg must be >= 0 and n_mh >= 1")
        if self.burn_in < 0 or self.burn_in >= self.n_mh:
            raise ConfigError("burn_in must be in [0, n_mh)")
        if self.thinning < 1:
            raise ConfigError("thinning must be >= 1")
        if not self.step_size > 0:
            raise ConfigError("step_size must be positive")
        if self.adapt_every < 1 or not (0 < self.target_accept < 1):
            raise ConfigError("invalid warmup adaptation settings")
        if self.mh_scale is not None and not self.mh_scale > 0:
            raise ConfigError("mh_scale must be positive")


@dataclass
class Trace:
    """Unconstrained-scale draws of one phase; row 0 is the starting point."""

    draws: np.ndarray
    log_target: np.ndarray
    accept_rate: np.ndarray | float
    step_size: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Generic phases
# ---------------------------------------------------------------------------


def _start(init, target):
    x = np.array(init, dtype=float)
    lp = float(target(x))
    if not np.isfinite(lp):
        raise ValueError("initial point has non-finite log target")
    return x, lp


def mwg_phase(init, config: SamplerConfig, target, rng=None, n_iter=None) -> Trace:
    """One-coordinate-at-a-time Gaussian random-walk updates.

    Every ``adapt_every`` sweeps each coordinate's step is doubled when its
    recent acceptance exceeds ``target_accept + 0.1`` and halved below
    ``target_accept - 0.1``.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n_iter = config.n_mwg if n_iter is None else n_iter
    x, lp = _start(init, target)
    d = x.size
    step = np.full(d, float(config.step_size))
    draws = np.empty((n_iter + 1, d))
    lps = np.empty(n_iter + 1)
    draws[0], lps[0] = x, lp
    accepted = np.zeros(d)
    window = np.zeros(d)
    for it in range(n_iter):
        z = rng.standard_normal(d)
        logu = np.log(rng.random(d))
        for j in range(d):
            old = x[j]
            x[j] = old + step[j] * z[j]
            lp_new = target(x)
            if logu[j] < lp_new - lp:
                lp = lp_new
                accepted[j] += 1
                window[j] += 1
            else:
                x[j] = old
        draws[it + 1], lps[it + 1] = x, lp
        if (it + 1) % config.adapt_every == 0:
            rate = window / config.adapt_every
            step[rate > config.target_accept + 0.1] *= 2.0
            step[rate < config.target_accept - 0.1] *= 0.5
            window[:] = 0
    rate = accepted / n_iter if n_iter else np.zeros(d)
    return Trace(draws, lps, rate, step)


def estimate_proposal_cov(draws, ridge=1e-8, floor=1e-10) -> np.ndarray:
    """Unbiased sample covariance of warmup draws, regularized to be SPD."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2:
        raise ValueError("draws must be a 2-D (iterations x dimension) array")
    m, d = draws.shape
    if m < d + 2:
        raise ValueError(f"need at least {d + 2} draws to estimate a {d}-D covariance, got {m}")
    cov = np.atleast_2d(np.cov(draws, rowvar=False)) + ridge * np.eye(d)
    w, v = np.linalg.eigh(cov)
    if w.min() < floor:
        cov = (v * np.maximum(w, floor)) @ v.T
        cov = 0.5 * (cov + cov.T)
    return cov


def mh_phase(init, proposal_cov, config: SamplerConfig, target, rng=None, n_iter=None) -> Trace:
    """Joint Gaussian random-walk Metropolis-Hastings.

    The proposal covariance is ``scale * proposal_cov`` with
    ``scale = config.mh_scale`` or ``2.38**2 / d`` by default.
    """
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n_iter = config.n_mh if n_iter is None else n_iter
    x, lp = _start(init, target)
    d = x.size
    scale = config.mh_scale if config.mh_scale is not None else 2.38**2 / d
    try:
        chol = np.linalg.cholesky(scale * np.atleast_2d(proposal_cov))
    except np.linalg.LinAlgError as exc:
        raise ValueError("proposal covariance must be symmetric positive definite") from exc
    draws = np.empty((n_iter + 1, d))
    lps = np.empty(n_iter + 1)
    draws[0], lps[0] = x, lp
    accepted = 0
    block = 4096
    for start in range(0, n_iter, block):
        nb = min(block, n_iter - start)
        steps = rng.standard_normal((nb, d)) @ chol.T
        logu = np.log(rng.random(nb))
        for b in range(nb):
            prop = x + steps[b]
            lp_new = target(prop)
            if logu[b] < lp_new - lp:
                x, lp = prop, lp_new
                accepted += 1
            draws[start + b + 1], lps[start + b + 1] = x, lp
    return Trace(draws, lps, accepted / n_iter if n_iter else 0.0)


def effective_sample_size(x) -> float:
    """ESS from FFT autocorrelations with Geyer's initial positive sequence."""
    x = np.asarray(x, dtype=float)
    m = x.size
    if m < 4 or np.var(x) == 0:
        return float(m)
    xc = x - x.mean()
    f = np.fft.rfft(xc, n=2 * m)
    acf = np.fft.irfft(f * np.conj(f))[:m]
    acf /= acf[0]
    tau = -1.0
    for k in range(0, m - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(m / max(tau, 1.0 / m))


# ---------------------------------------------------------------------------
# Full-model posterior
# ---------------------------------------------------------------------------


class DirectModelTerm:
    """Mean ``f(X_model, theta)`` from a fast computer model; no extra covariance."""

    def __init__(self, model, X_model):
        self.model = model
        self.X_model = X_model

    def __call__(self, theta):
        return evaluate_model(self.model, self.X_model, theta), None


class FullModelPosterior:
    """Log posterior under gamma = 1 on the unconstrained scale.

    Sum of the field log-likelihood, the log prior on
    (sigma2, sigma02, theta), the uniform slab on rho (zero), and the
    log-Jacobian of the inverse transform. Off-support points and failed
    factorizations give ``-inf``.
    """

    def __init__(self, data: FieldObservations, model, prior: PriorSpec, a: float = 1.9,
                 theta=None, mean_term=None, backend=None):
        self.data = data
        self.prior = prior
        self.layout = ParamLayout(data.p, prior.theta_bounds)
        self.lik = GaspLikelihood(data.X, a, backend=backend)
        self.mean_term = DirectModelTerm(model, data.X_model) if mean_term is None else mean_term
        p, k = self.layout.p, self.layout.k
        if k == 0:
            self.theta_fixed = np.empty(0) if theta is None else np.atleast_1d(
                np.asarray(theta, dtype=float))
            mean, extra = self.mean_term(self.theta_fixed)
            self._fixed = (data.y - mean, extra)
        else:
            if theta is not None:
                raise ConfigError("theta is calibrated; do not also pass a fixed value")
            self.theta_fixed = None
            self._fixed = None
        self._p = p
        self._lo = self.layout._lo
        self._width = self.layout._width
        self._theta_logprior = -float(np.sum(np.log(self._width)))
        self._log_width = float(np.sum(np.log(self._width)))
        self.n_failures = 0

    @property
    def dim(self):
        return self.layout.dim

    def initial_point(self) -> np.ndarray:
        """rho = 0.5, variances at prior medians, theta at bound midpoints."""
        u = np.zeros(self.dim)
        u[self._p] = math.log(self.prior.sigma2_median())
        u[self._p + 1] = math.log(self.prior.sigma02_median())
        return u

    def theta_of(self, u):
        if self._fixed is not None:
            return self.theta_fixed
        return self._lo + self._width * special.expit(u[self._p + 2:])

    def __call__(self, u) -> float:
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)):
            return -math.inf
        p = self._p
        pr = self.prior
        ls2, ls02 = u[p], u[p + 1]
        if not (-700.0 < ls2 < 700.0 and -700.0 < ls02 < 700.0):
            return -math.inf
        s2, s02 = math.exp(ls2), math.exp(ls02)
        lp = (invgamma_log_density(s2, pr.sigma2_shape, pr.sigma2_rate)
              + invgamma_log_density(s02, pr.sigma02_shape, pr.sigma02_rate)
              + ls2 + ls02)
        logit_u = u[:p]
        log_rho = -np.logaddexp(0.0, -logit_u)
        # log(1 - rho) = log(rho) - logit(rho)
        jac = float((2.0 * log_rho - logit_u).sum())
        if self._fixed is not None:
            resid, extra = self._fixed
        else:
            ut = u[p + 2:]
            theta = self._lo + self._width * special.expit(ut)
            jac += float(np.sum(-np.logaddexp(0.0, -ut) - np.logaddexp(0.0, ut))) + self._log_width
            lp += self._theta_logprior
            mean, extra = self.mean_term(theta)
            resid = self.data.y - mean
        try:
            ll = self.lik(resid, log_rho, s2, s02, extra)
        except NumericalError:
            self.n_failures += 1
            if self.n_failures <= 5:
                log.warning("covariance factorization failed; treating point as -inf")
            return -math.inf
        return ll + lp + jac


def log_posterior_full(u, data, model, prior_spec, a=1.9, theta=None) -> float:
    """One-shot evaluation of the full-model log posterior at ``u``."""
    return FullModelPosterior(data, model, prior_spec, a=a, theta=theta)(u)


# ---------------------------------------------------------------------------
# Chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainSample:
    rho: np.ndarray
    sigma2: float
    sigma02: float
    theta: np.ndarray
    log_post: float


@dataclass
class Chain:
    """Retained constrained-scale draws plus per-phase diagnostics."""

    rho: np.ndarray
    sigma2: np.ndarray
    sigma02: np.ndarray
    theta: np.ndarray
    log_post: np.ndarray
    log_rho: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.log_rho is None:
            with np.errstate(divide="ignore"):
                self.log_rho = np.log(self.rho)

    def __len__(self):
        return self.rho.shape[0]

    def __getitem__(self, r) -> ChainSample:
        return ChainSample(self.rho[r], float(self.sigma2[r]), float(self.sigma02[r]),
                           self.theta[r], float(self.log_post[r]))

    @property
    def p(self):
        return self.rho.shape[1]

    @property
    def k(self):
        return self.theta.shape[1]

    def columns(self):
        return ([f"rho_{i + 1}" for i in range(self.p)] + ["sigma2", "sigma02"]
                + [f"theta_{i + 1}" for i in range(self.k)] + ["log_post"])

    def as_array(self):
        return np.column_stack([self.rho, self.sigma2, self.sigma02, self.theta, self.log_post])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns())
            for row in self.as_array():
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = np.array([[float(v) for v in row] for row in reader], dtype=float)
        data = data.reshape(-1, len(header))
        p = sum(h.startswith("rho_") for h in header)
        k = sum(h.startswith("theta_") for h in header)
        expected = ([f"rho_{i + 1}" for i in range(p)] + ["sigma2", "sigma02"]
                    + [f"theta_{i + 1}" for i in range(k)] + ["log_post"])
        if header != expected:
            raise ValueError(f"unexpected chain columns {header}")
        return cls(rho=data[:, :p], sigma2=data[:, p], sigma02=data[:, p + 1],
                   theta=data[:, p + 2:p + 2 + k], log_post=data[:, -1])


def chain_from_trace(trace: Trace, target: FullModelPosterior, burn_in=0, thinning=1,
                     diagnostics=None) -> Chain:
    u = trace.draws[1:][burn_in::thinning]
    lps = trace.log_target[1:][burn_in::thinning]
    layout = target.layout
    p = layout.p
    rho = special.expit(u[:, :p])
    if layout.k:
        theta = layout._lo + layout._width * special.expit(u[:, p + 2:])
    else:
        # a fixed theta is not a sampled quantity; it is kept in the diagnostics
        theta = np.empty((len(u), 0))
    diagnostics = dict(diagnostics or {})
    if target.theta_fixed is not None:
        diagnostics["theta_fixed"] = [float(t) for t in target.theta_fixed]
    return Chain(rho=rho, sigma2=np.exp(u[:, p]), sigma02=np.exp(u[:, p + 1]), theta=theta,
                 log_post=lps, log_rho=-np.logaddexp(0.0, -u[:, :p]), diagnostics=diagnostics)


def sample_posterior(target: FullModelPosterior, config: SamplerConfig) -> Chain:
    """Warmup, proposal estimation and MH run for an already-built target."""
    rng = np.random.default_rng(config.seed)
    init = target.initial_point()
    warm = mwg_phase(init, config, target, rng=rng)
    if config.n_mwg >= 2 * (target.dim + 2):
        tail = warm.draws[config.n_mwg // 2 + 1:]
    else:
        tail = warm.draws
    if len(tail) >= target.dim + 2:
        cov = estimate_proposal_cov(tail)
    else:
        cov = np.diag(np.full(target.dim, config.step_size**2))
    run = mh_phase(warm.draws[-1], cov, config, target, rng=rng)
    lo, hi = MH_ACCEPT_RANGE
    if not (lo <= run.accept_rate <= hi):
        warnings.warn(f"MH acceptance rate {run.accept_rate:.3f} outside [{lo}, {hi}]",
                      RuntimeWarning, stacklevel=2)
    diagnostics = {
        "mwg_accept": [float(v) for v in np.atleast_1d(warm.accept_rate)],
        "mwg_final_steps": [float(v) for v in warm.step_size],
        "mh_accept": float(run.accept_rate),
        "proposal_cov": cov.tolist(),
        "parameter_names": target.layout.names(),
        "factorization_failures": target.n_failures,
    }
    chain = chain_from_trace(run, target, config.burn_in, config.thinning, diagnostics)
    chain.diagnostics["ess_log_rho"] = [effective_sample_size(c) for c in chain.log_rho.T]
    return chain


def run_full_sampler(data: FieldObservations, model, prior_spec: PriorSpec, config: SamplerConfig,
                     a: float = 1.9, theta=None, mean_term=None, backend=None) -> Chain:
    """Sample the full-model posterior and return constrained draws.

    Calibration is on when ``prior_spec.theta_bounds`` is non-empty;
    otherwise ``theta`` (possibly empty) is held fixed and is absent from
    the sampled state.
    """
    target = FullModelPosterior(data, model, prior_spec, a=a, theta=theta,
                                mean_term=mean_term, backend=backend)
    return sample_posterior(target, config)


def map_jobs(fn, tasks, jobs=1):
    """Apply ``fn`` to each task, in worker processes when ``jobs > 1``.

    Results come back in task order, so reductions stay deterministic.
    """
    tasks = list(tasks)
    if jobs is None or jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))
