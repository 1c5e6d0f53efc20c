"""Posterior inclusion probabilities from one full-model chain.

Because the full model puts a Uniform(0, 1) prior on every ``rho_l`` and
the likelihood does not depend on ``gamma``, the Bayes factor of model
``gamma`` against the full model is the posterior mean of
``prod_{l: gamma_l = 0} alpha rho_l**(alpha - 1)``. All ``2**p`` of them come
from subset sums of one (M, p) matrix of log spike densities.

Models are integer bitmasks: bit ``l`` set means input ``l + 1`` is active,
so the full model is ``2**p - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import csv
import json
import math
import warnings

import numpy as np
from scipy.special import logsumexp

from .priors import ModelSpacePrior

MAX_P = 20
ESS_WARN_FRACTION = 0.01
ESS_WARN_MIN_POSTERIOR = 1e-3
_CHUNK_ELEMENTS = 1 << 22


def full_model(p: int) -> int:
    return (1 << p) - 1


def check_enumerable(p: int, cap: int = MAX_P):
    if p > cap:
        raise ValueError(
            f"{p} inputs means 2**{p} models; enumeration is capped at p = {cap}")


def gamma_bits(gamma: int, p: int) -> np.ndarray:
    return ((int(gamma) >> np.arange(p)) & 1).astype(bool)


def bits_to_gamma(bits) -> int:
    return int(sum(1 << i for i, b in enumerate(bits) if b))


def hex_key(gamma: int, p: int) -> str:
    return "0x" + format(int(gamma), "0{}x".format(max(1, (p + 3) // 4)))


def log_weight_matrix(log_rho, alpha) -> np.ndarray:
    """Log spike density ``log alpha + (alpha - 1) log rho`` at every draw.

    ``log_rho`` is the (M, p) matrix of retained ``log(rho)`` values (a
    :class:`~pipscreen.mcmc.Chain` is accepted too). ``alpha`` may be a
    scalar or one value per input.
    """
    if hasattr(log_rho, "log_rho"):
        log_rho = log_rho.log_rho
    log_rho = np.atleast_2d(np.asarray(log_rho, dtype=float))
    if log_rho.shape[0] == 0:
        raise ValueError("empty chain")
    if np.any(log_rho > 0) or np.any(~np.isfinite(log_rho)):
        raise ValueError("rho draws must lie in (0, 1]")
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (log_rho.shape[1],))
    if np.any(alpha < 1):
        raise ValueError("spike alpha must be >= 1")
    return np.log(alpha) + (alpha - 1.0) * log_rho


def _batch_var_of_mean(w: np.ndarray) -> np.ndarray:
    """Batch-means variance of the column means of ``w`` (autocorrelation-aware)."""
    m = w.shape[0]
    if m < 2:
        return np.zeros(w.shape[1:])
    nb = max(2, int(math.isqrt(m)))
    size = m // nb
    if size < 1:
        return np.var(w, axis=0, ddof=1) / m
    means = w[: nb * size].reshape(nb, size, *w.shape[1:]).mean(axis=1)
    return np.var(means, axis=0, ddof=1) / nb


def _estimate_block(weights: np.ndarray, masks: np.ndarray):
    """log B, delta-method s.e. and ESS for the models whose inert masks are given."""
    m = weights.shape[0]
    # columns of masks flag the inert inputs of each model
    S = weights @ masks.astype(float)
    top = S.max(axis=0)
    w = np.exp(S - top)
    mean = w.mean(axis=0)
    log_b = top + np.log(mean)
    se = np.sqrt(_batch_var_of_mean(w)) / mean
    ess = w.sum(axis=0) ** 2 / np.sum(w * w, axis=0)
    return log_b, se, ess


def log_bayes_factor(gamma: int, weights) -> tuple[float, float]:
    """Estimate ``log B_gamma`` and its Monte Carlo standard error.

    The estimate is the log of the mean of ``exp(sum of inert log weights)``
    over draws, formed with a max shift; the standard error comes from the
    delta method on the batch-means variance of that mean.
    """
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    p = weights.shape[1]
    inert = ~gamma_bits(gamma, p)
    if not inert.any():
        return 0.0, 0.0
    log_b, se, _ = _estimate_block(weights, inert[:, None])
    return float(log_b[0]), float(se[0])


def all_log_bayes_factors(weights):
    """Log Bayes factors, standard errors and weight ESS for all ``2**p`` models."""
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    m, p = weights.shape
    check_enumerable(p)
    n_models = 1 << p
    log_b = np.empty(n_models)
    se = np.empty(n_models)
    ess = np.empty(n_models)
    chunk = max(1, _CHUNK_ELEMENTS // max(m, 1))
    shifts = np.arange(p)
    for start in range(0, n_models, chunk):
        gammas = np.arange(start, min(n_models, start + chunk))
        inert = ((gammas[None, :] >> shifts[:, None]) & 1) == 0
        log_b[gammas], se[gammas], ess[gammas] = _estimate_block(weights, inert)
    full = n_models - 1
    log_b[full], se[full], ess[full] = 0.0, 0.0, float(m)
    return log_b, se, ess


def model_posteriors(log_bfs, prior: ModelSpacePrior | None = None) -> np.ndarray:
    """Normalized pi(gamma | y) from log Bayes factors indexed by bitmask."""
    log_bfs = np.asarray(log_bfs, dtype=float)
    n_models = log_bfs.size
    p = n_models.bit_length() - 1
    if n_models != 1 << p:
        raise ValueError("need one log Bayes factor for each of the 2**p models")
    prior = ModelSpacePrior() if prior is None else prior
    logw = log_bfs + prior.log_prior(np.arange(n_models), p)
    return np.exp(logw - logsumexp(logw))


def inclusion_probabilities(posteriors) -> np.ndarray:
    """pi(x_l | y): total posterior mass of the models containing input l."""
    posteriors = np.asarray(posteriors, dtype=float)
    p = posteriors.size.bit_length() - 1
    gammas = np.arange(posteriors.size)
    bits = (gammas[:, None] >> np.arange(p)) & 1
    return np.clip(posteriors @ bits, 0.0, 1.0)


def pair_inclusion(l: int, j: int, posteriors) -> float:
    """Posterior probability that input ``l`` or input ``j`` (0-based) is active."""
    if l == j:
        raise ValueError("pair inclusion needs two different inputs")
    posteriors = np.asarray(posteriors, dtype=float)
    gammas = np.arange(posteriors.size)
    in_l = (gammas >> l) & 1 == 1
    in_j = (gammas >> j) & 1 == 1
    pl, pj = posteriors[in_l].sum(), posteriors[in_j].sum()
    return float(pl + pj - posteriors[in_l & in_j].sum())


def classify(pips, threshold: float = 0.5) -> np.ndarray:
    if not (0.0 < threshold < 1.0):
        raise ValueError("threshold must lie in (0, 1)")
    return np.asarray(pips, dtype=float) > threshold


@dataclass
class ScreeningResult:
    p: int
    alpha: float | list
    log_bayes_factors: np.ndarray
    mc_standard_errors: np.ndarray
    ess: np.ndarray
    model_posteriors: np.ndarray
    inclusion_probs: np.ndarray
    threshold: float = 0.5
    names: list = field(default_factory=list)
    pairwise: list = field(default_factory=list)
    n_draws: int = 0

    def __post_init__(self):
        if not self.names:
            self.names = [f"x{i + 1}" for i in range(self.p)]

    @property
    def active(self):
        return classify(self.inclusion_probs, self.threshold)

    def add_pairs(self, pairs):
        for l, j in pairs:
            self.pairwise.append({"inputs": [self.names[l], self.names[j]],
                                  "probability": pair_inclusion(l, j, self.model_posteriors)})

    def to_json(self) -> dict:
        key = lambda g: hex_key(g, self.p)  # noqa: E731
        gammas = range(1 << self.p)
        return {
            "schema": "pipscreen.screening/1",
            "p": self.p,
            "names": list(self.names),
            "alpha": self.alpha,
            "threshold": self.threshold,
            "n_draws": self.n_draws,
            "log_bayes_factors": {key(g): float(self.log_bayes_factors[g]) for g in gammas},
            "model_posteriors": {key(g): float(self.model_posteriors[g]) for g in gammas},
            "inclusion_probabilities": {n: float(v) for n, v in zip(self.names, self.inclusion_probs)},
            "pairwise": list(self.pairwise),
            "ess": {key(g): float(self.ess[g]) for g in gammas},
            "mc_se": {key(g): float(self.mc_standard_errors[g]) for g in gammas},
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ScreeningResult":
        if doc.get("schema") != "pipscreen.screening/1":
            raise ValueError("not a screening result document")
        p = int(doc["p"])

        def table(name):
            out = np.empty(1 << p)
            for k, v in doc[name].items():
                out[int(k, 16)] = v
            return out

        names = list(doc["names"])
        return cls(p=p, alpha=doc["alpha"], log_bayes_factors=table("log_bayes_factors"),
                   mc_standard_errors=table("mc_se"), ess=table("ess"),
                   model_posteriors=table("model_posteriors"),
                   inclusion_probs=np.array([doc["inclusion_probabilities"][n] for n in names]),
                   threshold=doc["threshold"], names=names, pairwise=list(doc["pairwise"]),
                   n_draws=int(doc.get("n_draws", 0)))

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "pip", "active_flag"])
            for name, v, a in zip(self.names, self.inclusion_probs, self.active):
                w.writerow([name, repr(float(v)), int(a)])

    def summary(self) -> str:
        order = np.argsort(-self.inclusion_probs, kind="stable")
        lines = [f"{'input':<12}{'PIP':>10}  active (threshold {self.threshold:g})"]
        for i in order:
            lines.append(f"{self.names[i]:<12}{self.inclusion_probs[i]:>10.4f}  "
                         f"{'yes' if self.active[i] else 'no'}")
        return "\n".join(lines)


def screen(chain_or_log_rho, alpha=100.0, prior: ModelSpacePrior | None = None,
           threshold: float = 0.5, names=None, pairs=()) -> ScreeningResult:
    """Bayes factors, model posteriors and PIPs from one full-model chain."""
    weights = log_weight_matrix(chain_or_log_rho, alpha)
    m, p = weights.shape
    log_b, se, ess = all_log_bayes_factors(weights)
    post = model_posteriors(log_b, prior)
    # degenerate weights only matter for models that carry posterior mass
    low = (ess < ESS_WARN_FRACTION * m) & (post > ESS_WARN_MIN_POSTERIOR)
    if low.any():
        warnings.warn(f"{int(low.sum())} models with posterior mass above "
                      f"{ESS_WARN_MIN_POSTERIOR:g} have importance-weight ESS below "
                      f"{ESS_WARN_FRACTION:.0%} of the chain length", RuntimeWarning, stacklevel=2)
    a = np.asarray(alpha, dtype=float)
    res = ScreeningResult(p=p, alpha=float(a) if a.ndim == 0 else a.tolist(),
                          log_bayes_factors=log_b, mc_standard_errors=se, ess=ess,
                          model_posteriors=post, inclusion_probs=inclusion_probabilities(post),
                          threshold=threshold, names=list(names) if names else [], n_draws=m)
    res.add_pairs(pairs)
    return res
