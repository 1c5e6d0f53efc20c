"""Reference distribution variable selection (RDVS) baseline.

Each repetition appends a fictitious Uniform(0, 1) input to the design,
samples the full-model posterior and records the posterior median of every
``rho``. Over ``T`` repetitions the fictitious input's medians form a
reference distribution; a real input is active at percentile ``q`` when
its across-run median of posterior medians is at most the ``q``-quantile
of that reference distribution.

Repetition ``t`` draws its fictitious column from the stream
``derive_seed(seed, t, 0)`` and runs its chain from ``derive_seed(seed, t, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import csv
import json
import logging

import numpy as np

from .errors import ConfigError
from .likelihood import FieldObservations
from .mcmc import SamplerConfig, derive_seed, map_jobs, run_full_sampler
from .priors import PriorSpec

log = logging.getLogger(__name__)

DEFAULT_PERCENTILES = (0.05, 0.10, 0.15)


@dataclass(frozen=True)
class RdvsConfig:
    T: int = 100
    percentiles: tuple = DEFAULT_PERCENTILES
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(seed=0))
    seed: int = 0

    def __post_init__(self):
        if self.T < 2:
            raise ConfigError("RDVS needs T >= 2 repetitions")
        if not self.percentiles:
            raise ConfigError("at least one percentile is required")
        for q in self.percentiles:
            if not (0.0 <= q <= 1.0):
                raise ConfigError(f"percentile {q} outside [0, 1]")


class RdvsAborted(RuntimeError):
    """A repetition failed; ``partial`` holds the per-run medians collected so far."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def augment_design(X, rng) -> np.ndarray:
    """Append one column of i.i.d. Uniform(0, 1) draws to ``X``."""
    X = np.asarray(X, dtype=float)
    rng = np.random.default_rng(rng)
    return np.column_stack([X, rng.random(X.shape[0])])


def active_at(input_medians, reference_medians, q: float) -> np.ndarray:
    """Flags ``median_l <= quantile_q(reference)``; nothing is active at ``q = 0``."""
    input_medians = np.asarray(input_medians, dtype=float)
    if q <= 0.0:
        return np.zeros(input_medians.shape, dtype=bool)
    return input_medians <= np.quantile(np.asarray(reference_medians, dtype=float), q)


@dataclass
class RdvsResult:
    run_medians: np.ndarray          # (T, p + 1); last column is the fictitious input
    percentiles: tuple
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.run_medians = np.atleast_2d(np.asarray(self.run_medians, dtype=float))
        if not self.names:
            self.names = [f"x{i + 1}" for i in range(self.p)]

    @property
    def p(self):
        return self.run_medians.shape[1] - 1

    @property
    def T(self):
        return self.run_medians.shape[0]

    @property
    def reference_medians(self) -> np.ndarray:
        return self.run_medians[:, -1]

    @property
    def input_medians(self) -> np.ndarray:
        return np.median(self.run_medians[:, :-1], axis=0)

    def thresholds(self) -> dict:
        return {q: (0.0 if q <= 0 else float(np.quantile(self.reference_medians, q)))
                for q in self.percentiles}

    def active(self, q: float | None = None):
        """Active flags at one percentile, or a dict over all configured ones."""
        if q is not None:
            return active_at(self.input_medians, self.reference_medians, q)
        return {q: active_at(self.input_medians, self.reference_medians, q)
                for q in self.percentiles}

    def to_json(self) -> dict:
        return {
            "schema": "pipscreen.rdvs/1",
            "p": self.p,
            "T": self.T,
            "names": list(self.names),
            "input_medians": {n: float(v) for n, v in zip(self.names, self.input_medians)},
            "percentiles": [
                {"q": float(q), "reference_quantile": thr,
                 "active": {n: bool(a) for n, a in zip(self.names, self.active(q))}}
                for q, thr in self.thresholds().items()
            ],
            "run_medians": self.run_medians.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RdvsResult":
        if doc.get("schema") != "pipscreen.rdvs/1":
            raise ValueError("not an RDVS result document")
        return cls(run_medians=np.array(doc["run_medians"], dtype=float),
                   percentiles=tuple(e["q"] for e in doc["percentiles"]),
                   names=list(doc["names"]))

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    def write_csv(self, path):
        """One row per repetition: the reference median, then each input's median."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["repetition", "reference_median"] + [f"median_{n}" for n in self.names])
            for t, row in enumerate(self.run_medians):
                w.writerow([t, repr(float(row[-1]))] + [repr(float(v)) for v in row[:-1]])

    def summary(self) -> str:
        lines = [f"{'input':<12}{'median rho':>12}  " + "  ".join(
            f"q={q:g}" for q in self.percentiles)]
        flags = self.active()
        for i, name in enumerate(self.names):
            marks = "  ".join(("yes" if flags[q][i] else "no").center(len(f"q={q:g}"))
                              for q in self.percentiles)
            lines.append(f"{name:<12}{self.input_medians[i]:>12.4f}  {marks}")
        thr = ", ".join(f"{q:g}: {v:.4f}" for q, v in self.thresholds().items())
        lines.append(f"reference quantiles ({self.T} runs): {thr}")
        return "\n".join(lines)


def _repetition(task):
    t, data, model, prior_spec, sampler, seed, a, theta = task
    X_aug = augment_design(data.X, derive_seed(seed, t, 0))
    aug = FieldObservations(X_aug, data.y, X_model=data.X_model)
    cfg = replace(sampler, seed=derive_seed(seed, t, 1))
    chain = run_full_sampler(aug, model, prior_spec, cfg, a=a, theta=theta)
    return np.median(chain.rho, axis=0)


def rdvs_run(data: FieldObservations, model, prior_spec: PriorSpec, config: RdvsConfig,
             a: float = 1.9, theta=None, names=None, jobs: int = 1,
             partial_path=None) -> RdvsResult:
    """Run the ``T`` augmented repetitions and collect posterior medians.

    If a repetition fails, the medians of the repetitions that finished are
    written to ``partial_path`` (when given) and :class:`RdvsAborted` is
    raised carrying them.
    """
    tasks = [(t, data, model, prior_spec, config.sampler, config.seed, a, theta)
             for t in range(config.T)]
    done = []
    try:
        if jobs and jobs > 1:
            done = map_jobs(_repetition, tasks, jobs)
        else:
            for task in tasks:
                done.append(_repetition(task))
    except Exception as exc:
        partial = RdvsResult(np.array(done).reshape(len(done), data.p + 1),
                             tuple(config.percentiles), list(names or []))
        if partial_path is not None and len(done):
            partial.write_csv(partial_path)
            log.error("RDVS aborted after %d repetitions; partial medians in %s",
                      len(done), partial_path)
        raise RdvsAborted(f"RDVS repetition {len(done)} failed: {exc}", partial) from exc
    return RdvsResult(np.array(done), tuple(config.percentiles), list(names or []))
