"""Synthetic calibration scenarios with known active discrepancy inputs.

``s41``: p = 8 inputs on a Latin hypercube, n = 50, computer model summing
four kink terms, discrepancy ``sin(2 pi x1 x5) + x2**3 + (1 - x6)**3``.

``s42_*``: p = 5 inputs, n = 100, independent uniforms except x5 which is
tied to x3. The assumed computer model sums three kink terms; the reality
differs by case. Composite ids ``s42_12``, ``s42_13`` and ``s42_14`` apply
the case-1 substitution ``x1 -> x1**2`` and then the second case's change.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import csv
import json
import math
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import stats

THETA_41 = (0.3, 0.4, 0.5, 0.6)
THETA_42 = (0.4, 0.5, 0.6, 0.7, 0.8)
NOISE_SD = 0.05


def lhd(n: int, p: int, seed) -> np.ndarray:
    """Random Latin hypercube: one point per stratum [(i-1)/n, i/n) in each column."""
    if n < 1 or p < 1:
        raise ValueError("n and p must be >= 1")
    rng = np.random.default_rng(seed)
    X = np.empty((n, p))
    for j in range(p):
        X[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return X


def kink_term(x, theta):
    return (np.abs(4.0 * x - 2.0) + theta) / (1.0 + theta)


def model_f(x, theta, dims) -> float | np.ndarray:
    """Sum over ``dims`` (1-based) of ``(|4 x_l - 2| + theta_l) / (1 + theta_l)``.

    ``x`` may be one configuration or a matrix of rows; ``theta`` may be a
    single vector or one row per configuration.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    total = np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0
    for i, d in enumerate(dims):
        total = total + kink_term(x[..., d - 1], theta[..., i])
    return total


def bias_delta(x):
    """``sin(2 pi x1 x5) + x2**3 + (1 - x6)**3``; x3, x4, x7, x8 do not enter."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < 6:
        raise ValueError("bias_delta needs at least 6 inputs")
    x1, x2, x5, x6 = x[..., 0], x[..., 1], x[..., 4], x[..., 5]
    return np.sin(2.0 * np.pi * x1 * x5) + x2**3 + (1.0 - x6) ** 3


def _case_terms(case, x1_squared=False):
    """(input, theta) index pairs (1-based) of the reality's kink terms."""
    terms = {1: [1, 2, 3], 2: [1, 3], 3: [1, 2, 3, 4], 4: [1, 2, 5]}
    if case not in terms:
        raise ValueError(f"unknown case {case!r}; expected 1, 2, 3 or 4")
    return terms[case], (x1_squared or case == 1)


def scenario_zeta(case, x, theta):
    """Reality for the idealized validation cases.

    ``case`` is 1-4 or a composite pair such as ``(1, 3)``. Each kink term
    for input l uses theta_l.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if isinstance(case, (tuple, list)):
        first, second = case
        if first != 1 or second not in (2, 3, 4):
            raise ValueError(f"composite cases combine 1 with 2, 3 or 4, got {case!r}")
        dims, squared = _case_terms(second, x1_squared=True)
    else:
        dims, squared = _case_terms(case)
    total = np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0
    for d in dims:
        xd = x[..., d - 1]
        if d == 1 and squared:
            xd = xd**2
        total = total + kink_term(xd, theta[d - 1])
    return total


class ScenarioModel:
    """Kink-sum computer model over fixed 1-based ``dims``."""

    thread_safe = True

    def __init__(self, dims):
        self.dims = tuple(dims)

    def __call__(self, X, theta):
        return model_f(np.asarray(X, dtype=float), theta, self.dims)

    def __repr__(self):
        return f"ScenarioModel(dims={self.dims})"


@dataclass(frozen=True)
class ScenarioDefinition:
    identifier: str
    p: int
    n: int
    theta: tuple
    reality: Callable
    model_dims: tuple
    active: tuple
    noise_sd: float = NOISE_SD
    design: str = "lhd"
    correlation: dict = field(default_factory=dict)

    @property
    def model(self):
        return ScenarioModel(self.model_dims)

    @property
    def model_theta(self):
        return tuple(self.theta[: len(self.model_dims)])

    def theta_bounds(self):
        return tuple((0.0, 1.0) for _ in self.model_dims)


def _reality_41(X, theta):
    return model_f(X, theta, (1, 2, 3, 4)) + bias_delta(X)


def _reality_42(case):
    def zeta(X, theta):
        return scenario_zeta(case, X, theta)
    return zeta


_ACTIVE_42 = {1: (1,), 2: (2,), 3: (4,), 4: (3, 5), (1, 2): (1, 2), (1, 3): (1, 4),
              (1, 4): (1, 3, 5)}


def _make_42(case, noise_sd=NOISE_SD, correlation=None):
    ident = "s42_" + ("".join(str(c) for c in case) if isinstance(case, tuple) else str(case))
    return ScenarioDefinition(
        identifier=ident, p=5, n=100, theta=THETA_42, reality=_reality_42(case),
        model_dims=(1, 2, 3), active=_ACTIVE_42[case], noise_sd=noise_sd, design="uniform",
        correlation=dict(correlation or {"method": "clamp", "tau": 0.05}),
    )


def get_scenario(identifier: str, **overrides) -> ScenarioDefinition:
    """Look up a built-in scenario; keyword overrides replace dataclass fields."""
    if identifier == "s41":
        sc = ScenarioDefinition(
            identifier="s41", p=8, n=50, theta=THETA_41, reality=_reality_41,
            model_dims=(1, 2, 3, 4), active=(1, 2, 5, 6), design="lhd")
    elif identifier.startswith("s42_"):
        code = identifier[4:]
        case = int(code) if len(code) == 1 else tuple(int(c) for c in code)
        if case not in _ACTIVE_42:
            raise KeyError(f"unknown scenario {identifier!r}")
        sc = _make_42(case)
    else:
        raise KeyError(f"unknown scenario {identifier!r}")
    if overrides:
        sc = ScenarioDefinition(**{**sc.__dict__, **overrides})
    return sc


SCENARIO_IDS = ("s41", "s42_1", "s42_2", "s42_3", "s42_4", "s42_12", "s42_13", "s42_14")


def correlated_uniform_design(n, p, rng, pair=(3, 5), method="clamp", tau=0.05, rho=0.95):
    """Independent uniforms except ``x_pair[1]`` tied to ``x_pair[0]``.

    ``clamp``: ``x5 = clip(x3 + tau z, 0, 1)``. ``copula``: both columns are
    Gaussian-copula uniforms with latent correlation ``rho``.
    """
    X = rng.random((n, p))
    i, j = pair[0] - 1, pair[1] - 1
    z = rng.standard_normal(n)
    if method == "clamp":
        X[:, j] = np.clip(X[:, i] + tau * z, 0.0, 1.0)
    elif method == "copula":
        zi = stats.norm.ppf(X[:, i])
        X[:, j] = stats.norm.cdf(rho * zi + math.sqrt(1.0 - rho**2) * z)
    else:
        raise ValueError(f"unknown correlation method {method!r}")
    return X


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    scenario: str
    seed: int
    active: tuple
    theta: tuple
    model_dims: tuple

    @property
    def truth(self):
        flags = np.zeros(self.X.shape[1], dtype=bool)
        flags[np.asarray(self.active, dtype=int) - 1] = True
        return flags


def gen_dataset(defn: ScenarioDefinition, seed) -> Dataset:
    """Draw a design, evaluate the reality and add Gaussian noise."""
    rng = np.random.default_rng(seed)
    if defn.design == "lhd":
        X = lhd(defn.n, defn.p, rng)
    elif defn.design == "uniform":
        corr = dict(defn.correlation)
        method = corr.pop("method", None)
        if method is None:
            X = rng.random((defn.n, defn.p))
        else:
            X = correlated_uniform_design(defn.n, defn.p, rng, method=method, **corr)
    else:
        raise ValueError(f"unknown design kind {defn.design!r}")
    truth = defn.reality(X, np.asarray(defn.theta))
    noise = rng.normal(0.0, defn.noise_sd, defn.n) if defn.noise_sd > 0 else 0.0
    return Dataset(X=X, y=truth + noise, scenario=defn.identifier, seed=int(seed),
                   active=tuple(defn.active), theta=tuple(defn.theta),
                   model_dims=tuple(defn.model_dims))


def write_dataset(ds: Dataset, csv_path) -> Path:
    """Write ``x_1..x_p, y`` CSV plus a ``.json`` sidecar; returns the sidecar path."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x_{i + 1}" for i in range(ds.X.shape[1])] + ["y"])
        for row, yi in zip(ds.X, ds.y):
            w.writerow([repr(float(v)) for v in row] + [repr(float(yi))])
    side = csv_path.with_suffix(".json")
    meta = {
        "schema": "pipscreen.dataset/1",
        "scenario": ds.scenario,
        "seed": ds.seed,
        "truth_active": [int(a) for a in ds.active],
        "true_theta": [float(t) for t in ds.theta],
        "model_dims": [int(d) for d in ds.model_dims],
    }
    side.write_text(json.dumps(meta, indent=2) + "\n")
    return side


def read_xy_csv(path):
    """Read a ``x_1..x_p, y`` CSV; returns (X, y, column names)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [[float(v) for v in row] for row in reader if row]
    if "y" not in header:
        raise ValueError(f"{path}: no 'y' column")
    data = np.asarray(rows, dtype=float).reshape(-1, len(header))
    yi = header.index("y")
    xcols = [i for i in range(len(header)) if i != yi]
    return data[:, xcols], data[:, yi], [header[i] for i in xcols]


def read_dataset(csv_path) -> Dataset:
    csv_path = Path(csv_path)
    X, y, _ = read_xy_csv(csv_path)
    meta = json.loads(csv_path.with_suffix(".json").read_text())
    return Dataset(X=X, y=y, scenario=meta["scenario"], seed=meta["seed"],
                   active=tuple(meta["truth_active"]), theta=tuple(meta["true_theta"]),
                   model_dims=tuple(meta["model_dims"]))
