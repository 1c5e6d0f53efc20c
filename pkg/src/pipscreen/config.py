"""Analysis configuration: a versioned TOML document.

Every section is optional; missing keys take the defaults below. Unknown
sections or keys are rejected so that typos cannot silently fall back to
defaults. :func:`validate` builds every module's configuration object,
which runs their own checks before any computation starts.

Example::

    schema = "pipscreen.config/1"
    seed = 2024
    threshold = 0.5

    [spike]
    alpha = 100.0

    [priors]
    sigma2_shape = 3.0
    sigma2_rate = 1.0
    theta_bounds = [[0.0, 1.0], [0.0, 1.0]]

    [sampler]
    n_mwg = 5000
    n_mh = 10000
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib
import tomli_w

from .errors import ConfigError
from .kernel import KernelConfig
from .mcmc import SamplerConfig
from .pips import MAX_P
from .priors import ModelSpacePrior, PriorSpec, SpikeConfig
from .rdvs import DEFAULT_PERCENTILES

SCHEMA = "pipscreen.config/1"
EFFECTIVE_CONFIG_NAME = "effective_config.toml"

DEFAULTS = {
    "schema": SCHEMA,
    "seed": 2024,
    "threshold": 0.5,
    "calibrate": False,
    "emulator": False,
    "kernel": {"a": 1.9},
    "spike": {"alpha": 100.0},
    "priors": {"sigma2_shape": 3.0, "sigma2_rate": 1.0, "sigma02_shape": 4.0,
               "sigma02_rate": 0.02, "theta_bounds": []},
    "sampler": {"n_mwg": 5000, "n_mh": 10000, "burn_in": 0, "thinning": 1,
                "step_size": 0.3, "adapt_every": 100, "target_accept": 0.44,
                "mh_scale": "auto"},
    "model_prior": {"tau": "constant"},
    "rdvs": {"T": 100, "percentiles": list(DEFAULT_PERCENTILES)},
    "data": {"scale_inputs": True, "normalize_output": True},
    "screening": {"max_p": MAX_P, "pairs": []},
}


def _merge(base: dict, override: dict, where="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown configuration key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}{key} must be a table")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class AnalysisConfig:
    """Resolved settings; ``raw`` keeps the full document with defaults filled in."""

    raw: dict

    @classmethod
    def from_dict(cls, doc: dict | None = None) -> "AnalysisConfig":
        doc = dict(doc or {})
        schema = doc.get("schema", SCHEMA)
        if schema != SCHEMA:
            raise ConfigError(f"unsupported config schema {schema!r}; expected {SCHEMA!r}")
        cfg = cls(_merge(DEFAULTS, doc))
        validate(cfg)
        return cfg

    @classmethod
    def load(cls, path) -> "AnalysisConfig":
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(doc)

    def updated(self, **sections) -> "AnalysisConfig":
        """Copy with some keys replaced, e.g. ``updated(sampler={"n_mh": 200})``."""
        return AnalysisConfig.from_dict(_merge(self.raw, sections))

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def threshold(self) -> float:
        return float(self.raw["threshold"])

    @property
    def calibrate(self) -> bool:
        return bool(self.raw["calibrate"])

    @property
    def kernel(self) -> KernelConfig:
        return KernelConfig(a=float(self.raw["kernel"]["a"]))

    @property
    def spike(self) -> SpikeConfig:
        alpha = self.raw["spike"]["alpha"]
        return SpikeConfig(alpha=tuple(alpha) if isinstance(alpha, list) else float(alpha))

    def prior_spec(self, calibrate: bool | None = None) -> PriorSpec:
        """Prior hyperparameters; theta bounds are dropped when calibration is off."""
        pr = self.raw["priors"]
        calibrate = self.calibrate if calibrate is None else calibrate
        bounds = tuple(tuple(b) for b in pr["theta_bounds"]) if calibrate else ()
        return PriorSpec(pr["sigma2_shape"], pr["sigma2_rate"], pr["sigma02_shape"],
                         pr["sigma02_rate"], bounds)

    def sampler(self, seed: int | None = None) -> SamplerConfig:
        s = dict(self.raw["sampler"])
        if s["mh_scale"] == "auto":
            s["mh_scale"] = None
        return SamplerConfig(seed=self.seed if seed is None else int(seed), **s)

    @property
    def model_prior(self) -> ModelSpacePrior:
        tau = self.raw["model_prior"]["tau"]
        if tau == "constant":
            return ModelSpacePrior()
        return ModelSpacePrior(tuple(tau) if isinstance(tau, list) else (float(tau),))

    def to_toml(self) -> str:
        return tomli_w.dumps(self.raw)

    def write(self, directory) -> Path:
        """Write the effective configuration next to an analysis output."""
        path = Path(directory) / EFFECTIVE_CONFIG_NAME
        path.write_text(self.to_toml())
        return path


def validate(cfg: AnalysisConfig):
    """Construct every module's settings object; raise :class:`ConfigError` on failure."""
    raw = cfg.raw
    try:
        cfg.kernel
        cfg.spike
        cfg.prior_spec(calibrate=True)
        cfg.sampler()
        cfg.model_prior
        if not (0.0 < cfg.threshold < 1.0):
            raise ValueError("threshold must lie in (0, 1)")
        if isinstance(raw["sampler"]["mh_scale"], str) and raw["sampler"]["mh_scale"] != "auto":
            raise ValueError("sampler.mh_scale must be a number or 'auto'")
        if int(raw["rdvs"]["T"]) < 2:
            raise ValueError("rdvs.T must be >= 2")
        if any(not (0.0 <= q <= 1.0) for q in raw["rdvs"]["percentiles"]):
            raise ValueError("rdvs.percentiles must lie in [0, 1]")
        if not (1 <= int(raw["screening"]["max_p"]) <= MAX_P):
            raise ValueError(f"screening.max_p must lie in [1, {MAX_P}]")
        for pair in raw["screening"]["pairs"]:
            if len(pair) != 2 or pair[0] == pair[1] or min(pair) < 1:
                raise ValueError(f"screening.pairs entries must be two distinct 1-based inputs, got {pair}")
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
