"""Screening computer-model discrepancies for active inputs.

A single full-model MCMC chain of the discrepancy Gaussian process yields
Bayes factors for all ``2**p`` input subsets, and from them posterior
inclusion probabilities (PIPs). RDVS is provided as a baseline.
"""

__version__ = "0.1.0"

from .errors import ConfigError, NumericalError
from .kernel import BACKEND, KernelConfig, assemble_covariance, corr1d, corr_matrix
from .likelihood import FieldObservations, field_log_likelihood, mvn_logpdf
from .priors import ModelSpacePrior, PriorSpec, SpikeConfig
from .mcmc import Chain, SamplerConfig, derive_seed, run_full_sampler
from .pips import ScreeningResult, screen
from .rdvs import RdvsConfig, RdvsResult, rdvs_run
from .emulator import EmulatorDesign, FittedEmulator, emulator_mean_cov, fit_emulator
from .scenarios import gen_dataset, get_scenario

__all__ = [
    "BACKEND", "Chain", "ConfigError", "EmulatorDesign", "FieldObservations", "FittedEmulator",
    "KernelConfig", "ModelSpacePrior", "NumericalError", "PriorSpec", "RdvsConfig", "RdvsResult",
    "SamplerConfig", "ScreeningResult", "SpikeConfig", "assemble_covariance", "corr1d",
    "corr_matrix", "derive_seed", "emulator_mean_cov", "field_log_likelihood", "fit_emulator",
    "gen_dataset", "get_scenario", "mvn_logpdf", "rdvs_run", "run_full_sampler", "screen",
]
