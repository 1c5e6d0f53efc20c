"""Exception types shared across the package."""

import numpy as np


class ConfigError(ValueError):
    """Invalid analysis configuration or inputs (CLI exit code 2)."""


class NumericalError(np.linalg.LinAlgError):
    """Factorization or estimation failure (CLI exit code 3)."""
