"""Probabilistic robustness certificates for black-box audio anti-spoofing scorers."""

__version__ = "0.1.0"

from .certifier import (  # noqa: F401
    CertBudget,
    Certificate,
    batch_statistic,
    certify,
    certify_all,
    chernoff_bound,
    chi_square_lower_quantile,
    cv_upper_bound,
    error_probability,
    sample_cv,
)
from .types import AudioClip, Direction  # noqa: F401
