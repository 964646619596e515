"""Random Fourier feature approximation of kernel derivatives."""

__version__ = "0.1.0"

from .bounds import BoundInputs, BoundReport, lr_bound, required_m, uniform_bound
from .features import FeatureMap, approx_derivative, approx_gram, phase_derivative
from .harness import GridSpec, diameter_study, rate_study, sup_error, validate_bound
from .oracle import KernelOracle
from .spectral import (
    Gaussian,
    GeneralizedGaussian,
    SpectralMeasure,
    abs_moment,
    appendix_K,
    bernstein_check,
    bernstein_ratio,
    c_pq,
    sample,
    sigma_pq,
)

__all__ = [
    "BoundInputs",
    "BoundReport",
    "FeatureMap",
    "Gaussian",
    "GeneralizedGaussian",
    "GridSpec",
    "KernelOracle",
    "SpectralMeasure",
    "abs_moment",
    "appendix_K",
    "approx_derivative",
    "approx_gram",
    "bernstein_check",
    "bernstein_ratio",
    "c_pq",
    "diameter_study",
    "lr_bound",
    "phase_derivative",
    "rate_study",
    "required_m",
    "sample",
    "sigma_pq",
    "sup_error",
    "uniform_bound",
    "validate_bound",
]
