"""Spin boson model with magnetic field: path-integral Monte Carlo and Fock-space oracle."""

__version__ = "0.1.0"

from .model import ContinuousModel, ModeSet, NuProfile, discretize, validate_hypotheses
from .kernel import ExpSumKernel
from .paths import SpinPath, sample_path
from .stats import Estimate
from .gibbs import GibbsParams

__all__ = [
    "ContinuousModel",
    "ModeSet",
    "NuProfile",
    "discretize",
    "validate_hypotheses",
    "ExpSumKernel",
    "SpinPath",
    "sample_path",
    "Estimate",
    "GibbsParams",
    "__version__",
]
