"""GP-surrogate ABC with batch-sequential experimental design and posterior
uncertainty quantification."""

from .acquisition import AcquisitionKind, CandidateBatch, IntegrationBackend
from .belief import ThresholdedBelief
from .errors import (
    ConfigError,
    DegenerateWeightsError,
    DomainError,
    GpAbcError,
    IllConditionedError,
    OptimizationError,
    SimulatorError,
)
from .gp import BasisSpec, DiscrepancyDataset, GpHyper, GpPosterior, HyperPriors, fit
from .harness import ExperimentConfig, GridDensity, RunRecord, run_inference
from .priors import BoxPrior
from .sampling import McmcConfig, WeightedSamples
from .simulators import GkParams, MahalanobisSpec, SimulatorSpec, get_simulator
from .uq import PosteriorEnsemble, UqConfig

__version__ = "0.1.0"

__all__ = [
    "AcquisitionKind",
    "BasisSpec",
    "BoxPrior",
    "CandidateBatch",
    "ConfigError",
    "DegenerateWeightsError",
    "DiscrepancyDataset",
    "DomainError",
    "ExperimentConfig",
    "GkParams",
    "GpAbcError",
    "GpHyper",
    "GpPosterior",
    "GridDensity",
    "HyperPriors",
    "IllConditionedError",
    "IntegrationBackend",
    "MahalanobisSpec",
    "McmcConfig",
    "OptimizationError",
    "PosteriorEnsemble",
    "RunRecord",
    "SimulatorError",
    "SimulatorSpec",
    "ThresholdedBelief",
    "UqConfig",
    "WeightedSamples",
    "fit",
    "get_simulator",
    "run_inference",
]
