"""Simulation of entanglement-swapping relay chains with realistic sources and detectors."""

from .analysis import (
    AnalyzerAngles,
    CoincidenceResult,
    EnsembleState,
    PosteriorUnderflow,
    VisibilityResult,
    analyzer_distribution,
    coincidence_q,
    posterior,
    visibility_sweep,
)
from .chain import (
    ChainSpec,
    IndexAssignment,
    TopologyMap,
    enumerate_constrained,
    general_n_ket,
    ideal_swap_state,
    n2_conditioned_ket,
    normalized,
    transition_amplitude,
)
from .detector import DetectorModel, Family, LossModel, OutcomeTuple, loss_to_eta, perfect_detector
from .source import SourceParams, TruncationConfig

__all__ = [
    "AnalyzerAngles",
    "ChainSpec",
    "CoincidenceResult",
    "DetectorModel",
    "EnsembleState",
    "Family",
    "IndexAssignment",
    "LossModel",
    "OutcomeTuple",
    "PosteriorUnderflow",
    "SourceParams",
    "TopologyMap",
    "TruncationConfig",
    "VisibilityResult",
    "analyzer_distribution",
    "coincidence_q",
    "enumerate_constrained",
    "general_n_ket",
    "ideal_swap_state",
    "loss_to_eta",
    "n2_conditioned_ket",
    "normalized",
    "perfect_detector",
    "posterior",
    "transition_amplitude",
    "visibility_sweep",
]
