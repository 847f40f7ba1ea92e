"""Reconstruct many-site quantum channels as matrix-product Choi states from local data."""

from __future__ import annotations

__version__ = "0.1.0"

from .mpo import MpoChoi, TruncationPolicy, mpo_from_dense, dense_from_mpo, window_marginal, weight_resolved_diagonals
from .reconstruct import ReconstructionConfig, ReconstructionResult, reconstruct, exact_windows, noisy_windows, shadow_windows
from .recovery import RecoveryMap, SolverParams, fit_recovery, petz_map, rotated_petz_map
from .shadows import WindowEstimate, estimate_window
from .simulate import CircuitSpec, LindbladSpec, EvolutionParams, circuit_choi, lindblad_choi_evolve, sample_records

__all__ = [
    "CircuitSpec",
    "EvolutionParams",
    "LindbladSpec",
    "MpoChoi",
    "ReconstructionConfig",
    "ReconstructionResult",
    "RecoveryMap",
    "SolverParams",
    "TruncationPolicy",
    "WindowEstimate",
    "circuit_choi",
    "dense_from_mpo",
    "estimate_window",
    "exact_windows",
    "fit_recovery",
    "lindblad_choi_evolve",
    "mpo_from_dense",
    "noisy_windows",
    "petz_map",
    "reconstruct",
    "rotated_petz_map",
    "sample_records",
    "shadow_windows",
    "weight_resolved_diagonals",
    "window_marginal",
]
