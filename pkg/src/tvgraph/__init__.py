"""Time-varying graph learning from heavy-tailed, incomplete and noisy signals."""

__version__ = "0.1.0"

from .admm import HyperParams, FrameObservation, SolverError, solve_frame, solve_sequence
from .synth import SynthConfig, generate_dataset

__all__ = [
    "HyperParams",
    "FrameObservation",
    "SolverError",
    "solve_frame",
    "solve_sequence",
    "SynthConfig",
    "generate_dataset",
]
