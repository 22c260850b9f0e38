"""Adjoint sensitivities for diffusion-model sampling on a 2-D toy.

Arrays are (dim, batch): one sample per column.
"""

from ._core import (
    AdjdError,
    Denoiser,
    NoiseSchedule,
    adjoint_gradients,
    commands,
    default_config,
    initial_noise,
    normalize_config,
    run,
    sample,
)

__all__ = [
    "AdjdError",
    "Denoiser",
    "NoiseSchedule",
    "adjoint_gradients",
    "commands",
    "default_config",
    "initial_noise",
    "normalize_config",
    "run",
    "sample",
]
