"""Minimal dense neural-network core."""

from .autograd import Tensor, grad, no_grad
from .mlp import (
    AdamState,
    BatchNorm,
    Head,
    Layer,
    Mlp,
    NoiseSpec,
    Tape,
    adam_step,
    apply_step,
    backward,
    forward,
    gradient_penalty,
    penalty_tensor,
)

__all__ = [
    "AdamState", "BatchNorm", "Head", "Layer", "Mlp", "NoiseSpec", "Tape", "Tensor",
    "adam_step", "apply_step", "backward", "forward", "grad", "gradient_penalty", "no_grad",
    "penalty_tensor",
]
