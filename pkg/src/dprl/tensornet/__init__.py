"""Dense networks with exact reverse-mode gradients, optimizers and EMA."""
from . import autodiff
from .autodiff import Var
from .dense import (
    ACTIVATIONS,
    DenseNet,
    DimensionError,
    FourierTimeEmbedding,
    NonFiniteError,
    forward,
    grad,
)
from .optim import Optimizer, clip_grad_norm, ema_update, optimizer_step

__all__ = [
    "ACTIVATIONS",
    "DenseNet",
    "DimensionError",
    "FourierTimeEmbedding",
    "NonFiniteError",
    "Optimizer",
    "Var",
    "autodiff",
    "clip_grad_norm",
    "ema_update",
    "forward",
    "grad",
    "optimizer_step",
]
