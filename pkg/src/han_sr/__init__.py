"""Holistic attention network for single-image super-resolution.

A desk-scale stack: dense tensors with reverse-mode autodiff, the attention
network itself, degradation and patch pipelines, Y-channel metrics, and a CLI.
"""

from .tensor import DimensionError, NonFiniteError, Tape, Tensor
from .model import ConfigError, HanParams, ModelConfig, han_forward, init_params

__all__ = [
    "ConfigError",
    "DimensionError",
    "HanParams",
    "ModelConfig",
    "NonFiniteError",
    "Tape",
    "Tensor",
    "han_forward",
    "init_params",
]

__version__ = "0.1.0"
