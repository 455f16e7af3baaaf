"""Minimal deterministic neural substrate with hand-written gradients.

Only what the workbench's three networks need: dense layers, an LSTM
cell, transposed-convolution upsampling, map softmax, elementwise
activations, MSE / cross-entropy losses, and Adam. Everything is float64
and seeded; there is no global RNG and no GPU.
"""

from .layers import (
    Dense,
    LSTMCell,
    Reshape,
    Scale,
    Sigmoid,
    Softmax2D,
    Tanh,
    TransposedConv2D,
    layer_from_dict,
    layer_to_dict,
)
from .losses import cross_entropy_map, mse_loss
from .network import Network
from .optim import AdamState, adam_step
from .io import load_weights, save_weights

__all__ = [
    "Dense",
    "LSTMCell",
    "Reshape",
    "Scale",
    "Sigmoid",
    "Softmax2D",
    "Tanh",
    "TransposedConv2D",
    "layer_from_dict",
    "layer_to_dict",
    "cross_entropy_map",
    "mse_loss",
    "Network",
    "AdamState",
    "adam_step",
    "load_weights",
    "save_weights",
]
