"""Minimal dense-network math core used by every learned component."""
from ._backend import ACT_RELU, ACT_TANH, BACKEND, kernels
from .adam import AdamState, NonFiniteGradientError, adam_step
from .funcs import (categorical_sample, entropy, entropy_rows,
                    masked_log_softmax, masked_log_softmax_rows,
                    masked_softmax, sigmoid, softplus)
from .io import load_mlp, save_mlp
from .mlp import Mlp, mlp_backward, mlp_forward

__all__ = [
    "ACT_RELU",
    "ACT_TANH",
    "BACKEND",
    "AdamState",
    "Mlp",
    "NonFiniteGradientError",
    "adam_step",
    "categorical_sample",
    "entropy",
    "entropy_rows",
    "kernels",
    "load_mlp",
    "masked_log_softmax",
    "masked_log_softmax_rows",
    "masked_softmax",
    "mlp_backward",
    "mlp_forward",
    "save_mlp",
    "sigmoid",
    "softplus",
]
