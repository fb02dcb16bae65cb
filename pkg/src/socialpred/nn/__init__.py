"""A small numpy network stack: 1-D convolutions, pooling, losses and AmsGrad."""

from .functional import (
    conv1d,
    conv1d_grad,
    conv_transpose1d,
    conv_transpose1d_grad,
    dropout,
    maxpool1d,
    maxpool1d_grad,
    relu,
    sigmoid,
)
from .gradcheck import GradCheckReport, grad_check
from .layers import Conv1d, ConvTranspose1d, Dropout, MaxPool1d, ReLU, Sequential, Sigmoid
from .losses import bce_loss, l1_penalty, mse_loss
from .optim import AmsGrad

__all__ = [
    "AmsGrad",
    "Conv1d",
    "ConvTranspose1d",
    "Dropout",
    "GradCheckReport",
    "MaxPool1d",
    "ReLU",
    "Sequential",
    "Sigmoid",
    "bce_loss",
    "conv1d",
    "conv1d_grad",
    "conv_transpose1d",
    "conv_transpose1d_grad",
    "dropout",
    "grad_check",
    "l1_penalty",
    "maxpool1d",
    "maxpool1d_grad",
    "mse_loss",
    "relu",
    "sigmoid",
]
