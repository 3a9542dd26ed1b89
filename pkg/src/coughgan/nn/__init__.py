"""A small NumPy neural-network kernel: layers with hand-written backward
passes, cross-entropy losses, Adam and a finite-difference checker."""

from .conv import conv2d, conv2d_backward, conv2d_transpose, conv2d_transpose_backward, same_padding
from .gradcheck import GradCheckReport, grad_check
from .layers import (
    Activation,
    BatchNorm,
    Conv2D,
    Conv2DTranspose,
    Dense,
    Dropout,
    Embedding,
    Flatten,
    Layer,
    Reshape,
    Sequential,
    leaky_relu,
    relu,
    sigmoid,
    softmax,
)
from .losses import bce_loss, scce_loss, sigmoid_bce_grad, softmax_scce_grad
from .optim import Adam

__all__ = [
    "Activation", "Adam", "BatchNorm", "Conv2D", "Conv2DTranspose", "Dense", "Dropout",
    "Embedding", "Flatten", "GradCheckReport", "Layer", "Reshape", "Sequential",
    "bce_loss", "conv2d", "conv2d_backward", "conv2d_transpose", "conv2d_transpose_backward",
    "grad_check", "leaky_relu", "relu", "same_padding", "scce_loss", "sigmoid",
    "sigmoid_bce_grad", "softmax", "softmax_scce_grad",
]
