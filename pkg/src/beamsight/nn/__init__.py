from .gradcheck import GradCheckError, grad_check
from .layers import (Conv2D, Dense, Dropout, Flatten, Layer, MaxPool2D,
                     ShapeError, Softmax, glorot_uniform)
from .losses import cross_entropy, cross_entropy_batch, cross_entropy_grad
from .network import Network, StateError, assert_finite
from .optim import Adam, GradientError

__all__ = [
    "Adam", "Conv2D", "Dense", "Dropout", "Flatten", "GradCheckError",
    "GradientError", "Layer", "MaxPool2D", "Network", "ShapeError",
    "Softmax", "StateError", "assert_finite", "cross_entropy",
    "cross_entropy_batch", "cross_entropy_grad", "glorot_uniform", "grad_check",
]
