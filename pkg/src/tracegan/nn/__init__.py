from .layers import (
    Conv2d,
    InstanceNorm,
    Layer,
    LeakyReLU,
    Linear,
    ReLU,
    ResidualBlock,
    Sequential,
    Sigmoid,
    Tanh,
    TransposedConv2d,
    WEIGHT_STD,
    sigmoid,
)
from .adam import Adam
from .gradcheck import finite_difference_check, draw_input_clear_of_kinks, relative_errors

__all__ = [
    "Adam",
    "Conv2d",
    "InstanceNorm",
    "Layer",
    "LeakyReLU",
    "Linear",
    "ReLU",
    "ResidualBlock",
    "Sequential",
    "Sigmoid",
    "Tanh",
    "TransposedConv2d",
    "WEIGHT_STD",
    "sigmoid",
    "finite_difference_check",
    "draw_input_clear_of_kinks",
    "relative_errors",
]
