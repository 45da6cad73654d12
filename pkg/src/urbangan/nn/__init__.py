from .gradcheck import grad_check, grad_check_report, check_parameters, projection_loss, squared_loss
from .layers import (BatchNorm, Conv2d, ConvTranspose2d, Layer, LayerSpec, LeakyReLU, Linear,
                     Parameter, ReLU, Reshape, Sigmoid, Tanh, make_layer)
from .network import Network
from .optim import AdamState, adam_step

__all__ = [
    "AdamState", "BatchNorm", "Conv2d", "ConvTranspose2d", "Layer", "LayerSpec", "LeakyReLU", "Linear",
    "Network", "Parameter", "ReLU", "Reshape", "Sigmoid", "Tanh", "adam_step", "check_parameters",
    "grad_check", "grad_check_report", "make_layer", "projection_loss", "squared_loss",
]
