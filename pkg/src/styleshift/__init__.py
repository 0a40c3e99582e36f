"""styleshift: multi-style image stylization with pluggable 16-float style codes.

A small fully-convolutional generator adapts to any stored style at
inference time: each style lives in a codebook as a short vector, and tiny
hypernetwork heads expand that vector into per-style depthwise kernels,
normalization scale/shift, and channel gates. Training, frozen-network
incremental style learning, interpolation, and efficiency accounting are
all included, on top of an in-house numpy autodiff core.
"""

from .autograd import Parameter, Tensor, backward, no_grad, tensor
from .codebook import (StyleCodebook, StyleRepresentation, mix_representation,
                       tradeoff_representation)
from .network import NetworkConfig, Stylizer, accounting
from .losses import LossWeights

__version__ = "0.1.0"

__all__ = [
    "Parameter",
    "Tensor",
    "backward",
    "no_grad",
    "tensor",
    "StyleCodebook",
    "StyleRepresentation",
    "mix_representation",
    "tradeoff_representation",
    "NetworkConfig",
    "Stylizer",
    "accounting",
    "LossWeights",
]
