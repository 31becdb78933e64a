"""Convolutional classifier built directly on numpy arrays."""

from faultwave.dcnn.layers import (
    conv2d_backward,
    conv2d_forward,
    dense_softmax_xent,
    maxpool2x2_backward,
    maxpool2x2_forward,
    relu_backward,
    relu_forward,
    softmax,
)
from faultwave.dcnn.modelfile import load_network, save_network
from faultwave.dcnn.network import Network, NetworkConfig, predict
from faultwave.dcnn.train import History, TrainConfig, accuracy, fit, predict_labels

__all__ = [
    "History",
    "Network",
    "NetworkConfig",
    "TrainConfig",
    "accuracy",
    "conv2d_backward",
    "conv2d_forward",
    "dense_softmax_xent",
    "fit",
    "load_network",
    "maxpool2x2_backward",
    "maxpool2x2_forward",
    "predict",
    "predict_labels",
    "relu_backward",
    "relu_forward",
    "save_network",
    "softmax",
]
