"""Complex-valued convolutional classifier written directly in numpy."""

from .layers import (
    ComplexTensor,
    complex_batchnorm,
    complex_conv1d,
    complex_silu,
    complex_to_real,
    conv_output_length,
    cross_entropy,
    softmax,
)
from .network import (
    NetworkConfig,
    NetworkParams,
    backward,
    forward,
    init_params,
    load_checkpoint,
    loss_and_grads,
    save_checkpoint,
)
from .training import EvalResult, KFoldResult, TrainConfig, TrainResult, evaluate, fit, kfold, train

__all__ = [
    "ComplexTensor", "complex_batchnorm", "complex_conv1d", "complex_silu", "complex_to_real",
    "conv_output_length", "cross_entropy", "softmax",
    "NetworkConfig", "NetworkParams", "backward", "forward", "init_params", "load_checkpoint",
    "loss_and_grads", "save_checkpoint",
    "EvalResult", "KFoldResult", "TrainConfig", "TrainResult", "evaluate", "fit", "kfold", "train",
]
