"""Covariance-matrix CNN: architecture, kernels, training, serialization."""

from .arch import (
    CmnetArch,
    CmnetParams,
    init_params,
    save_params,
    load_params,
    ModelFileError,
    ArchMismatchError,
)
from .backend import active_backend, get_kernels, set_backend
from .network import forward, conv_features, loss, backward
from .train import TrainConfig, TrainResult, train
