"""Mini-batch training with adaptive moment estimation.

When the convolutional layers are frozen the trunk is evaluated once per
example and only the fully connected head is optimized, which is exactly
equivalent to running the full network with zero conv updates (the trunk
is deterministic: all dropout sits in the head).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..features import Dataset
from ..rng import substream
from .arch import CmnetParams, FC_TENSOR_NAMES, TENSOR_NAMES
from .network import backward, conv_features, head_backward, head_forward, loss as loss_fn

__all__ = ["TrainConfig", "TrainResult", "train"]

OPTIMIZERS = ("adam", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training stage (offline or transfer)."""

    epochs: int
    batch_size: int = 128
    learning_rate: float = 1e-3
    freeze_conv: bool = False
    seed: int = 0
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")


@dataclass
class TrainResult:
    """Updated parameters plus the recorded per-epoch mean training loss."""

    params: CmnetParams
    epoch_losses: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.epoch_losses[-1]


class _Optimizer:
    def __init__(self, config: TrainConfig, names):
        self.config = config
        self.names = tuple(names)
        self.step_count = 0
        self.m = {}
        self.v = {}

    def step(self, params: CmnetParams, grads: dict) -> None:
        cfg = self.config
        self.step_count += 1
        if cfg.optimizer == "sgd":
            for name in self.names:
                getattr(params, name)[...] -= cfg.learning_rate * grads[name]
            return
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        bc1 = 1.0 - b1**self.step_count
        bc2 = 1.0 - b2**self.step_count
        for name in self.names:
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + cfg.adam_eps)
            getattr(params, name)[...] -= cfg.learning_rate * update


def train(params: CmnetParams, data: Dataset, config: TrainConfig) -> TrainResult:
    """Run ``config.epochs`` shuffled passes over ``data``.

    The input parameters are left untouched; a trained copy is returned.
    With ``freeze_conv`` only fc tensors are updated and the conv tensors
    of the result are bitwise identical to the input's.
    """
    if data.m != params.arch.m:
        raise ValueError(
            f"dataset dimension M={data.m} does not match architecture M={params.arch.m}"
        )
    if not np.isin(data.labels, (0, 1)).all():
        raise ValueError("training labels must be bits")
    params = params.copy()
    rng = substream(config.seed, "train")
    names = FC_TENSOR_NAMES if config.freeze_conv else TENSOR_NAMES
    opt = _Optimizer(config, names)
    k = len(data)
    labels = data.labels.astype(np.float64)

    flat_all = conv_features(params, data.planes) if config.freeze_conv else None

    epoch_losses = []
    for _ in range(config.epochs):
        perm = rng.permutation(k)
        sq_sum = 0.0
        for lo in range(0, k, config.batch_size):
            pick = perm[lo : lo + config.batch_size]
            batch_labels = labels[pick]
            if config.freeze_conv:
                scores, cache = head_forward(
                    params, flat_all[pick], mode="train", rng=rng
                )
                batch_loss = loss_fn(scores, batch_labels)
                grads, _ = head_backward(params, cache, scores, batch_labels)
            else:
                grads, batch_loss = backward(
                    params, data.planes[pick], batch_labels, rng=rng, mode="train"
                )
            opt.step(params, grads)
            sq_sum += batch_loss * len(pick)
        epoch_losses.append(sq_sum / k)
    return TrainResult(params=params, epoch_losses=epoch_losses)
