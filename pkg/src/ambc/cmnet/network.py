"""Forward pass, cross-entropy cost, and exact backpropagation.

The pipeline is conv -> ReLU -> conv -> ReLU -> 2x2 max-pool -> flatten
-> dropout -> fc -> ReLU -> dropout -> fc -> softmax.  Score column 0 is
the bit-1 (reflecting) class, column 1 the bit-0 class.  Dropout is
inverted (kept activations are scaled up during training), so evaluation
is a plain deterministic pass.
"""

from __future__ import annotations

import numpy as np

from .arch import CmnetParams
from .backend import get_kernels

__all__ = [
    "forward",
    "conv_features",
    "loss",
    "backward",
    "head_forward",
    "head_backward",
]

LOG_FLOOR = 1e-12


def _as_batch(planes: np.ndarray) -> tuple[np.ndarray, bool]:
    planes = np.ascontiguousarray(planes, dtype=np.float64)
    if planes.ndim == 3:
        return planes[None], True
    if planes.ndim == 4:
        return planes, False
    raise ValueError(f"planes must be (2,M,M) or (B,2,M,M), got {planes.shape}")


def _check_input(params: CmnetParams, planes: np.ndarray) -> None:
    arch = params.arch
    if planes.shape[1:] != (arch.in_channels, arch.m, arch.m):
        raise ValueError(
            f"input shape {planes.shape[1:]} does not match architecture "
            f"({arch.in_channels}, {arch.m}, {arch.m})"
        )


def _pad(x: np.ndarray, arch) -> np.ndarray:
    if arch.padding == "same":
        p = (arch.kernel - 1) // 2
        return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    return x


def _conv_stack(params: CmnetParams, planes: np.ndarray):
    """Run both conv layers and pooling; returns intermediates for backprop.

    ReLU is applied in place on the conv outputs; the kept activations
    double as the masks for backprop (relu(z) > 0 iff z > 0).
    """
    kern = get_kernels()
    arch = params.arch
    x0 = _pad(planes, arch)
    a1 = kern.conv_fwd(x0, params.conv1_w, params.conv1_b)
    np.maximum(a1, 0.0, out=a1)
    a1p = _pad(a1, arch)
    a2 = kern.conv_fwd(a1p, params.conv2_w, params.conv2_b)
    np.maximum(a2, 0.0, out=a2)
    pooled, pool_idx = kern.maxpool_fwd(a2)
    flat = pooled.reshape(pooled.shape[0], -1)
    return x0, a1, a1p, a2, pool_idx, flat


def conv_features(params: CmnetParams, planes: np.ndarray,
                  chunk: int = 512) -> np.ndarray:
    """Deterministic flattened conv/pool features of a batch of plane stacks.

    The convolutional trunk has no dropout, so these features are the
    same in training and evaluation mode; they are what the transfer
    stage caches while the convolutional layers stay frozen.
    """
    batch, _ = _as_batch(planes)
    _check_input(params, batch)
    pieces = []
    for lo in range(0, len(batch), chunk):
        pieces.append(_conv_stack(params, batch[lo : lo + chunk])[-1])
    return np.concatenate(pieces, axis=0)


def _dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray | None:
    if rate <= 0.0:
        return None
    keep = 1.0 - rate
    return (rng.random(shape) >= rate) / keep


def head_forward(
    params: CmnetParams,
    flat: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
):
    """Fully connected head over flattened conv features.

    Returns (scores, cache); scores rows are (p1, p0) softmax pairs.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    arch = params.arch
    if mode == "train":
        if rng is None:
            raise ValueError("training-mode forward needs a random stream for dropout")
        m1 = _dropout_mask(rng, flat.shape, arch.drop_rate1)
        m2 = _dropout_mask(rng, (flat.shape[0], arch.fc1_units), arch.drop_rate2)
    else:
        m1 = m2 = None
    fd = flat if m1 is None else flat * m1
    h1 = fd @ params.fc1_w.T + params.fc1_b
    a3 = np.maximum(h1, 0.0)
    a3d = a3 if m2 is None else a3 * m2
    logits = a3d @ params.fc2_w.T + params.fc2_b
    shifted = logits - logits.max(axis=1, keepdims=True)
    expg = np.exp(shifted)
    scores = expg / expg.sum(axis=1, keepdims=True)
    cache = (flat, m1, fd, h1, a3, m2, a3d)
    return scores, cache


def forward(
    params: CmnetParams,
    planes: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Class scores (p1, p0) for one plane stack or a batch of them."""
    batch, single = _as_batch(planes)
    _check_input(params, batch)
    flat = _conv_stack(params, batch)[-1]
    scores, _ = head_forward(params, flat, mode=mode, rng=rng)
    return scores[0] if single else scores


def loss(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross entropy of (p1, p0) score rows against bit labels."""
    scores = np.atleast_2d(np.asarray(scores, dtype=np.float64))
    labels = np.atleast_1d(np.asarray(labels))
    if len(scores) == 0:
        raise ValueError("loss needs a nonempty batch")
    if scores.shape != (len(labels), 2):
        raise ValueError(f"scores shape {scores.shape} does not match labels")
    z = labels.astype(np.float64)
    p1 = np.maximum(scores[:, 0], LOG_FLOOR)
    p0 = np.maximum(scores[:, 1], LOG_FLOOR)
    return float(-np.mean(z * np.log(p1) + (1.0 - z) * np.log(p0)))


def head_backward(params: CmnetParams, cache, scores, labels):
    """Gradients of the mean cross entropy w.r.t. fc tensors and the flat input."""
    flat, m1, fd, h1, a3, m2, a3d = cache
    k = len(scores)
    z = np.asarray(labels, dtype=np.float64)
    target = np.stack([z, 1.0 - z], axis=1)
    dlogits = (scores - target) / k
    grads = {
        "fc2_w": dlogits.T @ a3d,
        "fc2_b": dlogits.sum(axis=0),
    }
    da3d = dlogits @ params.fc2_w
    da3 = da3d if m2 is None else da3d * m2
    dh1 = da3 * (h1 > 0.0)
    grads["fc1_w"] = dh1.T @ fd
    grads["fc1_b"] = dh1.sum(axis=0)
    dfd = dh1 @ params.fc1_w
    dflat = dfd if m1 is None else dfd * m1
    return grads, dflat


def _crop(dx: np.ndarray, arch) -> np.ndarray:
    if arch.padding == "same":
        p = (arch.kernel - 1) // 2
        return dx[:, :, p:-p, p:-p]
    return dx


def backward(
    params: CmnetParams,
    planes: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator | None = None,
    mode: str = "train",
    need_conv_grads: bool = True,
):
    """One fused forward/backward pass.

    Dropout masks are drawn once from ``rng`` and shared by both passes,
    so the returned gradients are exact for the realized masks.  Returns
    ``(grads, loss_value)`` where ``grads`` maps tensor names to arrays
    (conv entries omitted when ``need_conv_grads`` is false).
    """
    kern = get_kernels()
    arch = params.arch
    batch, _ = _as_batch(planes)
    _check_input(params, batch)
    labels = np.atleast_1d(np.asarray(labels))
    if len(labels) != len(batch):
        raise ValueError("labels and batch disagree in length")

    x0, a1, a1p, a2, pool_idx, flat = _conv_stack(params, batch)
    scores, cache = head_forward(params, flat, mode=mode, rng=rng)
    loss_value = loss(scores, labels)
    grads, dflat = head_backward(params, cache, scores, labels)
    if not need_conv_grads:
        return grads, loss_value

    b = len(batch)
    po = arch.pool_out
    dpooled = np.ascontiguousarray(
        dflat.reshape(b, arch.conv2_filters, po, po)
    )
    dz2 = kern.maxpool_bwd(dpooled, pool_idx, a2.shape[2], a2.shape[3])
    dz2 *= a2 > 0.0
    grads["conv2_w"] = kern.conv_bwd_dw(a1p, dz2)
    grads["conv2_b"] = dz2.sum(axis=(0, 2, 3))
    dz1 = _crop(kern.conv_bwd_dx(dz2, params.conv2_w), arch)
    dz1 *= a1 > 0.0
    grads["conv1_w"] = kern.conv_bwd_dw(x0, dz1)
    grads["conv1_b"] = dz1.sum(axis=(0, 2, 3))
    return grads, loss_value
