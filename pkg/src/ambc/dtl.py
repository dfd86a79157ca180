"""Detection pipeline: offline learning, pilot transfer, online decisions.

Offline learning fits the network on synthetic covariances drawn across
many i.i.d. channels; transfer learning freezes the convolutional trunk
and fine-tunes the fully connected head on a single frame's augmented
pilots; online detection compares the two class scores, which under
equal priors is a likelihood ratio test against threshold one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .features import Dataset, Scm, scm, to_planes, _planes_batch
from .rng import substream
from .cmnet.arch import (
    CmnetArch,
    CmnetParams,
    CONV_TENSOR_NAMES,
    init_params,
    save_params,
    ModelFileError,
    _load_doc,
    _params_from_doc,
)
from .cmnet.network import conv_features, forward, head_forward
from .cmnet.train import TrainConfig, train

__all__ = [
    "DetectorModel",
    "offline_learn",
    "transfer_learn",
    "cmnet_lrt",
    "detect_symbol",
    "detect_batch",
    "save_model",
    "load_model",
]

STAGES = ("pretrained", "transferred")


@dataclass
class DetectorModel:
    """Trained network plus the preprocessing contract it was built under."""

    params: CmnetParams
    stage: str
    normalize: bool
    train_loss: Optional[float] = None

    def __post_init__(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")

    @property
    def arch(self) -> CmnetArch:
        return self.params.arch


def offline_learn(
    d_s: Dataset, config: TrainConfig, arch: CmnetArch | None = None
) -> DetectorModel:
    """Fit a fresh network on the source-domain dataset (no freezing)."""
    if config.freeze_conv:
        raise ValueError("offline learning trains all layers; freeze_conv must be off")
    if arch is None:
        arch = CmnetArch.for_antennas(d_s.m)
    params = init_params(arch, substream(config.seed, "init"))
    result = train(params, d_s, config)
    return DetectorModel(
        params=result.params,
        stage="pretrained",
        normalize=d_s.normalize,
        train_loss=result.final_loss,
    )


def transfer_learn(
    pretrained: DetectorModel, d_t: Dataset, config: TrainConfig
) -> DetectorModel:
    """Fine-tune the fc head on a frame's pilot dataset, conv trunk frozen."""
    if pretrained.stage != "pretrained":
        raise ValueError(f"expected a pretrained model, got stage {pretrained.stage!r}")
    if not config.freeze_conv:
        raise ValueError("transfer learning requires freeze_conv")
    if d_t.normalize != pretrained.normalize:
        raise ValueError(
            "target dataset normalization does not match the pretrained model"
        )
    result = train(pretrained.params, d_t, config)
    for name in CONV_TENSOR_NAMES:
        if not np.array_equal(getattr(result.params, name), getattr(pretrained.params, name)):
            raise RuntimeError(f"frozen tensor {name} changed during transfer")
    return DetectorModel(
        params=result.params,
        stage="transferred",
        normalize=pretrained.normalize,
        train_loss=result.final_loss,
    )


def cmnet_lrt(model: DetectorModel, r: Scm) -> float:
    """Class-score ratio p1/p0 of one SCM; equals the LRT under equal priors."""
    scores = forward(model.params, to_planes(r, model.normalize), mode="eval")
    with np.errstate(divide="ignore"):
        return float(scores[0] / scores[1])


def detect_symbol(model: DetectorModel, x: np.ndarray) -> int:
    """Decide one tag bit from its M x N sample matrix (ratio 1 breaks to 0)."""
    return 1 if cmnet_lrt(model, scm(x)) > 1.0 else 0


def detect_batch(model: DetectorModel, x_batch: np.ndarray) -> np.ndarray:
    """Decide a (K, M, N) stack of symbols in one pass.

    Same decision rule as :func:`detect_symbol`: bit 1 iff the bit-1
    score strictly exceeds the bit-0 score.
    """
    planes = _planes_batch(np.asarray(x_batch), model.normalize)
    flat = conv_features(model.params, planes)
    scores, _ = head_forward(model.params, flat, mode="eval")
    return (scores[:, 0] > scores[:, 1]).astype(np.int64)


# --- model files -------------------------------------------------------------


def save_model(model: DetectorModel, path) -> None:
    """Persist params plus the detector stage/normalization snapshot."""
    save_params(
        model.params,
        path,
        extra={"detector": {"stage": model.stage, "normalize": model.normalize}},
    )


def load_model(path, expect: CmnetArch | None = None) -> DetectorModel:
    """Load a model file written by :func:`save_model`."""
    doc = _load_doc(path)
    params = _params_from_doc(doc, path, expect=expect)
    meta = doc.get("detector")
    if not isinstance(meta, dict) or "stage" not in meta or "normalize" not in meta:
        raise ModelFileError(f"{path}: missing detector metadata block")
    stage = meta["stage"]
    if stage not in STAGES:
        raise ModelFileError(f"{path}: bad detector stage {stage!r}")
    return DetectorModel(params=params, stage=stage, normalize=bool(meta["normalize"]))
