"""Network architecture, parameter container, initialization, and model files."""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

__all__ = [
    "CmnetArch",
    "CmnetParams",
    "init_params",
    "save_params",
    "load_params",
    "ModelFileError",
    "ArchMismatchError",
    "TENSOR_NAMES",
]

TENSOR_NAMES = (
    "conv1_w", "conv1_b", "conv2_w", "conv2_b",
    "fc1_w", "fc1_b", "fc2_w", "fc2_b",
)

FC_TENSOR_NAMES = ("fc1_w", "fc1_b", "fc2_w", "fc2_b")
CONV_TENSOR_NAMES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b")

_FORMAT = "cmnet-params"
_VERSION = 1


class ModelFileError(ValueError):
    """Raised for unreadable, corrupt, or malformed model files."""


class ArchMismatchError(ModelFileError):
    """Raised when a model file's architecture differs from the expected one."""


@dataclass(frozen=True)
class CmnetArch:
    """Fixed two-conv / two-fc topology over (2, M, M) covariance planes.

    ``dropout1`` / ``dropout2`` are drop probabilities by default; set
    ``dropout_is_keep_prob`` to read them as keep probabilities instead.
    """

    m: int
    in_channels: int = 2
    conv1_filters: int = 64
    conv2_filters: int = 64
    kernel: int = 3
    pool: int = 2
    fc1_units: int = 128
    n_classes: int = 2
    dropout1: float = 0.5
    dropout2: float = 0.25
    padding: str = "valid"
    dropout_is_keep_prob: bool = False

    def __post_init__(self):
        if self.padding not in ("valid", "same"):
            raise ValueError(f"padding must be 'valid' or 'same', got {self.padding!r}")
        if self.m < 1:
            raise ValueError(f"input dimension must be >= 1, got {self.m}")
        for name in ("dropout1", "dropout2"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0 or (self.dropout_is_keep_prob and rate <= 0.0):
                raise ValueError(f"{name} must lie in [0, 1), got {rate}")
        if self.pool_out < 1:
            raise ValueError(
                f"M={self.m} with {self.padding!r} padding collapses below the "
                f"{self.pool}x{self.pool} pooling window; use 'same' padding or "
                "a larger array"
            )

    @property
    def conv1_out(self) -> int:
        return self.m if self.padding == "same" else self.m - self.kernel + 1

    @property
    def conv2_out(self) -> int:
        return self.conv1_out if self.padding == "same" else self.conv1_out - self.kernel + 1

    @property
    def pool_out(self) -> int:
        return self.conv2_out // self.pool

    @property
    def flatten_len(self) -> int:
        return self.conv2_filters * self.pool_out * self.pool_out

    @property
    def drop_rate1(self) -> float:
        return 1.0 - self.dropout1 if self.dropout_is_keep_prob else self.dropout1

    @property
    def drop_rate2(self) -> float:
        return 1.0 - self.dropout2 if self.dropout_is_keep_prob else self.dropout2

    @classmethod
    def for_antennas(cls, m: int, **kw) -> "CmnetArch":
        """Default architecture for an M-antenna reader.

        Valid padding matches the self-consistent published pipeline; for
        arrays too small to survive two unpadded 3x3 convolutions plus
        pooling, zero padding keeps the spatial size instead.
        """
        if "padding" not in kw:
            kw["padding"] = "valid" if m - 2 * (cls.kernel - 1) >= cls.pool else "same"
        return cls(m=m, **kw)

    def tensor_shapes(self) -> dict[str, tuple[int, ...]]:
        k = self.kernel
        return {
            "conv1_w": (self.conv1_filters, self.in_channels, k, k),
            "conv1_b": (self.conv1_filters,),
            "conv2_w": (self.conv2_filters, self.conv1_filters, k, k),
            "conv2_b": (self.conv2_filters,),
            "fc1_w": (self.fc1_units, self.flatten_len),
            "fc1_b": (self.fc1_units,),
            "fc2_w": (self.n_classes, self.fc1_units),
            "fc2_b": (self.n_classes,),
        }


@dataclass
class CmnetParams:
    """All trainable tensors plus the architecture they belong to."""

    arch: CmnetArch
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray

    def __post_init__(self):
        shapes = self.arch.tensor_shapes()
        for name in TENSOR_NAMES:
            arr = getattr(self, name)
            if arr.shape != shapes[name]:
                raise ValueError(
                    f"{name} has shape {arr.shape}, expected {shapes[name]}"
                )
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contains non-finite entries")

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TENSOR_NAMES}

    def copy(self) -> "CmnetParams":
        return CmnetParams(
            arch=self.arch, **{n: getattr(self, n).copy() for n in TENSOR_NAMES}
        )


def init_params(arch: CmnetArch, rng: np.random.Generator) -> CmnetParams:
    """He-style initialization: weights ~ N(0, 2/fan_in), zero biases."""
    shapes = arch.tensor_shapes()
    tensors = {}
    for name in TENSOR_NAMES:
        shape = shapes[name]
        if name.endswith("_b"):
            tensors[name] = np.zeros(shape, dtype=np.float64)
        else:
            fan_in = int(np.prod(shape[1:]))
            tensors[name] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    return CmnetParams(arch=arch, **tensors)


def _arch_to_dict(arch: CmnetArch) -> dict:
    return asdict(arch)


def _arch_from_dict(d: dict) -> CmnetArch:
    try:
        return CmnetArch(**d)
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f"bad architecture block: {exc}") from exc


def save_params(params: CmnetParams, path, extra: dict | None = None) -> None:
    """Write parameters as a versioned JSON document (lossless float64)."""
    doc = {
        "format": _FORMAT,
        "version": _VERSION,
        "arch": _arch_to_dict(params.arch),
        "tensors": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in params.tensors().items()
        },
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, allow_nan=False)


def _load_doc(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"corrupt model file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != _FORMAT:
        raise ModelFileError(f"{path} is not a cmnet parameter file")
    if doc.get("version") != _VERSION:
        raise ModelFileError(f"unsupported model file version {doc.get('version')}")
    return doc


def load_params(path, expect: CmnetArch | None = None) -> CmnetParams:
    """Read a model file back, verifying shapes (and ``expect`` if given)."""
    return _params_from_doc(_load_doc(path), path, expect)


def _params_from_doc(doc: dict, path, expect: CmnetArch | None = None) -> CmnetParams:
    arch = _arch_from_dict(doc.get("arch", {}))
    if expect is not None and arch != expect:
        raise ArchMismatchError(
            f"model file architecture {arch} does not match expected {expect}"
        )
    raw = doc.get("tensors")
    if not isinstance(raw, dict):
        raise ModelFileError(f"{path}: missing tensors block")
    shapes = arch.tensor_shapes()
    tensors = {}
    for name in TENSOR_NAMES:
        entry = raw.get(name)
        if entry is None:
            raise ModelFileError(f"{path}: missing tensor {name!r}")
        shape = tuple(entry.get("shape", ()))
        if shape != shapes[name]:
            raise ArchMismatchError(
                f"{path}: tensor {name} has shape {shape}, expected {shapes[name]}"
            )
        data = np.asarray(entry.get("data", []), dtype=np.float64)
        if data.size != int(np.prod(shape)):
            raise ModelFileError(f"{path}: tensor {name} data length mismatch")
        if not np.isfinite(data).all():
            raise ModelFileError(f"{path}: tensor {name} has non-finite entries")
        tensors[name] = data.reshape(shape)
    return CmnetParams(arch=arch, **tensors)
