"""Sample covariance features and dataset construction.

The detector never sees raw snapshots: each tag symbol is summarized by
its M x M sample covariance matrix (SCM), split into a real plane and an
imaginary plane.  By default the SCM is divided by ``trace / M`` first,
which removes the absolute power scale from the network input; the flag
can be switched off to feed raw covariances.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .sysmodel import SystemParams, TagSymbolSample, sample_channel, generate_tag_symbol

__all__ = [
    "Scm",
    "ScmExample",
    "Dataset",
    "scm",
    "to_planes",
    "build_source_dataset",
    "build_target_dataset",
    "save_dataset",
    "load_dataset",
    "DatasetFormatError",
]

MAGIC = b"AMBCDS1"


class DatasetFormatError(ValueError):
    """Raised for corrupt or mismatched dataset files."""


@dataclass(frozen=True)
class Scm:
    """A Hermitian positive semidefinite sample covariance matrix."""

    r: np.ndarray  # (M, M) complex

    def __post_init__(self):
        r = self.r
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ValueError(f"SCM must be square, got shape {r.shape}")
        if not np.array_equal(r, r.conj().T):
            raise ValueError("SCM storage must be exactly Hermitian")
        tol = 1e-10 * max(np.real(np.trace(r)), 0.0) / r.shape[0]
        eig_min = float(np.linalg.eigvalsh(r)[0])
        if eig_min < -tol:
            raise ValueError(f"SCM not PSD: min eigenvalue {eig_min:g} < -{tol:g}")

    @property
    def m(self) -> int:
        return self.r.shape[0]


@dataclass(frozen=True)
class ScmExample:
    """One labeled network input: (real plane, imaginary plane) and a bit."""

    planes: np.ndarray  # (2, M, M) float64
    label: int

    def __post_init__(self):
        if self.planes.ndim != 3 or self.planes.shape[0] != 2:
            raise ValueError(f"planes must be (2, M, M), got {self.planes.shape}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass
class Dataset:
    """Stacked SCM examples in a fixed order plus their generating scenario."""

    planes: np.ndarray  # (K, 2, M, M) float64
    labels: np.ndarray  # (K,) uint8
    normalize: bool
    meta: Optional[SystemParams] = None

    def __post_init__(self):
        if self.planes.ndim != 4 or self.planes.shape[1] != 2:
            raise ValueError(f"planes must be (K, 2, M, M), got {self.planes.shape}")
        if self.planes.shape[2] != self.planes.shape[3]:
            raise ValueError("SCM planes must be square")
        if len(self.labels) != len(self.planes):
            raise ValueError("labels and planes disagree in length")
        if len(self.planes) == 0:
            raise ValueError("dataset must be nonempty")

    def __len__(self) -> int:
        return len(self.planes)

    @property
    def m(self) -> int:
        return self.planes.shape[2]

    def __getitem__(self, k: int) -> ScmExample:
        return ScmExample(planes=self.planes[k], label=int(self.labels[k]))


def scm(x: np.ndarray) -> Scm:
    """Sample covariance matrix (1/N) sum_n x_n x_n^H of an M x N matrix."""
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError(f"expected 2-D sample matrix, got shape {x.shape}")
    n = x.shape[1]
    if n < 1:
        raise ValueError("sample matrix must have at least one column")
    r = (x @ x.conj().T) / n
    r = 0.5 * (r + r.conj().T)
    return Scm(r=r)


def to_planes(r: Scm, normalize: bool = True) -> np.ndarray:
    """Split an SCM into real/imaginary planes, optionally trace-normalized."""
    mat = r.r
    if normalize:
        scale = np.real(np.trace(mat)) / r.m
        if not scale > 0.0:
            raise ValueError("cannot trace-normalize an SCM with non-positive trace")
        mat = mat / scale
    return np.stack([mat.real, mat.imag]).astype(np.float64, copy=False)


def _planes_batch(x_batch: np.ndarray, normalize: bool) -> np.ndarray:
    """Vectorized SCM + plane split for a (K, M, N) stack of symbol matrices.

    Matches per-example ``to_planes(scm(x))`` output to rounding; used by
    the dataset builders and the frame detector for throughput.
    """
    n = x_batch.shape[2]
    r = np.matmul(x_batch, x_batch.conj().transpose(0, 2, 1)) / n
    r = 0.5 * (r + r.conj().transpose(0, 2, 1))
    if normalize:
        scale = np.trace(r, axis1=1, axis2=2).real / r.shape[1]
        r = r / scale[:, None, None]
    return np.stack([r.real, r.imag], axis=1).astype(np.float64, copy=False)


def build_source_dataset(
    params: SystemParams,
    k_s: int,
    rng: np.random.Generator,
    normalize: bool = True,
) -> Dataset:
    """Offline training set: one fresh i.i.d. channel per example.

    Each example draws its own channel realization, a fair random bit,
    and a single tag symbol, then stores the symbol's SCM planes.
    """
    if k_s < 2:
        raise ValueError(f"source dataset needs k_s >= 2, got {k_s}")
    m, n = params.m, params.n_str
    planes = np.empty((k_s, 2, m, m), dtype=np.float64)
    labels = np.empty(k_s, dtype=np.uint8)
    x_buf = np.empty((k_s, m, n), dtype=np.complex128)
    for k, sub in enumerate(rng.spawn(k_s)):
        label = int(sub.integers(0, 2))
        chan = sample_channel(params, sub)
        sym = generate_tag_symbol(chan, label, params, sub)
        labels[k] = label
        x_buf[k] = sym.x
    planes[:] = _planes_batch(x_buf, normalize)
    return Dataset(planes=planes, labels=labels, normalize=normalize, meta=params)


def build_target_dataset(
    pilot_samples: Sequence[TagSymbolSample],
    k_t: int,
    rng: np.random.Generator,
    normalize: bool = True,
    augment: bool = True,
) -> Dataset:
    """Transfer training set bootstrapped from one frame's pilot block.

    Each example picks a pilot uniformly at random, resamples its N
    snapshot columns with replacement, and inherits the pilot's bit.
    With ``augment=False`` the P raw pilot SCMs are returned unchanged
    (``k_t`` must then equal P).
    """
    p = len(pilot_samples)
    if p == 0:
        raise ValueError("pilot block is empty")
    labels_in = {s.label for s in pilot_samples}
    if labels_in != {0, 1}:
        raise ValueError(
            "pilot block contains only one bit value; transfer learning needs "
            "both hypotheses in the pilots"
        )
    if k_t < p:
        raise ValueError(f"k_t must be >= pilot count {p}, got {k_t}")
    m, n = pilot_samples[0].x.shape
    pilots_x = np.stack([s.x for s in pilot_samples])
    pilots_label = np.array([s.label for s in pilot_samples], dtype=np.uint8)
    if augment:
        pick = rng.integers(0, p, size=k_t)
        cols = rng.integers(0, n, size=(k_t, n))
        x_batch = pilots_x[pick[:, None], :, cols].transpose(0, 2, 1)
        labels = pilots_label[pick]
    else:
        if k_t != p:
            raise ValueError("augment=False requires k_t == number of pilots")
        x_batch = pilots_x
        labels = pilots_label.copy()
    planes = _planes_batch(x_batch, normalize)
    return Dataset(planes=planes, labels=labels, normalize=normalize, meta=None)


# --- flat binary serialization ----------------------------------------------

_HEADER = struct.Struct("<7sIQB")  # magic, M, example count, normalize flag


def save_dataset(ds: Dataset, path) -> None:
    """Write a dataset to the flat little-endian binary format."""
    m = ds.m
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, m, len(ds), 1 if ds.normalize else 0))
        for k in range(len(ds)):
            fh.write(struct.pack("<B", int(ds.labels[k])))
            fh.write(np.ascontiguousarray(ds.planes[k, 0], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(ds.planes[k, 1], dtype="<f8").tobytes())


def load_dataset(path) -> Dataset:
    """Read a dataset written by :func:`save_dataset` (bit-exact)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise DatasetFormatError(f"{path}: truncated header")
    magic, m, count, norm_flag = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DatasetFormatError(f"{path}: bad magic {magic!r}")
    if norm_flag not in (0, 1):
        raise DatasetFormatError(f"{path}: bad normalize flag {norm_flag}")
    plane_bytes = 8 * m * m
    record = 1 + 2 * plane_bytes
    expected = _HEADER.size + count * record
    if len(blob) != expected:
        raise DatasetFormatError(
            f"{path}: expected {expected} bytes for {count} examples, got {len(blob)}"
        )
    planes = np.empty((count, 2, m, m), dtype=np.float64)
    labels = np.empty(count, dtype=np.uint8)
    off = _HEADER.size
    for k in range(count):
        labels[k] = blob[off]
        if labels[k] > 1:
            raise DatasetFormatError(f"{path}: bad label byte {labels[k]} at {k}")
        off += 1
        for plane in range(2):
            planes[k, plane] = np.frombuffer(
                blob, dtype="<f8", count=m * m, offset=off
            ).reshape(m, m)
            off += plane_bytes
    return Dataset(planes=planes, labels=labels, normalize=bool(norm_flag), meta=None)
