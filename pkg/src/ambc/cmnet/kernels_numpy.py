"""Pure-numpy convolution and pooling kernels (BLAS-backed fallback).

Convolutions are lowered to GEMM over explicitly materialized tap
columns; the column layout keeps every copy a contiguous row transfer.
All kernels operate in 'valid' mode on float64 NCHW batches; zero
padding for 'same' convolutions is applied by the caller.
"""

from __future__ import annotations

import numpy as np

__all__ = ["conv_fwd", "conv_bwd_dx", "conv_bwd_dw", "maxpool_fwd", "maxpool_bwd"]


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """(B,C,H,W) -> (C*kh*kw, B*Ho*Wo) tap-major column matrix."""
    b, c, h, w = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    cols = np.empty((c, kh, kw, b, ho, wo), dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            cols[:, u, v] = x[:, :, u : u + ho, v : v + wo].transpose(1, 0, 2, 3)
    return cols.reshape(c * kh * kw, b * ho * wo)


def conv_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Valid cross-correlation: (B,Ci,H,W) x (Co,Ci,k,k) -> (B,Co,Ho,Wo)."""
    bsz, _, h, wd = x.shape
    co, ci, kh, kw = w.shape
    ho, wo = h - kh + 1, wd - kw + 1
    cols = _im2col(x, kh, kw)
    out = (w.reshape(co, ci * kh * kw) @ cols).reshape(co, bsz, ho, wo)
    out += b[:, None, None, None]
    return np.ascontiguousarray(out.transpose(1, 0, 2, 3))


def conv_bwd_dx(dout: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the conv input: full correlation with flipped taps."""
    bsz, co, ho, wo = dout.shape
    _, ci, kh, kw = w.shape
    pad_h, pad_w = kh - 1, kw - 1
    dpad = np.pad(dout, ((0, 0), (0, 0), (pad_h, pad_h), (pad_w, pad_w)))
    cols = _im2col(dpad, kh, kw)
    wf = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    h, wd = ho + kh - 1, wo + kw - 1
    dx = (wf.reshape(ci, co * kh * kw) @ cols).reshape(ci, bsz, h, wd)
    return np.ascontiguousarray(dx.transpose(1, 0, 2, 3))


def conv_bwd_dw(x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the conv taps, summed over the batch."""
    bsz, ci, h, wd = x.shape
    co, ho, wo = dout.shape[1], dout.shape[2], dout.shape[3]
    kh, kw = h - ho + 1, wd - wo + 1
    cols = _im2col(x, kh, kw)
    dmat = np.ascontiguousarray(dout.transpose(1, 0, 2, 3)).reshape(co, bsz * ho * wo)
    return (dmat @ cols.T).reshape(co, ci, kh, kw)


def maxpool_fwd(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 stride-2 max pooling (floor); returns output and winner index 0..3."""
    b, c, h, w = x.shape
    ho, wo = h // 2, w // 2
    win = (
        x[:, :, : 2 * ho, : 2 * wo]
        .reshape(b, c, ho, 2, wo, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, ho, wo, 4)
    )
    idx = win.argmax(axis=-1).astype(np.uint8)
    out = np.take_along_axis(win, idx[..., None].astype(np.int64), axis=-1)[..., 0]
    return out, idx


def maxpool_bwd(dout: np.ndarray, idx: np.ndarray, h: int, w: int) -> np.ndarray:
    """Route pooled gradients back to the winning window element."""
    b, c, ho, wo = dout.shape
    dwin = np.zeros((b, c, ho, wo, 4), dtype=np.float64)
    np.put_along_axis(dwin, idx[..., None].astype(np.int64), dout[..., None], axis=-1)
    dx = np.zeros((b, c, h, w), dtype=np.float64)
    dx[:, :, : 2 * ho, : 2 * wo] = (
        dwin.reshape(b, c, ho, wo, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(b, c, 2 * ho, 2 * wo)
    )
    return dx
