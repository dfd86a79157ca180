"""Numba-JIT convolution and pooling kernels (default hot path).

Same contracts as :mod:`.kernels_numpy`.  The 3x3 tap case (the only
size the published architecture uses) runs a register-blocked stencil;
other sizes fall back to generic loops.  Batch items are processed in
parallel; every write target is disjoint per batch item and the tap
gradient is reduced serially afterwards, so results do not depend on
the thread count.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

__all__ = ["conv_fwd", "conv_bwd_dx", "conv_bwd_dw", "maxpool_fwd", "maxpool_bwd"]


@njit(parallel=True, fastmath=True, cache=True)
def _conv_fwd_impl(x, w, b):
    bsz, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    ho = h - kh + 1
    wo = wd - kw + 1
    fast3 = kh == 3 and kw == 3
    out = np.empty((bsz, cout, ho, wo), dtype=np.float64)
    for bi in prange(bsz):
        for co in range(cout):
            o = out[bi, co]
            o[:, :] = b[co]
            for ci in range(cin):
                xc = x[bi, ci]
                if fast3:
                    w00 = w[co, ci, 0, 0]
                    w01 = w[co, ci, 0, 1]
                    w02 = w[co, ci, 0, 2]
                    w10 = w[co, ci, 1, 0]
                    w11 = w[co, ci, 1, 1]
                    w12 = w[co, ci, 1, 2]
                    w20 = w[co, ci, 2, 0]
                    w21 = w[co, ci, 2, 1]
                    w22 = w[co, ci, 2, 2]
                    for i in range(ho):
                        r0 = xc[i]
                        r1 = xc[i + 1]
                        r2 = xc[i + 2]
                        oi = o[i]
                        for j in range(wo):
                            oi[j] += (
                                w00 * r0[j] + w01 * r0[j + 1] + w02 * r0[j + 2]
                                + w10 * r1[j] + w11 * r1[j + 1] + w12 * r1[j + 2]
                                + w20 * r2[j] + w21 * r2[j + 1] + w22 * r2[j + 2]
                            )
                else:
                    for i in range(ho):
                        oi = o[i]
                        for u in range(kh):
                            ru = xc[i + u]
                            for v in range(kw):
                                wv = w[co, ci, u, v]
                                for j in range(wo):
                                    oi[j] += wv * ru[j + v]
    return out


def conv_fwd(x, w, b):
    return _conv_fwd_impl(x, w, b)


@njit(parallel=True, fastmath=True, cache=True)
def _conv_bwd_dx_impl(dout, w):
    bsz, cout, ho, wo = dout.shape
    _, cin, kh, kw = w.shape
    h = ho + kh - 1
    wd = wo + kw - 1
    fast3 = kh == 3 and kw == 3
    # full correlation with flipped taps == stencil over zero-padded dout
    dpad = np.zeros((bsz, cout, ho + 2 * (kh - 1), wo + 2 * (kw - 1)), dtype=np.float64)
    for bi in prange(bsz):
        for co in range(cout):
            dpad[bi, co, kh - 1 : kh - 1 + ho, kw - 1 : kw - 1 + wo] = dout[bi, co]
    dx = np.empty((bsz, cin, h, wd), dtype=np.float64)
    for bi in prange(bsz):
        for ci in range(cin):
            d = dx[bi, ci]
            d[:, :] = 0.0
            for co in range(cout):
                dc = dpad[bi, co]
                if fast3:
                    w00 = w[co, ci, 2, 2]
                    w01 = w[co, ci, 2, 1]
                    w02 = w[co, ci, 2, 0]
                    w10 = w[co, ci, 1, 2]
                    w11 = w[co, ci, 1, 1]
                    w12 = w[co, ci, 1, 0]
                    w20 = w[co, ci, 0, 2]
                    w21 = w[co, ci, 0, 1]
                    w22 = w[co, ci, 0, 0]
                    for i in range(h):
                        r0 = dc[i]
                        r1 = dc[i + 1]
                        r2 = dc[i + 2]
                        di = d[i]
                        for j in range(wd):
                            di[j] += (
                                w00 * r0[j] + w01 * r0[j + 1] + w02 * r0[j + 2]
                                + w10 * r1[j] + w11 * r1[j + 1] + w12 * r1[j + 2]
                                + w20 * r2[j] + w21 * r2[j + 1] + w22 * r2[j + 2]
                            )
                else:
                    for i in range(h):
                        di = d[i]
                        for u in range(kh):
                            ru = dc[i + u]
                            for v in range(kw):
                                wv = w[co, ci, kh - 1 - u, kw - 1 - v]
                                for j in range(wd):
                                    di[j] += wv * ru[j + v]
    return dx


def conv_bwd_dx(dout, w):
    return _conv_bwd_dx_impl(dout, w)


@njit(parallel=True, fastmath=True, cache=True)
def _conv_bwd_dw_impl(x, dout):
    bsz, cin, h, wd = x.shape
    cout, ho, wo = dout.shape[1], dout.shape[2], dout.shape[3]
    kh = h - ho + 1
    kw = wd - wo + 1
    fast3 = kh == 3 and kw == 3
    dw = np.empty((cout, cin, kh, kw), dtype=np.float64)
    # parallel over output channels: each (co, ci, u, v) cell is owned by
    # one thread and reduced serially over the batch
    for co in prange(cout):
        for ci in range(cin):
            if fast3:
                a00 = 0.0
                a01 = 0.0
                a02 = 0.0
                a10 = 0.0
                a11 = 0.0
                a12 = 0.0
                a20 = 0.0
                a21 = 0.0
                a22 = 0.0
                for bi in range(bsz):
                    dco = dout[bi, co]
                    xc = x[bi, ci]
                    for i in range(ho):
                        di = dco[i]
                        r0 = xc[i]
                        r1 = xc[i + 1]
                        r2 = xc[i + 2]
                        for j in range(wo):
                            g = di[j]
                            a00 += g * r0[j]
                            a01 += g * r0[j + 1]
                            a02 += g * r0[j + 2]
                            a10 += g * r1[j]
                            a11 += g * r1[j + 1]
                            a12 += g * r1[j + 2]
                            a20 += g * r2[j]
                            a21 += g * r2[j + 1]
                            a22 += g * r2[j + 2]
                dw[co, ci, 0, 0] = a00
                dw[co, ci, 0, 1] = a01
                dw[co, ci, 0, 2] = a02
                dw[co, ci, 1, 0] = a10
                dw[co, ci, 1, 1] = a11
                dw[co, ci, 1, 2] = a12
                dw[co, ci, 2, 0] = a20
                dw[co, ci, 2, 1] = a21
                dw[co, ci, 2, 2] = a22
            else:
                for u in range(kh):
                    for v in range(kw):
                        acc = 0.0
                        for bi in range(bsz):
                            dco = dout[bi, co]
                            xc = x[bi, ci]
                            for i in range(ho):
                                di = dco[i]
                                ru = xc[i + u]
                                for j in range(wo):
                                    acc += di[j] * ru[j + v]
                        dw[co, ci, u, v] = acc
    return dw


def conv_bwd_dw(x, dout):
    return _conv_bwd_dw_impl(x, dout)


@njit(parallel=True, cache=True)
def _maxpool_fwd_impl(x):
    bsz, c, h, wd = x.shape
    ho = h // 2
    wo = wd // 2
    out = np.empty((bsz, c, ho, wo), dtype=np.float64)
    idx = np.empty((bsz, c, ho, wo), dtype=np.uint8)
    for bi in prange(bsz):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    best = x[bi, ci, 2 * i, 2 * j]
                    pos = 0
                    cand = x[bi, ci, 2 * i, 2 * j + 1]
                    if cand > best:
                        best = cand
                        pos = 1
                    cand = x[bi, ci, 2 * i + 1, 2 * j]
                    if cand > best:
                        best = cand
                        pos = 2
                    cand = x[bi, ci, 2 * i + 1, 2 * j + 1]
                    if cand > best:
                        best = cand
                        pos = 3
                    out[bi, ci, i, j] = best
                    idx[bi, ci, i, j] = pos
    return out, idx


def maxpool_fwd(x):
    return _maxpool_fwd_impl(x)


@njit(parallel=True, cache=True)
def _maxpool_bwd_impl(dout, idx, h, wd):
    bsz, c, ho, wo = dout.shape
    dx = np.zeros((bsz, c, h, wd), dtype=np.float64)
    for bi in prange(bsz):
        for ci in range(c):
            for i in range(ho):
                for j in range(wo):
                    pos = idx[bi, ci, i, j]
                    dx[bi, ci, 2 * i + pos // 2, 2 * j + pos % 2] += dout[bi, ci, i, j]
    return dx


def maxpool_bwd(dout, idx, h, wd):
    return _maxpool_bwd_impl(dout, idx, h, wd)
