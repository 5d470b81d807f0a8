"""Convolution and max-pooling primitives.

Convolutions are cross-correlations (no kernel flip), computed by unfolding
input patches into a matrix and doing one GEMM. Inputs may be batched
(``N x C x ...``) or a single sample (``C x ...``).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor


def _check_geometry(size: int, k: int, stride: int, padding: int, what: str) -> int:
    if stride < 1:
        raise ValueError(f"{what}: stride must be >= 1, got {stride}")
    if padding < 0:
        raise ValueError(f"{what}: padding must be >= 0, got {padding}")
    if k > size + 2 * padding:
        raise ValueError(f"{what}: kernel {k} exceeds padded extent {size + 2 * padding}")
    return (size + 2 * padding - k) // stride + 1


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-d cross-correlation of ``[N x] C_in x W x H`` with ``C_out x C_in x k x k``."""
    single = x.ndim == 3
    xv = x.values[None] if single else x.values
    if xv.ndim != 4 or kernels.ndim != 4:
        raise ValueError(f"conv2d expects (N,)C,W,H input and 4-d kernels, got {x.shape}, {kernels.shape}")
    n, c, w, h = xv.shape
    o, kc, kw, kh = kernels.shape
    if kc != c:
        raise ValueError(f"conv2d: kernel expects {kc} input channels, input has {c}")
    wo = _check_geometry(w, kw, stride, padding, "conv2d")
    ho = _check_geometry(h, kh, stride, padding, "conv2d")

    xp = np.pad(xv, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xv
    win = sliding_window_view(xp, (kw, kh), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :wo, :ho]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * wo * ho, c * kw * kh)
    kmat = kernels.values.reshape(o, -1)
    out = cols @ kmat.T
    if bias is not None:
        out = out + bias.values
    out = out.reshape(n, wo, ho, o).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out[0] if single else out)
    parents = (x, kernels) if bias is None else (x, kernels, bias)

    def backward(g):
        g4 = g[None] if single else g
        gm = g4.transpose(0, 2, 3, 1).reshape(-1, o)
        dk = (gm.T @ cols).reshape(kernels.shape)
        dx = None
        if x.requires_grad:
            dcols = np.ascontiguousarray((gm @ kmat).reshape(n, wo, ho, c, kw, kh).transpose(4, 5, 0, 3, 1, 2))
            dxp = np.zeros_like(xp)
            for i in range(kw):
                for j in range(kh):
                    dxp[:, :, i : i + stride * wo : stride, j : j + stride * ho : stride] += dcols[i, j]
            dx = dxp[:, :, padding : padding + w, padding : padding + h]
            dx = dx[0] if single else dx
        grads = [dx, dk]
        if bias is not None:
            grads.append(gm.sum(axis=0))
        return grads

    return Tensor._make(out, parents, backward, "conv2d")


def conv1d(x: Tensor, kernels: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """1-d cross-correlation of ``[N x] C_in x L`` with ``C_out x C_in x k``."""
    single = x.ndim == 2
    xv = x.values[None] if single else x.values
    if xv.ndim != 3 or kernels.ndim != 3:
        raise ValueError(f"conv1d expects (N,)C,L input and 3-d kernels, got {x.shape}, {kernels.shape}")
    n, c, length = xv.shape
    o, kc, k = kernels.shape
    if kc != c:
        raise ValueError(f"conv1d: kernel expects {kc} input channels, input has {c}")
    lo = _check_geometry(length, k, stride, padding, "conv1d")

    xp = np.pad(xv, ((0, 0), (0, 0), (padding, padding))) if padding else xv
    win = sliding_window_view(xp, k, axis=2)[:, :, ::stride][:, :, :lo]
    cols = win.transpose(0, 2, 1, 3).reshape(n * lo, c * k)
    kmat = kernels.values.reshape(o, -1)
    out = cols @ kmat.T
    if bias is not None:
        out = out + bias.values
    out = out.reshape(n, lo, o).transpose(0, 2, 1)
    out = np.ascontiguousarray(out[0] if single else out)
    parents = (x, kernels) if bias is None else (x, kernels, bias)

    def backward(g):
        g3 = g[None] if single else g
        gm = g3.transpose(0, 2, 1).reshape(-1, o)
        dk = (gm.T @ cols).reshape(kernels.shape)
        dx = None
        if x.requires_grad:
            dcols = np.ascontiguousarray((gm @ kmat).reshape(n, lo, c, k).transpose(3, 0, 2, 1))
            dxp = np.zeros_like(xp)
            for i in range(k):
                dxp[:, :, i : i + stride * lo : stride] += dcols[i]
            dx = dxp[:, :, padding : padding + length]
            dx = dx[0] if single else dx
        grads = [dx, dk]
        if bias is not None:
            grads.append(gm.sum(axis=0))
        return grads

    return Tensor._make(out, parents, backward, "conv1d")


def max_pool2d(x: Tensor, k: int = 2, stride: int | None = None) -> Tensor:
    """Max over k x k windows of the last two axes.

    Ties go to the first element of the window in row-major order, which also
    decides where the gradient is routed.
    """
    stride = stride or k
    single = x.ndim == 3
    xv = x.values[None] if single else x.values
    n, c, w, h = xv.shape
    wo = _check_geometry(w, k, stride, 0, "max_pool2d")
    ho = _check_geometry(h, k, stride, 0, "max_pool2d")
    win = sliding_window_view(xv, (k, k), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :wo, :ho]
    flat = win.reshape(n, c, wo, ho, k * k)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    out = np.ascontiguousarray(out[0] if single else out)

    def backward(g):
        g4 = g[None] if single else g
        ni, ci, oi, oj = np.indices(arg.shape, sparse=True)
        wi = oi * stride + arg // k
        hi = oj * stride + arg % k
        dx = np.zeros_like(xv)
        if stride >= k:
            dx[ni, ci, wi, hi] = g4
        else:
            np.add.at(dx, (ni, ci, wi, hi), g4)
        return (dx[0] if single else dx,)

    return Tensor._make(out, (x,), backward, "max_pool2d")


def max_pool1d(x: Tensor, k: int = 2, stride: int | None = None) -> Tensor:
    """Max over length-k windows of the last axis; first index wins ties."""
    stride = stride or k
    single = x.ndim == 2
    xv = x.values[None] if single else x.values
    n, c, length = xv.shape
    lo = _check_geometry(length, k, stride, 0, "max_pool1d")
    win = sliding_window_view(xv, k, axis=2)[:, :, ::stride][:, :, :lo]
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    out = np.ascontiguousarray(out[0] if single else out)

    def backward(g):
        g3 = g[None] if single else g
        ni, ci, oi = np.indices(arg.shape, sparse=True)
        li = oi * stride + arg
        dx = np.zeros_like(xv)
        if stride >= k:
            dx[ni, ci, li] = g3
        else:
            np.add.at(dx, (ni, ci, li), g3)
        return (dx[0] if single else dx,)

    return Tensor._make(out, (x,), backward, "max_pool1d")
