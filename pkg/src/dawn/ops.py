"""Differentiable operations on :class:`~dawn.tensor.Tensor`.

Image tensors are laid out as ``[batch, channels, height, width]``.
Convolutions use the cross-correlation convention and never pad implicitly;
padding is the separate :func:`reflect_pad` op.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return v, v
    a, b = v
    return int(a), int(b)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride=(1, 1)) -> Tensor:
    """2D cross-correlation of ``x`` [B,C,H,W] with ``weight`` [F,C,kh,kw]."""
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4D input and weight, got {x.shape} and {weight.shape}")
    B, C, H, W = x.shape
    F, Cw, kh, kw = weight.shape
    if C != Cw:
        raise ValueError(f"conv2d channel mismatch: input has {C}, weight expects {Cw}")
    if kh > H or kw > W:
        raise ValueError(f"conv2d kernel {kh}x{kw} larger than input {H}x{W}")
    if bias is not None and bias.shape != (F,):
        raise ValueError(f"conv2d bias shape {bias.shape} does not match {F} filters")
    sh, sw = _pair(stride)
    Ho = (H - kh) // sh + 1
    Wo = (W - kw) // sw + 1

    xd, wd = x.data, weight.data
    win = sliding_window_view(xd, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    out = np.tensordot(win, wd, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def backward(g):
        gx = gw = gb = None
        if x.requires_grad:
            # [B,Ho,Wo,C,kh,kw]: per-tap contributions, scattered back below
            cols = np.tensordot(g, wd, axes=([1], [0]))
            gx = np.zeros_like(xd)
            for i in range(kh):
                for j in range(kw):
                    gx[:, :, i : i + sh * (Ho - 1) + 1 : sh, j : j + sw * (Wo - 1) + 1 : sw] += cols[
                        :, :, :, :, i, j
                    ].transpose(0, 3, 1, 2)
        if weight.requires_grad:
            gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._result(out, parents, backward, "conv2d")


def _reflect_index(n: int, before: int, after: int) -> np.ndarray:
    return np.pad(np.arange(n), (before, after), mode="reflect")


def _scatter_matrix(index: np.ndarray, n: int, dtype) -> np.ndarray:
    m = np.zeros((index.size, n), dtype=dtype)
    m[np.arange(index.size), index] = 1.0
    return m


def reflect_pad(x: Tensor, pad: Sequence[int]) -> Tensor:
    """Reflect-pad the two spatial axes by ``(top, bottom, left, right)``.

    The border sample is not repeated: padding ``[a, b, c]`` by one on the
    left gives ``[b, a, b, c]``.
    """
    top, bottom, left, right = (int(p) for p in pad)
    if min(top, bottom, left, right) < 0:
        raise ValueError(f"negative padding {tuple(pad)}")
    H, W = x.shape[2], x.shape[3]
    if max(top, bottom) >= H or max(left, right) >= W:
        raise ValueError(f"reflection padding {tuple(pad)} must be smaller than spatial extent {H}x{W}")
    if top == bottom == left == right == 0:
        return x
    ih = _reflect_index(H, top, bottom)
    iw = _reflect_index(W, left, right)
    out = x.data[:, :, ih][:, :, :, iw]
    dtype = x.data.dtype

    def backward(g):
        if left or right:
            g = g @ _scatter_matrix(iw, W, dtype)
        if top or bottom:
            g = np.einsum("bchw,hk->bckw", g, _scatter_matrix(ih, H, dtype))
        return (g,)

    return Tensor._result(out, (x,), backward, "reflect_pad")


def avg_pool(x: Tensor, p: int) -> Tensor:
    """Mean over non-overlapping ``p`` x ``p`` windows."""
    B, C, H, W = x.shape
    if p < 1 or H % p or W % p:
        raise ValueError(f"spatial extent {H}x{W} not divisible by pooling window {p}")
    out = x.data.reshape(B, C, H // p, p, W // p, p).mean(axis=(3, 5))

    def backward(g):
        g = np.repeat(np.repeat(g, p, axis=2), p, axis=3)
        return (g / (p * p),)

    return Tensor._result(out, (x,), backward, "avg_pool")


def batch_norm(
    x: Tensor,
    weight: Tensor,
    bias: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization over (batch, height, width).

    In training mode the running statistics are updated in place, using the
    unbiased batch variance.
    """
    B, C, H, W = x.shape
    axes = (0, 2, 3)
    n = B * H * W
    gamma = weight.data[None, :, None, None]
    xd = x.data
    if training:
        if n < 2:
            raise ValueError("batch_norm needs more than one value per channel in training mode")
        mu = xd.mean(axis=axes)
        var = xd.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (n / (n - 1))
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma * xhat + bias.data[None, :, None, None]

    def backward(g):
        gb = g.sum(axis=axes)
        gw = (g * xhat).sum(axis=axes)
        dxhat = g * gamma
        if training:
            gx = (inv_std[None, :, None, None] / n) * (
                n * dxhat
                - dxhat.sum(axis=axes, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            gx = dxhat * inv_std[None, :, None, None]
        return gx, gw, gb

    return Tensor._result(out, (x, weight, bias), backward, "batch_norm")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._result(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def tanh_act(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor._result(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def identity(x: Tensor) -> Tensor:
    return x


def global_avg_pool(x: Tensor) -> Tensor:
    """[B,C,H,W] -> [B,C] spatial mean."""
    B, C, H, W = x.shape
    if H * W == 0:
        raise ValueError("global_avg_pool on empty spatial extent")
    out = x.data.mean(axis=(2, 3))

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (H * W), x.shape).copy(),)

    return Tensor._result(out, (x,), backward, "global_avg_pool")


def dense(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map ``x @ weight.T + bias`` with ``weight`` shaped [P,N]."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"dense shape mismatch: input {x.shape}, weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ValueError(f"dense bias shape {bias.shape} does not match weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out = out + bias.data

    def backward(g):
        return g @ wd, g.T @ xd, (g.sum(axis=0) if bias is not None else None)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._result(out, parents, backward, "dense")


def log_softmax(x: Tensor) -> Tensor:
    """Row-wise log-softmax of a [B,P] tensor."""
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError(f"log_softmax expects [B,P] with P >= 1, got {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=1, keepdims=True),)

    return Tensor._result(out, (x,), backward, "log_softmax")


def concat(inputs: Sequence[Tensor], axis: int = 1) -> Tensor:
    inputs = list(inputs)
    if not inputs:
        raise ValueError("concat of an empty list")
    if len(inputs) == 1:
        return inputs[0]
    ref = inputs[0].shape
    ax = axis % len(ref)
    for t in inputs[1:]:
        if len(t.shape) != len(ref) or any(a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != ax):
            raise ValueError(f"concat extents mismatch: {ref} vs {t.shape} on axis {axis}")
    sizes = [t.shape[ax] for t in inputs]
    bounds = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in inputs], axis=ax)

    def backward(g):
        return tuple(np.split(g, bounds, axis=ax))

    return Tensor._result(out, inputs, backward, "concat")


def interleave(even: Tensor, odd: Tensor, axis: int) -> Tensor:
    """Inverse of taking ``[0::2]`` and ``[1::2]`` slices along ``axis``."""
    if even.shape != odd.shape:
        raise ValueError(f"interleave shape mismatch: {even.shape} vs {odd.shape}")
    shape = list(even.shape)
    shape[axis] *= 2
    out = np.empty(shape, dtype=np.result_type(even.data, odd.data))
    ev = [slice(None)] * len(shape)
    od = [slice(None)] * len(shape)
    ev[axis] = slice(0, None, 2)
    od[axis] = slice(1, None, 2)
    ev, od = tuple(ev), tuple(od)
    out[ev] = even.data
    out[od] = odd.data

    def backward(g):
        return g[ev], g[od]

    return Tensor._result(out, (even, odd), backward, "interleave")


def huber_sum(x: Tensor, delta: float = 1.0) -> Tensor:
    """Sum of the Huber penalty: quadratic inside ``delta``, linear outside."""
    if delta <= 0:
        raise ValueError("huber delta must be positive")
    a = np.abs(x.data)
    val = np.where(a <= delta, 0.5 * x.data * x.data, delta * (a - 0.5 * delta)).sum()
    clipped = np.clip(x.data, -delta, delta)
    return Tensor._result(np.asarray(val), (x,), lambda g: (g * clipped,), "huber_sum")


def nll_loss(log_probs: Tensor, labels) -> Tensor:
    """Batch mean of ``-log_probs[i, labels[i]]``."""
    labels = np.asarray(labels, dtype=np.int64)
    B, P = log_probs.shape
    if labels.shape != (B,):
        raise ValueError(f"expected {B} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= P):
        raise ValueError(f"label out of range [0, {P})")
    rows = np.arange(B)
    val = -log_probs.data[rows, labels].mean()

    def backward(g):
        out = np.zeros_like(log_probs.data)
        out[rows, labels] = -g / B
        return (out,)

    return Tensor._result(np.asarray(val), (log_probs,), backward, "nll_loss")
