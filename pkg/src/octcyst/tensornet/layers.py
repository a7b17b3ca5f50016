"""Differentiable layers: dilated convolution, transposed convolution,
max pooling, dropout, the attention gate, and the atrous pyramid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import OddDimension, ShapeMismatch
from ..rng import uniform_array
from .tensor import Tensor, _accum, _attach, concat, mul, relu, sigmoid


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, dilation: int = 1) -> Tensor:
    """Same-padded 2-D cross-correlation with dilation.

    x: (C, H, W); w: (F, C, k, k) with odd k; b: (F,) or None.  Output
    location i sums x[i + dilation*t] * w[t] over taps t centered on i,
    with zero padding, so spatial dims are preserved for any dilation.
    """
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise ShapeMismatch(f"conv2d expects 3-D input and 4-D kernel, got {x.data.shape}, {w.data.shape}")
    C, H, W = x.data.shape
    F, Cw, k, k2 = w.data.shape
    if Cw != C or k != k2 or k % 2 == 0:
        raise ShapeMismatch(f"kernel {w.data.shape} incompatible with input {x.data.shape}")
    if b is not None and b.data.shape != (F,):
        raise ShapeMismatch(f"bias shape {b.data.shape} != ({F},)")
    r = dilation
    pad = r * (k // 2)
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad)))
    y = np.zeros((F, H, W), dtype=x.data.dtype)
    for a in range(k):
        for bb in range(k):
            y += np.tensordot(
                w.data[:, :, a, bb],
                xp[:, a * r : a * r + H, bb * r : bb * r + W],
                axes=([1], [0]),
            )
    if b is not None:
        y += b.data[:, None, None]
    out = Tensor(y)

    def _bw():
        go = out.grad
        if b is not None and b.requires_grad:
            _accum(b, go.sum(axis=(1, 2)))
        if w.requires_grad:
            dw = np.empty_like(w.data)
            for a in range(k):
                for bb in range(k):
                    dw[:, :, a, bb] = np.tensordot(
                        go,
                        xp[:, a * r : a * r + H, bb * r : bb * r + W],
                        axes=([1, 2], [1, 2]),
                    )
            _accum(w, dw)
        if x.requires_grad:
            dxp = np.zeros_like(xp)
            for a in range(k):
                for bb in range(k):
                    dxp[:, a * r : a * r + H, bb * r : bb * r + W] += np.tensordot(
                        w.data[:, :, a, bb], go, axes=([0], [0])
                    )
            _accum(x, dxp[:, pad : pad + H, pad : pad + W])

    parents = (x, w) if b is None else (x, w, b)
    return _attach(out, parents, _bw)


def transposed_conv2d(x: Tensor, w: Tensor) -> Tensor:
    """Stride-2 transposed convolution with a 2x2 kernel.

    x: (C, H, W); w: (C, F, 2, 2); output (F, 2H, 2W).  Defined as the
    adjoint of a stride-2 2x2 convolution, which doubles spatial dims
    exactly."""
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise ShapeMismatch("transposed_conv2d expects 3-D input and 4-D kernel")
    C, H, W = x.data.shape
    Cw, F, k1, k2 = w.data.shape
    if Cw != C or (k1, k2) != (2, 2):
        raise ShapeMismatch(f"kernel {w.data.shape} incompatible with input {x.data.shape}")
    y = np.zeros((F, 2 * H, 2 * W), dtype=x.data.dtype)
    for di in range(2):
        for dj in range(2):
            y[:, di::2, dj::2] = np.tensordot(w.data[:, :, di, dj], x.data, axes=([0], [0]))
    out = Tensor(y)

    def _bw():
        go = out.grad
        if w.requires_grad:
            dw = np.empty_like(w.data)
            for di in range(2):
                for dj in range(2):
                    dw[:, :, di, dj] = np.tensordot(
                        x.data, go[:, di::2, dj::2], axes=([1, 2], [1, 2])
                    )
            _accum(w, dw)
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            for di in range(2):
                for dj in range(2):
                    dx += np.tensordot(w.data[:, :, di, dj], go[:, di::2, dj::2], axes=([1], [0]))
            _accum(x, dx)

    return _attach(out, (x, w), _bw)


def max_pool2(x: Tensor) -> Tensor:
    """2x2 max pooling; backward routes to the first (row-major) argmax."""
    C, H, W = x.data.shape
    if H % 2 or W % 2:
        raise OddDimension(f"max_pool2 needs even spatial dims, got {H}x{W}")
    windows = (
        x.data.reshape(C, H // 2, 2, W // 2, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(C, H // 2, W // 2, 4)
    )
    idx = windows.argmax(axis=-1)
    out = Tensor(np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0])

    def _bw():
        gw = np.zeros_like(windows)
        np.put_along_axis(gw, idx[..., None], out.grad[..., None], axis=-1)
        _accum(
            x,
            gw.reshape(C, H // 2, W // 2, 2, 2)
            .transpose(0, 1, 3, 2, 4)
            .reshape(C, H, W),
        )

    return _attach(out, (x,), _bw)


def dropout(x: Tensor, p: float, seed: int) -> Tensor:
    """Inverted dropout: kept activations are scaled by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if p == 0.0:
        return x
    u = uniform_array(seed, x.data.size).reshape(x.data.shape)
    mask = ((u >= p) / (1.0 - p)).astype(x.data.dtype)
    out = Tensor(x.data * mask)

    def _bw():
        _accum(x, out.grad * mask)

    return _attach(out, (x,), _bw)


@dataclass
class AttentionGateParams:
    """1x1 projections of the gate: skip and gating maps to an inner width,
    then a scalar projection produces the per-pixel coefficient logit."""

    w_x: Tensor  # (F_int, C_skip, 1, 1)
    w_g: Tensor  # (F_int, C_gate, 1, 1)
    b_xg: Tensor  # (F_int,)
    psi: Tensor  # (1, F_int, 1, 1)
    b_psi: Tensor  # (1,)


def attention_gate(x_l: Tensor, g: Tensor, p: AttentionGateParams) -> Tensor:
    """Scale skip features by a learned coefficient in (0,1).

    alpha = sigmoid(psi(relu(Wx*x_l + Wg*g + b_xg)) + b_psi), broadcast over
    the channels of x_l; returns alpha * x_l."""
    if x_l.data.shape[1:] != g.data.shape[1:]:
        raise ShapeMismatch(
            f"skip {x_l.data.shape} and gating {g.data.shape} spatial dims differ"
        )
    inner = relu(conv2d(x_l, p.w_x) + conv2d(g, p.w_g, p.b_xg))
    alpha = sigmoid(conv2d(inner, p.psi, p.b_psi))
    return mul(x_l, alpha)


@dataclass
class AsppParams:
    rates: tuple[int, ...]
    branches: list[tuple[Tensor, Tensor]]  # (w (C,C,3,3), b (C,)) per rate
    fuse_w: Tensor  # (C, len(rates)*C, 1, 1)
    fuse_b: Tensor  # (C,)


def aspp(x: Tensor, p: AsppParams) -> Tensor:
    """Parallel 3x3 atrous branches, concatenated and fused by a 1x1 conv."""
    if len(p.branches) != len(p.rates):
        raise ShapeMismatch("one branch per dilation rate required")
    outs = [conv2d(x, w, b, dilation=r) for (w, b), r in zip(p.branches, p.rates)]
    return conv2d(concat(outs, axis=0), p.fuse_w, p.fuse_b)
