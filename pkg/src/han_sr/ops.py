"""Forward/backward primitives for the super-resolution graph.

Convolutions use the cross-correlation convention (no kernel flip) and are
lowered to a patch-matrix GEMM through the kernel backends; everything else is
plain numpy. Each op validates its contract up front and emits through
``tensor.emit`` so results are finite-checked and recorded on the live tape.
"""

from __future__ import annotations

import numpy as np

from .kernels import col2im_2d, col2im_3d, conv_output_size, im2col_2d, im2col_3d
from .tensor import DimensionError, Tensor, emit


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return emit(out, (a, b), rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def rule(g):
        return (_unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape))

    return emit(out, (a, b), rule)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError("matmul expects rank-2 operands")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} vs {b.shape}")
    out = a.data @ b.data

    def rule(g):
        return g @ b.data.T, a.data.T @ g

    return emit(out, (a, b), rule)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def rule(g):
        # subgradient at 0 is 0
        return (g * (x.data > 0),)

    return emit(out, (x,), rule)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)

    def rule(g):
        return (g * out * (1.0 - out),)

    return emit(out, (x,), rule)


def softmax_rows(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise DimensionError("softmax_rows expects a rank-2 tensor")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)

    def rule(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return emit(out, (x,), rule)


def global_avg_pool(x: Tensor) -> Tensor:
    if x.data.ndim != 4:
        raise DimensionError("global_avg_pool expects NCHW input")
    h, w = x.shape[2], x.shape[3]
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def rule(g):
        return (np.broadcast_to(g / (h * w), x.shape).copy(),)

    return emit(out, (x,), rule)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor,
           padding: int = 0, stride: int = 1) -> Tensor:
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise DimensionError("conv2d expects NCHW input and OIHW weight")
    n, cin, h, w = x.shape
    cout, cin_w, kh, kw = weight.shape
    if cin != cin_w:
        raise DimensionError(f"conv2d channel mismatch: input {cin}, weight {cin_w}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise DimensionError("conv2d kernel extents must be odd")
    if bias.data.ndim != 1 or bias.shape[0] != cout:
        raise DimensionError("conv2d bias must be rank-1 of length Cout")
    if stride < 1:
        raise DimensionError("conv2d stride must be >= 1")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise DimensionError("conv2d input smaller than kernel")
    oh = conv_output_size(h, kh, padding, stride)
    ow = conv_output_size(w, kw, padding, stride)

    col = im2col_2d(x.data, kh, kw, padding, stride)       # [N*OH*OW, Cin*kh*kw]
    wmat = weight.data.reshape(cout, -1)
    out_mat = col @ wmat.T + bias.data
    out = out_mat.reshape(n, oh, ow, cout).transpose(0, 3, 1, 2)

    need_x, need_w, need_b = x.requires_grad, weight.requires_grad, bias.requires_grad

    def rule(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, cout)
        gx = gw = gb = None
        if need_b:
            gb = gmat.sum(axis=0)
        if need_w:
            gw = (gmat.T @ col).reshape(weight.shape)
        if need_x:
            gx = col2im_2d(gmat @ wmat, (n, cin, h, w), kh, kw, padding, stride)
        return gx, gw, gb

    return emit(np.ascontiguousarray(out), (x, weight, bias), rule)


def conv3d(x: Tensor, weight: Tensor, bias: Tensor, padding: int = 1) -> Tensor:
    if x.data.ndim != 5 or weight.data.ndim != 5:
        raise DimensionError("conv3d expects NCDHW input and OIDHW weight")
    n, cin, d, h, w = x.shape
    cout, cin_w, kd, kh, kw = weight.shape
    if cin != cin_w:
        raise DimensionError(f"conv3d channel mismatch: input {cin}, weight {cin_w}")
    if bias.data.ndim != 1 or bias.shape[0] != cout:
        raise DimensionError("conv3d bias must be rank-1 of length Cout")
    od = conv_output_size(d, kd, padding, 1)
    oh = conv_output_size(h, kh, padding, 1)
    ow = conv_output_size(w, kw, padding, 1)

    col = im2col_3d(x.data, kd, kh, kw, padding)
    wmat = weight.data.reshape(cout, -1)
    out_mat = col @ wmat.T + bias.data
    out = out_mat.reshape(n, od, oh, ow, cout).transpose(0, 4, 1, 2, 3)

    need_x, need_w, need_b = x.requires_grad, weight.requires_grad, bias.requires_grad

    def rule(g):
        gmat = g.transpose(0, 2, 3, 4, 1).reshape(-1, cout)
        gx = gw = gb = None
        if need_b:
            gb = gmat.sum(axis=0)
        if need_w:
            gw = (gmat.T @ col).reshape(weight.shape)
        if need_x:
            gx = col2im_3d(gmat @ wmat, (n, cin, d, h, w), kd, kh, kw, padding)
        return gx, gw, gb

    return emit(np.ascontiguousarray(out), (x, weight, bias), rule)


def _shuffle_data(d: np.ndarray, s: int) -> np.ndarray:
    n, c_s2, h, w = d.shape
    c = c_s2 // (s * s)
    out = d.reshape(n, c, s, s, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(out).reshape(n, c, h * s, w * s)


def _unshuffle_data(d: np.ndarray, s: int) -> np.ndarray:
    n, c, hs, ws = d.shape
    h, w = hs // s, ws // s
    out = d.reshape(n, c, h, s, w, s).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(out).reshape(n, c * s * s, h, w)


def pixel_shuffle(x: Tensor, s: int) -> Tensor:
    if x.data.ndim != 4:
        raise DimensionError("pixel_shuffle expects NCHW input")
    if s < 1:
        raise DimensionError("pixel_shuffle factor must be >= 1")
    if x.shape[1] % (s * s) != 0:
        raise DimensionError(
            f"pixel_shuffle: {x.shape[1]} channels not divisible by {s}^2")
    out = _shuffle_data(x.data, s)

    def rule(g):
        return (_unshuffle_data(g, s),)

    return emit(out, (x,), rule)


def pixel_unshuffle(x: Tensor, s: int) -> Tensor:
    if x.data.ndim != 4:
        raise DimensionError("pixel_unshuffle expects NCHW input")
    if s < 1:
        raise DimensionError("pixel_unshuffle factor must be >= 1")
    if x.shape[2] % s != 0 or x.shape[3] % s != 0:
        raise DimensionError("pixel_unshuffle: extents not divisible by factor")
    out = _unshuffle_data(x.data, s)

    def rule(g):
        return (_shuffle_data(g, s),)

    return emit(out, (x,), rule)


def reshape(x: Tensor, new_shape) -> Tensor:
    new_shape = tuple(int(e) for e in new_shape)
    if int(np.prod(new_shape)) != x.size:
        raise DimensionError(f"reshape {x.shape} -> {new_shape}: element counts differ")
    out = x.data.reshape(new_shape)

    def rule(g):
        return (g.reshape(x.shape),)

    return emit(out, (x,), rule)


def permute(x: Tensor, axes) -> Tensor:
    axes = tuple(int(a) for a in axes)
    if sorted(axes) != list(range(x.data.ndim)):
        raise DimensionError(f"permute axes {axes} is not a permutation of {x.shape}")
    inverse = np.argsort(axes)
    out = np.ascontiguousarray(x.data.transpose(axes))

    def rule(g):
        return (np.ascontiguousarray(g.transpose(inverse)),)

    return emit(out, (x,), rule)


def stack(xs) -> Tensor:
    xs = tuple(xs)
    if not xs:
        raise DimensionError("stack of zero tensors")
    shape = xs[0].shape
    if any(t.shape != shape for t in xs):
        raise DimensionError("stack operands must share a shape")
    out = np.stack([t.data for t in xs], axis=0)

    def rule(g):
        return tuple(g[i] for i in range(len(xs)))

    return emit(out, xs, rule)


def index0(x: Tensor, i: int) -> Tensor:
    if x.data.ndim < 2:
        raise DimensionError("index0 needs rank >= 2")
    if not 0 <= i < x.shape[0]:
        raise DimensionError(f"index0: {i} out of range for extent {x.shape[0]}")
    out = x.data[i].copy()

    def rule(g):
        gx = np.zeros_like(x.data)
        gx[i] = g
        return (gx,)

    return emit(out, (x,), rule)


def tensor_sum(x: Tensor) -> Tensor:
    out = np.asarray(x.data.sum()).reshape(1)

    def rule(g):
        return (np.full_like(x.data, g.reshape(-1)[0]),)

    return emit(out, (x,), rule)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise DimensionError(f"l1_loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    out = np.asarray(np.abs(diff).mean(), dtype=pred.dtype).reshape(1)

    def rule(g):
        # sign(0) == 0, matching the adopted subgradient
        gp = np.sign(diff) * (g.reshape(-1)[0] / diff.size)
        return gp, -gp

    return emit(out, (pred, target), rule)
