"""Pure-numpy im2col/col2im kernels (fallback when the compiled ones are absent).

Both backends share one contract: `im2col_*` lowers a batched feature map to a
patch matrix whose rows are output positions (batch-major, then spatial) and
whose columns are flattened receptive fields (channel-major, then kernel
offsets); `col2im_*` scatter-adds such a matrix back onto the input grid.
"""

import numpy as np


def conv_output_size(size: int, k: int, pad: int, stride: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def im2col_2d(x: np.ndarray, kh: int, kw: int, pad: int, stride: int) -> np.ndarray:
    n, c, h, w = x.shape
    oh = conv_output_size(h, kh, pad, stride)
    ow = conv_output_size(w, kw, pad, stride)
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    col = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        i_end = i + stride * oh
        for j in range(kw):
            j_end = j + stride * ow
            col[:, :, i, j] = x[:, :, i:i_end:stride, j:j_end:stride]
    return col.transpose(0, 4, 5, 1, 2, 3).reshape(n * oh * ow, c * kh * kw)


def col2im_2d(col: np.ndarray, shape: tuple, kh: int, kw: int,
              pad: int, stride: int) -> np.ndarray:
    n, c, h, w = shape
    oh = conv_output_size(h, kh, pad, stride)
    ow = conv_output_size(w, kw, pad, stride)
    col = col.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=col.dtype)
    for i in range(kh):
        i_end = i + stride * oh
        for j in range(kw):
            j_end = j + stride * ow
            # slices for a fixed (i, j) never overlap, so += is a clean scatter
            img[:, :, i:i_end:stride, j:j_end:stride] += col[:, :, i, j]
    return img[:, :, pad:pad + h, pad:pad + w]


def im2col_3d(x: np.ndarray, kd: int, kh: int, kw: int, pad: int) -> np.ndarray:
    n, c, d, h, w = x.shape
    od = conv_output_size(d, kd, pad, 1)
    oh = conv_output_size(h, kh, pad, 1)
    ow = conv_output_size(w, kw, pad, 1)
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)))
    col = np.empty((n, c, kd, kh, kw, od, oh, ow), dtype=x.dtype)
    for a in range(kd):
        for i in range(kh):
            for j in range(kw):
                col[:, :, a, i, j] = x[:, :, a:a + od, i:i + oh, j:j + ow]
    return col.transpose(0, 5, 6, 7, 1, 2, 3, 4).reshape(n * od * oh * ow,
                                                         c * kd * kh * kw)


def col2im_3d(col: np.ndarray, shape: tuple, kd: int, kh: int, kw: int,
              pad: int) -> np.ndarray:
    n, c, d, h, w = shape
    od = conv_output_size(d, kd, pad, 1)
    oh = conv_output_size(h, kh, pad, 1)
    ow = conv_output_size(w, kw, pad, 1)
    col = col.reshape(n, od, oh, ow, c, kd, kh, kw).transpose(0, 4, 5, 6, 7, 1, 2, 3)
    img = np.zeros((n, c, d + 2 * pad, h + 2 * pad, w + 2 * pad), dtype=col.dtype)
    for a in range(kd):
        for i in range(kh):
            for j in range(kw):
                img[:, :, a:a + od, i:i + oh, j:j + ow] += col[:, :, a, i, j]
    return img[:, :, pad:pad + d, pad:pad + h, pad:pad + w]
