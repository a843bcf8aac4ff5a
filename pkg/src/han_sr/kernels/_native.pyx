# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled im2col/col2im kernels; same contract as numpy_backend."""

import numpy as np

cimport cython


ctypedef fused real:
    float
    double


def conv_output_size(Py_ssize_t size, Py_ssize_t k, Py_ssize_t pad, Py_ssize_t stride):
    return (size + 2 * pad - k) // stride + 1


def im2col_2d(x, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t pad, Py_ssize_t stride):
    x = np.ascontiguousarray(x)
    out = np.zeros(
        ((x.shape[0] * conv_output_size(x.shape[2], kh, pad, stride)
          * conv_output_size(x.shape[3], kw, pad, stride)),
         x.shape[1] * kh * kw),
        dtype=x.dtype)
    if x.dtype == np.float32:
        _im2col_2d[float](x, out, kh, kw, pad, stride)
    elif x.dtype == np.float64:
        _im2col_2d[double](x, out, kh, kw, pad, stride)
    else:
        raise TypeError(f"unsupported dtype {x.dtype}")
    return out


@cython.boundscheck(False)
cdef void _im2col_2d(real[:, :, :, ::1] x, real[:, ::1] col,
                     Py_ssize_t kh, Py_ssize_t kw,
                     Py_ssize_t pad, Py_ssize_t stride) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t b, ci, i, j, oy, ox, iy, ix, row, q
    for b in range(n):
        for oy in range(oh):
            for ox in range(ow):
                row = (b * oh + oy) * ow + ox
                for ci in range(c):
                    for i in range(kh):
                        iy = oy * stride - pad + i
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(kw):
                            ix = ox * stride - pad + j
                            if ix < 0 or ix >= w:
                                continue
                            q = (ci * kh + i) * kw + j
                            col[row, q] = x[b, ci, iy, ix]


def col2im_2d(col, shape, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t pad, Py_ssize_t stride):
    col = np.ascontiguousarray(col)
    out = np.zeros(shape, dtype=col.dtype)
    if col.dtype == np.float32:
        _col2im_2d[float](col, out, kh, kw, pad, stride)
    elif col.dtype == np.float64:
        _col2im_2d[double](col, out, kh, kw, pad, stride)
    else:
        raise TypeError(f"unsupported dtype {col.dtype}")
    return out


cdef void _col2im_2d(real[:, ::1] col, real[:, :, :, ::1] img,
                     Py_ssize_t kh, Py_ssize_t kw,
                     Py_ssize_t pad, Py_ssize_t stride) noexcept nogil:
    cdef Py_ssize_t n = img.shape[0], c = img.shape[1], h = img.shape[2], w = img.shape[3]
    cdef Py_ssize_t oh = (h + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t ow = (w + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t b, ci, i, j, oy, ox, iy, ix, row, q
    for b in range(n):
        for oy in range(oh):
            for ox in range(ow):
                row = (b * oh + oy) * ow + ox
                for ci in range(c):
                    for i in range(kh):
                        iy = oy * stride - pad + i
                        if iy < 0 or iy >= h:
                            continue
                        for j in range(kw):
                            ix = ox * stride - pad + j
                            if ix < 0 or ix >= w:
                                continue
                            q = (ci * kh + i) * kw + j
                            img[b, ci, iy, ix] += col[row, q]


def im2col_3d(x, Py_ssize_t kd, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t pad):
    x = np.ascontiguousarray(x)
    cdef Py_ssize_t od = conv_output_size(x.shape[2], kd, pad, 1)
    cdef Py_ssize_t oh = conv_output_size(x.shape[3], kh, pad, 1)
    cdef Py_ssize_t ow = conv_output_size(x.shape[4], kw, pad, 1)
    out = np.zeros((x.shape[0] * od * oh * ow, x.shape[1] * kd * kh * kw),
                   dtype=x.dtype)
    if x.dtype == np.float32:
        _im2col_3d[float](x, out, kd, kh, kw, pad)
    elif x.dtype == np.float64:
        _im2col_3d[double](x, out, kd, kh, kw, pad)
    else:
        raise TypeError(f"unsupported dtype {x.dtype}")
    return out


cdef void _im2col_3d(real[:, :, :, :, ::1] x, real[:, ::1] col,
                     Py_ssize_t kd, Py_ssize_t kh, Py_ssize_t kw,
                     Py_ssize_t pad) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t d = x.shape[2], h = x.shape[3], w = x.shape[4]
    cdef Py_ssize_t od = d + 2 * pad - kd + 1
    cdef Py_ssize_t oh = h + 2 * pad - kh + 1
    cdef Py_ssize_t ow = w + 2 * pad - kw + 1
    cdef Py_ssize_t b, ci, a, i, j, oz, oy, ox, iz, iy, ix, row, q
    for b in range(n):
        for oz in range(od):
            for oy in range(oh):
                for ox in range(ow):
                    row = ((b * od + oz) * oh + oy) * ow + ox
                    for ci in range(c):
                        for a in range(kd):
                            iz = oz - pad + a
                            if iz < 0 or iz >= d:
                                continue
                            for i in range(kh):
                                iy = oy - pad + i
                                if iy < 0 or iy >= h:
                                    continue
                                for j in range(kw):
                                    ix = ox - pad + j
                                    if ix < 0 or ix >= w:
                                        continue
                                    q = ((ci * kd + a) * kh + i) * kw + j
                                    col[row, q] = x[b, ci, iz, iy, ix]


def col2im_3d(col, shape, Py_ssize_t kd, Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t pad):
    col = np.ascontiguousarray(col)
    out = np.zeros(shape, dtype=col.dtype)
    if col.dtype == np.float32:
        _col2im_3d[float](col, out, kd, kh, kw, pad)
    elif col.dtype == np.float64:
        _col2im_3d[double](col, out, kd, kh, kw, pad)
    else:
        raise TypeError(f"unsupported dtype {col.dtype}")
    return out


cdef void _col2im_3d(real[:, ::1] col, real[:, :, :, :, ::1] img,
                     Py_ssize_t kd, Py_ssize_t kh, Py_ssize_t kw,
                     Py_ssize_t pad) noexcept nogil:
    cdef Py_ssize_t n = img.shape[0], c = img.shape[1]
    cdef Py_ssize_t d = img.shape[2], h = img.shape[3], w = img.shape[4]
    cdef Py_ssize_t od = d + 2 * pad - kd + 1
    cdef Py_ssize_t oh = h + 2 * pad - kh + 1
    cdef Py_ssize_t ow = w + 2 * pad - kw + 1
    cdef Py_ssize_t b, ci, a, i, j, oz, oy, ox, iz, iy, ix, row, q
    for b in range(n):
        for oz in range(od):
            for oy in range(oh):
                for ox in range(ow):
                    row = ((b * od + oz) * oh + oy) * ow + ox
                    for ci in range(c):
                        for a in range(kd):
                            iz = oz - pad + a
                            if iz < 0 or iz >= d:
                                continue
                            for i in range(kh):
                                iy = oy - pad + i
                                if iy < 0 or iy >= h:
                                    continue
                                for j in range(kw):
                                    ix = ox - pad + j
                                    if ix < 0 or ix >= w:
                                        continue
                                    q = ((ci * kd + a) * kh + i) * kw + j
                                    img[b, ci, iz, iy, ix] += col[row, q]
