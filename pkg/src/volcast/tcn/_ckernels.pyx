# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled causal dilated convolution kernels.

Layouts are C-contiguous float64: inputs ``[batch, channels_in, T]``,
weights ``[channels_out, channels_in, kernel]``. Tap ``j`` reads the input
``(kernel - 1 - j) * dilation`` steps in the past; reads before t=0 are zero.
"""
import numpy as np


def conv1d_forward(const double[:, :, ::1] x, const double[:, :, ::1] weights,
                   const double[::1] bias, Py_ssize_t dilation, bint relu,
                   out=None):
    cdef Py_ssize_t B = x.shape[0], cin = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t cout = weights.shape[0], k = weights.shape[2]
    if weights.shape[1] != cin:
        raise ValueError(f"input has {cin} channels, layer expects {weights.shape[1]}")
    if out is None:
        out = np.empty((B, cout, T))
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t b, f, c, j, t, s
    cdef double w, v
    cdef double* orow
    cdef const double* xrow
    with nogil:
        for b in range(B):
            for f in range(cout):
                orow = &o[b, f, 0]
                v = bias[f]
                for t in range(T):
                    orow[t] = v
                for c in range(cin):
                    xrow = &x[b, c, 0]
                    for j in range(k):
                        s = (k - 1 - j) * dilation
                        w = weights[f, c, j]
                        for t in range(s, T):
                            orow[t] += w * xrow[t - s]
                if relu:
                    for t in range(T):
                        if not orow[t] > 0.0:
                            orow[t] = 0.0
    return out


def conv1d_backward(const double[:, :, ::1] x, const double[:, :, ::1] weights,
                    Py_ssize_t dilation, bint relu, const double[:, :, ::1] out,
                    const double[:, :, ::1] gout, bint need_input_grad=True):
    """Gradients of a layer given dL/d(output); returns (dweights, dbias, dx or None)."""
    cdef Py_ssize_t B = x.shape[0], cin = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t cout = weights.shape[0], k = weights.shape[2]
    dweights_arr = np.zeros((cout, cin, k))
    dbias_arr = np.zeros(cout)
    gpre_arr = np.empty(T)
    cdef double[:, :, ::1] dw = dweights_arr
    cdef double[::1] db = dbias_arr
    cdef double[::1] gpre = gpre_arr
    cdef double[:, :, ::1] gx
    gx_arr = None
    if need_input_grad:
        gx_arr = np.zeros((B, cin, T))
        gx = gx_arr
    cdef Py_ssize_t b, f, c, j, t, s
    cdef double w, acc
    cdef const double* xrow
    cdef double* gxrow
    cdef const double* grow
    cdef const double* orow
    with nogil:
        for b in range(B):
            for f in range(cout):
                grow = &gout[b, f, 0]
                orow = &out[b, f, 0]
                acc = 0.0
                for t in range(T):
                    if relu and not orow[t] > 0.0:
                        gpre[t] = 0.0
                    else:
                        gpre[t] = grow[t]
                    acc += gpre[t]
                db[f] += acc
                for c in range(cin):
                    xrow = &x[b, c, 0]
                    for j in range(k):
                        s = (k - 1 - j) * dilation
                        if s >= T:
                            continue
                        acc = 0.0
                        for t in range(s, T):
                            acc += gpre[t] * xrow[t - s]
                        dw[f, c, j] += acc
                        if need_input_grad:
                            w = weights[f, c, j]
                            gxrow = &gx[b, c, 0]
                            for t in range(T - s):
                                gxrow[t] += w * gpre[t + s]
    return dweights_arr, dbias_arr, gx_arr
