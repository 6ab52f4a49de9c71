# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the dilated convolution and per-row top-k kernels."""
import numpy as np

cimport cython


def conv1d_forward(const double[:, :, ::1] x, const double[:, :, ::1] w, int dilation):
    cdef Py_ssize_t n = x.shape[0], c_in = x.shape[1], t = x.shape[2]
    cdef Py_ssize_t c_out = w.shape[0], d = w.shape[2]
    cdef Py_ssize_t t_out = t - (d - 1) * dilation
    out_arr = np.zeros((n, c_out, t_out))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t b, o, c, s, i, off
    cdef double wv
    for b in range(n):
        for o in range(c_out):
            for c in range(c_in):
                for s in range(d):
                    wv = w[o, c, s]
                    off = s * dilation
                    for i in range(t_out):
                        out[b, o, i] += wv * x[b, c, i + off]
    return out_arr


def conv1d_backward(const double[:, :, ::1] x, const double[:, :, ::1] w,
                    const double[:, :, ::1] grad, int dilation):
    cdef Py_ssize_t n = x.shape[0], c_in = x.shape[1], t = x.shape[2]
    cdef Py_ssize_t c_out = w.shape[0], d = w.shape[2]
    cdef Py_ssize_t t_out = grad.shape[2]
    gx_arr = np.zeros((n, c_in, t))
    gw_arr = np.zeros((c_out, c_in, d))
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gw = gw_arr
    cdef Py_ssize_t b, o, c, s, i, off
    cdef double wv, acc, gv
    for b in range(n):
        for o in range(c_out):
            for c in range(c_in):
                for s in range(d):
                    wv = w[o, c, s]
                    off = s * dilation
                    acc = 0.0
                    for i in range(t_out):
                        gv = grad[b, o, i]
                        gx[b, c, i + off] += wv * gv
                        acc += gv * x[b, c, i + off]
                    gw[o, c, s] += acc
    return gx_arr, gw_arr


def topk_rows(const double[:, ::1] scores, int k):
    cdef Py_ssize_t rows = scores.shape[0], cols = scores.shape[1]
    mask_arr = np.zeros((rows, cols))
    cdef double[:, ::1] mask = mask_arr
    cdef Py_ssize_t r, j, m, best
    cdef double bv
    for r in range(rows):
        # k passes of selection; strict > keeps the lowest column among ties
        for m in range(k):
            best = -1
            for j in range(cols):
                if mask[r, j] != 0.0:
                    continue
                if best < 0 or scores[r, j] > bv:
                    best = j
                    bv = scores[r, j]
            mask[r, best] = 1.0
    return mask_arr
