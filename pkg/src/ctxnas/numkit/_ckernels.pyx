# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for dense-net forward/backward passes.

Semantics mirror `_pykernels` exactly. Matrix products go through BLAS
dgemm (the same routine numpy dispatches to); bias and activation work is
fused into loops for the single-row calls the sampling path hammers, while
large batches hand the transcendentals back to numpy's vectorized ufuncs.
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport tanh
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

ACT_TANH = 0
ACT_RELU = 1

# below this many elements, loop overhead beats ufunc dispatch
DEF SMALL_BLOCK = 512


cdef void _gemm(bint ta, bint tb, double[:, ::1] a, double[:, ::1] b,
                double beta, double[:, ::1] out) noexcept nogil:
    """out = op(a) @ op(b) + beta * out on row-major buffers.

    Fortran dgemm on row-major data computes the transposed product with
    swapped operands; leading dimensions stay the storage row lengths.
    """
    cdef char cta = 84 if ta else 78  # 'T' / 'N'
    cdef char ctb = 84 if tb else 78
    cdef int m = out.shape[0]
    cdef int n = out.shape[1]
    cdef int k = a.shape[0] if ta else a.shape[1]
    cdef int lda = a.shape[1]
    cdef int ldb = b.shape[1]
    cdef int ldc = out.shape[1]
    cdef double alpha = 1.0
    dgemm(&ctb, &cta, &n, &m, &k, &alpha, &b[0, 0], &ldb, &a[0, 0], &lda,
          &beta, &out[0, 0], &ldc)


cdef void _activate_small(double[:, ::1] z, int act) noexcept nogil:
    cdef Py_ssize_t i, j
    if act == 0:
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                z[i, j] = tanh(z[i, j])
    else:
        for i in range(z.shape[0]):
            for j in range(z.shape[1]):
                if z[i, j] < 0.0:
                    z[i, j] = 0.0


def forward(weights, biases, int act, cnp.ndarray[double, ndim=2] x):
    """Forward pass on a (batch, d_in) float64 matrix; see _pykernels.forward."""
    cdef double[:, ::1] a = np.ascontiguousarray(x)
    cdef double[:, ::1] z
    cdef double[:, ::1] w
    cdef double[::1] b
    cdef Py_ssize_t i, j, layer
    cdef Py_ssize_t last = len(weights) - 1
    cache = [np.asarray(a)]
    for layer in range(len(weights)):
        w = weights[layer]
        b = biases[layer]
        zno = np.empty((a.shape[0], w.shape[1]))
        z = zno
        if z.shape[0] * z.shape[1] <= SMALL_BLOCK:
            with nogil:
                for i in range(z.shape[0]):
                    for j in range(z.shape[1]):
                        z[i, j] = b[j]
                _gemm(False, False, a, w, 1.0, z)
        else:
            np.copyto(zno, biases[layer])
            with nogil:
                _gemm(False, False, a, w, 1.0, z)
        if layer == last:
            return zno, cache
        if z.shape[0] * z.shape[1] <= SMALL_BLOCK:
            with nogil:
                _activate_small(z, act)
        elif act == 0:
            np.tanh(zno, out=zno)
        else:
            np.maximum(zno, 0.0, out=zno)
        a = z
        cache.append(zno)
    raise AssertionError("empty network")


def backward(weights, int act, cache, cnp.ndarray[double, ndim=2] grad_out):
    """Backward pass from dL/d(output); see _pykernels.backward."""
    cdef Py_ssize_t n = len(weights)
    # copy: the activation-derivative pass scales g in place
    gobj = np.array(grad_out, dtype=np.float64, order="C")
    cdef double[:, ::1] g = gobj
    cdef double[:, ::1] w, a_in, a_out, dw, gnext
    cdef double[::1] db
    cdef Py_ssize_t layer, i, j
    cdef bint small
    dws = [None] * n
    dbs = [None] * n
    for layer in range(n - 1, -1, -1):
        w = weights[layer]
        a_in = cache[layer]
        small = g.shape[0] * g.shape[1] <= SMALL_BLOCK
        if layer < n - 1:
            a_out = cache[layer + 1]
            if small:
                with nogil:
                    if act == 0:
                        for i in range(g.shape[0]):
                            for j in range(g.shape[1]):
                                g[i, j] *= 1.0 - a_out[i, j] * a_out[i, j]
                    else:
                        for i in range(g.shape[0]):
                            for j in range(g.shape[1]):
                                if a_out[i, j] <= 0.0:
                                    g[i, j] = 0.0
            elif act == 0:
                gobj *= 1.0 - np.square(cache[layer + 1])
            else:
                gobj *= cache[layer + 1] > 0.0
        dwo = np.empty((w.shape[0], w.shape[1]))
        dbo = np.zeros(w.shape[1])
        gno = np.empty((g.shape[0], w.shape[0]))
        dw = dwo
        db = dbo
        gnext = gno
        if small:
            with nogil:
                _gemm(True, False, a_in, g, 0.0, dw)
                for i in range(g.shape[0]):
                    for j in range(g.shape[1]):
                        db[j] += g[i, j]
                _gemm(False, True, g, w, 0.0, gnext)
        else:
            np.sum(gobj, axis=0, out=dbo)
            with nogil:
                _gemm(True, False, a_in, g, 0.0, dw)
                _gemm(False, True, g, w, 0.0, gnext)
        dws[layer] = dwo
        dbs[layer] = dbo
        gobj = gno
        g = gno
    return dws, dbs, gobj
