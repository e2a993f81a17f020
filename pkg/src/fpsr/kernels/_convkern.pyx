# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled convolution core: C im2col/col2im packing plus direct BLAS GEMM.

Forward and input-gradient parallelize over the batch (each sample
writes a disjoint output slice, so the result is bit-deterministic for
any thread count). The weight gradient accumulates across the batch and
stays sequential. float32 and float64 are both supported through fused
types (float64 is what the finite-difference gradient checks run on).
"""

from cython cimport floating
from cython.parallel cimport prange
from scipy.linalg.cython_blas cimport dgemm, sgemm


cdef void _gemm(bint single, char ta, char tb, int m, int n, int k,
                double alpha, void* a, int lda, void* b, int ldb,
                double beta, void* c, int ldc) noexcept nogil:
    # Row-major products are issued through column-major BLAS with the
    # operand order swapped by the callers.
    cdef float af, bf
    if single:
        af = <float>alpha
        bf = <float>beta
        sgemm(&ta, &tb, &m, &n, &k, &af, <float*>a, &lda,
              <float*>b, &ldb, &bf, <float*>c, &ldc)
    else:
        dgemm(&ta, &tb, &m, &n, &k, &alpha, <double*>a, &lda,
              <double*>b, &ldb, &beta, <double*>c, &ldc)


cdef void _pack_sample(floating[:, :, :, ::1] xp, Py_ssize_t n,
                       Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
                       Py_ssize_t ho, Py_ssize_t wo,
                       floating[:, ::1] cols) noexcept nogil:
    cdef Py_ssize_t ci, i, j, oh, ow, row
    for ci in range(xp.shape[1]):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for oh in range(ho):
                    for ow in range(wo):
                        cols[row, oh * wo + ow] = xp[n, ci, oh * stride + i, ow * stride + j]


def conv2d_forward(floating[:, :, :, ::1] xp, floating[:, :, :, ::1] w,
                   floating[::1] bias, int stride,
                   floating[:, :, ::1] cols, floating[:, :, :, ::1] out):
    """out[n] = w2d @ im2col(xp[n]) + bias, one GEMM per sample.

    xp is already zero-padded. cols is (N, Cin*kh*kw, Ho*Wo) scratch so
    batch items can pack concurrently.
    """
    cdef Py_ssize_t N = xp.shape[0]
    cdef Py_ssize_t co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t hw = ho * wo, ckk = w.shape[1] * kh * kw
    cdef Py_ssize_t n, c, oh, ow
    cdef floating bv
    cdef bint single = (floating is float)
    for n in prange(N, nogil=True, schedule="static"):
        _pack_sample(xp, n, kh, kw, stride, ho, wo, cols[n])
        _gemm(single, b'N', b'N', <int>hw, <int>co, <int>ckk,
              1.0, <void*>&cols[n, 0, 0], <int>hw,
              <void*>&w[0, 0, 0, 0], <int>ckk,
              0.0, <void*>&out[n, 0, 0, 0], <int>hw)
        for c in range(co):
            bv = bias[c]
            for oh in range(ho):
                for ow in range(wo):
                    out[n, c, oh, ow] = out[n, c, oh, ow] + bv
    return 0


def conv2d_grad_input(floating[:, :, :, ::1] gout, floating[:, :, :, ::1] w,
                      int stride, floating[:, :, ::1] gcols,
                      floating[:, :, :, ::1] gxp):
    """Scatter w2d.T @ gout[n] back onto the padded input gradient.

    gxp must be zero-initialised by the caller.
    """
    cdef Py_ssize_t N = gout.shape[0]
    cdef Py_ssize_t co = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = gout.shape[2], wo = gout.shape[3]
    cdef Py_ssize_t hw = ho * wo, ckk = w.shape[1] * kh * kw
    cdef Py_ssize_t n, ci, i, j, oh, ow, row
    cdef bint single = (floating is float)
    for n in prange(N, nogil=True, schedule="static"):
        _gemm(single, b'N', b'T', <int>hw, <int>ckk, <int>co,
              1.0, <void*>&gout[n, 0, 0, 0], <int>hw,
              <void*>&w[0, 0, 0, 0], <int>ckk,
              0.0, <void*>&gcols[n, 0, 0], <int>hw)
        for ci in range(gxp.shape[1]):
            for i in range(kh):
                for j in range(kw):
                    row = (ci * kh + i) * kw + j
                    for oh in range(ho):
                        for ow in range(wo):
                            gxp[n, ci, oh * stride + i, ow * stride + j] += gcols[n, row, oh * wo + ow]
    return 0


def conv2d_grad_weight(floating[:, :, :, ::1] gout, floating[:, :, :, ::1] xp,
                       int stride, floating[:, ::1] cols,
                       floating[:, :, :, ::1] gw):
    """Accumulate gout[n] @ im2col(xp[n]).T over the batch into gw."""
    cdef Py_ssize_t N = xp.shape[0]
    cdef Py_ssize_t co = gout.shape[1], kh = gw.shape[2], kw = gw.shape[3]
    cdef Py_ssize_t ho = gout.shape[2], wo = gout.shape[3]
    cdef Py_ssize_t hw = ho * wo, ckk = gw.shape[1] * kh * kw
    cdef Py_ssize_t n
    cdef double beta
    cdef bint single = (floating is float)
    with nogil:
        for n in range(N):
            _pack_sample(xp, n, kh, kw, stride, ho, wo, cols)
            beta = 0.0 if n == 0 else 1.0
            _gemm(single, b'T', b'N', <int>ckk, <int>co, <int>hw,
                  1.0, <void*>&cols[0, 0], <int>hw,
                  <void*>&gout[n, 0, 0, 0], <int>hw,
                  beta, <void*>&gw[0, 0, 0, 0], <int>ckk)
    return 0
