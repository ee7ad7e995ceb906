# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled fused kernel for the batched MLP forward/backward pass.

Mirrors nnmf._kernels._numpy_backend: layer matmuls go through BLAS dgemm
while the gather / input-build / bias+sigmoid / scatter stages run as C
loops, avoiding the large temporaries and slow scattered accumulation of
the pure-NumPy path.  Sequential and deterministic: accumulation follows
triple order.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

NAME = "compiled"


cdef void rm_gemm(bint ta, bint tb, double alpha,
                  double[:, ::1] A, double[:, ::1] B,
                  double beta, double[:, ::1] C) noexcept:
    """Row-major C = alpha*op(A)@op(B) + beta*C via Fortran dgemm.

    Row-major buffers look transposed to Fortran, so the operands swap:
    C^T = op(B)^T op(A)^T.
    """
    cdef int m = C.shape[0]
    cdef int n = C.shape[1]
    cdef int k = A.shape[0] if ta else A.shape[1]
    cdef int lda = A.shape[1]
    cdef int ldb = B.shape[1]
    cdef int ldc = C.shape[1]
    cdef char cta = 84 if ta else 78  # 'T' / 'N'
    cdef char ctb = 84 if tb else 78
    dgemm(&ctb, &cta, &n, &m, &k, &alpha,
          &B[0, 0], &ldb, &A[0, 0], &lda, &beta, &C[0, 0], &ldc)


cdef inline double _sigmoid(double z) noexcept:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef void _bias_sigmoid(double[:, ::1] Z, double[::1] bias, bint squash) noexcept:
    cdef Py_ssize_t i, j
    cdef double z
    for i in range(Z.shape[0]):
        for j in range(Z.shape[1]):
            z = Z[i, j] + bias[j]
            Z[i, j] = _sigmoid(z) if squash else z


def forward(list weights, list biases, inputs):
    """Batched forward pass; returns predictions of shape (B,)."""
    cdef cnp.ndarray a = np.ascontiguousarray(inputs, dtype=np.float64)
    cdef cnp.ndarray W, Z
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t l
    cdef Py_ssize_t B = a.shape[0]
    for l in range(n_layers):
        W = np.ascontiguousarray(weights[l], dtype=np.float64)
        Z = np.empty((B, W.shape[1]), dtype=np.float64)
        rm_gemm(False, False, 1.0, a, W, 0.0, Z)
        _bias_sigmoid(Z, np.ascontiguousarray(biases[l], dtype=np.float64),
                      l < n_layers - 1)
        a = Z
    return a.reshape(B)


def fused_gradient(U, V, Up, Vp, rows, cols, values, list weights, list biases):
    """Full-batch squared-error gradient for the NNMF parameters.

    Returns (sse, preds, dU, dV, dUp, dVp, dWs, dbs); the regularizer is
    the caller's business.
    """
    cdef double[:, ::1] U_ = np.ascontiguousarray(U, dtype=np.float64)
    cdef double[:, ::1] V_ = np.ascontiguousarray(V, dtype=np.float64)
    cdef double[:, :, ::1] Up_ = np.ascontiguousarray(Up, dtype=np.float64)
    cdef double[:, :, ::1] Vp_ = np.ascontiguousarray(Vp, dtype=np.float64)
    cdef cnp.int64_t[::1] rows_ = np.ascontiguousarray(rows, dtype=np.int64)
    cdef cnp.int64_t[::1] cols_ = np.ascontiguousarray(cols, dtype=np.int64)
    cdef double[::1] vals_ = np.ascontiguousarray(values, dtype=np.float64)

    cdef Py_ssize_t B = rows_.shape[0]
    cdef Py_ssize_t D = U_.shape[1]
    cdef Py_ssize_t Dp = Up_.shape[1]
    cdef Py_ssize_t K = Up_.shape[2]
    cdef Py_ssize_t n_in = 2 * D + Dp
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t b, d, k, l, r, c, j
    cdef double acc

    # gather latent features and build the network input block
    X_arr = np.empty((B, n_in), dtype=np.float64)
    cdef double[:, ::1] X = X_arr
    for b in range(B):
        r = rows_[b]
        c = cols_[b]
        for d in range(D):
            X[b, d] = U_[r, d]
            X[b, D + d] = V_[c, d]
        for d in range(Dp):
            acc = 0.0
            for k in range(K):
                acc += Up_[r, d, k] * Vp_[c, d, k]
            X[b, 2 * D + d] = acc

    # forward, keeping every activation for the backward sweep
    cdef list w_arrs = [np.ascontiguousarray(w, dtype=np.float64) for w in weights]
    cdef list b_arrs = [np.ascontiguousarray(v, dtype=np.float64) for v in biases]
    cdef list acts = [X_arr]
    a_arr = X_arr
    cdef cnp.ndarray Z
    for l in range(n_layers):
        Z = np.empty((B, (<object>w_arrs[l]).shape[1]), dtype=np.float64)
        rm_gemm(False, False, 1.0, a_arr, w_arrs[l], 0.0, Z)
        _bias_sigmoid(Z, b_arrs[l], l < n_layers - 1)
        a_arr = Z
        if l < n_layers - 1:
            acts.append(Z)

    preds_arr = a_arr.reshape(B)
    cdef double[::1] preds = preds_arr
    delta_arr = np.empty((B, 1), dtype=np.float64)
    cdef double[:, ::1] delta2 = delta_arr
    cdef double sse = 0.0
    cdef double resid
    for b in range(B):
        resid = preds[b] - vals_[b]
        sse += resid * resid
        delta2[b, 0] = 2.0 * resid

    # backward sweep over layers
    cdef list dWs = [None] * n_layers
    cdef list dbs = [None] * n_layers
    cdef cnp.ndarray delta = delta_arr
    cdef cnp.ndarray dW, da, act
    cdef double[:, ::1] delta_v, da_v, act_v
    cdef double[::1] db_v
    d_inputs_arr = None
    for l in range(n_layers - 1, -1, -1):
        act = acts[l]
        dW = np.empty(((<object>w_arrs[l]).shape[0], (<object>w_arrs[l]).shape[1]),
                      dtype=np.float64)
        rm_gemm(True, False, 1.0, act, delta, 0.0, dW)
        dWs[l] = dW
        db_arr = np.zeros((<object>w_arrs[l]).shape[1], dtype=np.float64)
        db_v = db_arr
        delta_v = delta
        for b in range(B):
            for j in range(delta_v.shape[1]):
                db_v[j] += delta_v[b, j]
        dbs[l] = db_arr
        da = np.empty((B, (<object>w_arrs[l]).shape[0]), dtype=np.float64)
        rm_gemm(False, True, 1.0, delta, w_arrs[l], 0.0, da)
        if l > 0:
            # act holds sigmoid outputs: derivative is act * (1 - act)
            da_v = da
            act_v = act
            for b in range(B):
                for j in range(da_v.shape[1]):
                    da_v[b, j] *= act_v[b, j] * (1.0 - act_v[b, j])
            delta = da
        else:
            d_inputs_arr = da

    # scatter input gradients back onto the per-entity feature arrays
    cdef double[:, ::1] dX = d_inputs_arr
    dU_arr = np.zeros((U_.shape[0], D), dtype=np.float64)
    dV_arr = np.zeros((V_.shape[0], D), dtype=np.float64)
    dUp_arr = np.zeros((Up_.shape[0], Dp, K), dtype=np.float64)
    dVp_arr = np.zeros((Vp_.shape[0], Dp, K), dtype=np.float64)
    cdef double[:, ::1] dU = dU_arr
    cdef double[:, ::1] dV = dV_arr
    cdef double[:, :, ::1] dUp = dUp_arr
    cdef double[:, :, ::1] dVp = dVp_arr
    cdef double g
    for b in range(B):
        r = rows_[b]
        c = cols_[b]
        for d in range(D):
            dU[r, d] += dX[b, d]
            dV[c, d] += dX[b, D + d]
        for d in range(Dp):
            g = dX[b, 2 * D + d]
            for k in range(K):
                dUp[r, d, k] += g * Vp_[c, d, k]
                dVp[c, d, k] += g * Up_[r, d, k]

    return sse, preds_arr, dU_arr, dV_arr, dUp_arr, dVp_arr, dWs, dbs
