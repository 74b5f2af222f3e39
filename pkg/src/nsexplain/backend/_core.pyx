# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled propagation kernels.

Same API as python_ref: normalize_adjacency, gcn_forward, gcn_backward.
Hand-rolled loops beat BLAS dispatch here because explanation subgraphs are
small (tens to a few hundred nodes) and the kernels run millions of times.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

ctypedef cnp.int64_t i64


cdef void _matmul(const double[:, ::1] A, const double[:, ::1] B, double[:, ::1] C) noexcept:
    # C = A @ B, ikj order so the inner loop runs over contiguous rows
    cdef Py_ssize_t n = A.shape[0], p = A.shape[1], q = B.shape[1]
    cdef Py_ssize_t i, k, j
    cdef double a
    for i in range(n):
        for j in range(q):
            C[i, j] = 0.0
        for k in range(p):
            a = A[i, k]
            if a != 0.0:
                for j in range(q):
                    C[i, j] += a * B[k, j]


cdef void _matmul_at(const double[:, ::1] A, const double[:, ::1] B, double[:, ::1] C) noexcept:
    # C = A^T @ B with A of shape (n, p): parameter-gradient contraction
    cdef Py_ssize_t n = A.shape[0], p = A.shape[1], q = B.shape[1]
    cdef Py_ssize_t v, i, j
    cdef double a
    for i in range(p):
        for j in range(q):
            C[i, j] = 0.0
    for v in range(n):
        for i in range(p):
            a = A[v, i]
            if a != 0.0:
                for j in range(q):
                    C[i, j] += a * B[v, j]


cdef void _matmul_bt(const double[:, ::1] B, const double[:, ::1] W, double[:, ::1] G) noexcept:
    # G = B @ W^T with W of shape (p, q): input-gradient contraction
    cdef Py_ssize_t n = B.shape[0], q = B.shape[1], p = W.shape[0]
    cdef Py_ssize_t v, i, j
    cdef double acc
    for v in range(n):
        for i in range(p):
            acc = 0.0
            for j in range(q):
                acc += B[v, j] * W[i, j]
            G[v, i] = acc


cdef void _propagate(const i64[::1] recv, const i64[::1] send, const double[::1] val,
                     const double[::1] diag, const double[::1] bias,
                     const double[:, ::1] M, double[:, ::1] P) noexcept:
    # P = A_hat @ M + bias; diagonal and bias first, then scatter over arcs
    cdef Py_ssize_t n = M.shape[0], h = M.shape[1], m = recv.shape[0]
    cdef Py_ssize_t v, a, j, r, s
    cdef double w
    for v in range(n):
        w = diag[v]
        for j in range(h):
            P[v, j] = w * M[v, j] + bias[j]
    for a in range(m):
        w = val[a]
        if w != 0.0:
            r = recv[a]
            s = send[a]
            for j in range(h):
                P[r, j] += w * M[s, j]


cdef void _propagate_t(const i64[::1] recv, const i64[::1] send, const double[::1] val,
                       const double[::1] diag, const double[:, ::1] T, double[:, ::1] B) noexcept:
    # B = A_hat^T @ T; the operator is symmetric only in pattern, not values
    cdef Py_ssize_t n = T.shape[0], h = T.shape[1], m = recv.shape[0]
    cdef Py_ssize_t v, a, j, r, s
    cdef double w
    for v in range(n):
        w = diag[v]
        for j in range(h):
            B[v, j] = w * T[v, j]
    for a in range(m):
        w = val[a]
        if w != 0.0:
            r = recv[a]
            s = send[a]
            for j in range(h):
                B[s, j] += w * T[r, j]


cdef void _relu_into(const double[:, ::1] P, object drop, double[:, ::1] H):
    cdef Py_ssize_t n = P.shape[0], h = P.shape[1]
    cdef Py_ssize_t v, j
    cdef double x
    cdef const double[:, ::1] D
    if drop is None:
        for v in range(n):
            for j in range(h):
                x = P[v, j]
                H[v, j] = x if x > 0.0 else 0.0
    else:
        D = drop
        for v in range(n):
            for j in range(h):
                x = P[v, j]
                H[v, j] = x * D[v, j] if x > 0.0 else 0.0


cdef void _grad_at_pre(const double[:, ::1] G, const double[:, ::1] P, object drop,
                       double[:, ::1] T):
    # T = G * relu'(P) * drop: gradient at the pre-activation
    cdef Py_ssize_t n = P.shape[0], h = P.shape[1]
    cdef Py_ssize_t v, j
    cdef const double[:, ::1] D
    if drop is None:
        for v in range(n):
            for j in range(h):
                T[v, j] = G[v, j] if P[v, j] > 0.0 else 0.0
    else:
        D = drop
        for v in range(n):
            for j in range(h):
                T[v, j] = G[v, j] * D[v, j] if P[v, j] > 0.0 else 0.0


cdef void _accum_s(const i64[::1] recv, const i64[::1] send, const double[:, ::1] T,
                   const double[:, ::1] M, double[::1] Sarc, double[::1] Sdiag) noexcept:
    # operator gradient on the sparse pattern: S[a] += <T[recv], M[send]>
    cdef Py_ssize_t n = T.shape[0], h = T.shape[1], m = recv.shape[0]
    cdef Py_ssize_t v, a, j
    cdef double acc
    for a in range(m):
        acc = 0.0
        for j in range(h):
            acc += T[recv[a], j] * M[send[a], j]
        Sarc[a] += acc
    for v in range(n):
        acc = 0.0
        for j in range(h):
            acc += T[v, j] * M[v, j]
        Sdiag[v] += acc


def normalize_adjacency(recv, send, arc_w, num_nodes):
    cdef cnp.ndarray[i64, ndim=1] r = np.ascontiguousarray(recv, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] s = np.ascontiguousarray(send, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] w = np.ascontiguousarray(arc_w, dtype=np.float64)
    cdef Py_ssize_t n = num_nodes, m = r.shape[0]
    cdef cnp.ndarray[double, ndim=1] deg = np.ones(n)
    cdef cnp.ndarray[double, ndim=1] val = np.empty(m)
    cdef cnp.ndarray[double, ndim=1] diag = np.empty(n)
    cdef Py_ssize_t a, v
    for a in range(m):
        deg[r[a]] += w[a]
    for v in range(n):
        diag[v] = 1.0 / deg[v]
    for a in range(m):
        val[a] = w[a] / sqrt(deg[r[a]] * deg[s[a]])
    return val, diag, deg


def gcn_forward(recv, send, indptr, val, diag, X, W1, b1, W2, b2, W3, b3, drop1, drop2, drop3):
    cdef cnp.ndarray[i64, ndim=1] r = np.ascontiguousarray(recv, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] s = np.ascontiguousarray(send, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] v_ = np.ascontiguousarray(val, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] d_ = np.ascontiguousarray(diag, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] X_ = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] w1 = np.ascontiguousarray(W1, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] w2 = np.ascontiguousarray(W2, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] w3 = np.ascontiguousarray(W3, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] b1_ = np.ascontiguousarray(b1, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] b2_ = np.ascontiguousarray(b2, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] b3_ = np.ascontiguousarray(b3, dtype=np.float64)
    cdef Py_ssize_t n = X_.shape[0]
    M1 = np.empty((n, w1.shape[1]))
    P1 = np.empty((n, w1.shape[1]))
    H1 = np.empty((n, w1.shape[1]))
    M2 = np.empty((n, w2.shape[1]))
    P2 = np.empty((n, w2.shape[1]))
    H2 = np.empty((n, w2.shape[1]))
    M3 = np.empty((n, w3.shape[1]))
    P3 = np.empty((n, w3.shape[1]))
    H3 = np.empty((n, w3.shape[1]))
    _matmul(X_, w1, M1)
    _propagate(r, s, v_, d_, b1_, M1, P1)
    _relu_into(P1, drop1, H1)
    _matmul(H1, w2, M2)
    _propagate(r, s, v_, d_, b2_, M2, P2)
    _relu_into(P2, drop2, H2)
    _matmul(H2, w3, M3)
    _propagate(r, s, v_, d_, b3_, M3, P3)
    _relu_into(P3, drop3, H3)
    return M1, P1, H1, M2, P2, H2, M3, P3, H3


def gcn_backward(recv, send, indptr, val, diag, deg, X, W1, W2, W3,
                 M1, P1, H1, M2, P2, H2, M3, P3, drop1, drop2, drop3, dH3):
    cdef cnp.ndarray[i64, ndim=1] r = np.ascontiguousarray(recv, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] s = np.ascontiguousarray(send, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=1] v_ = np.ascontiguousarray(val, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] d_ = np.ascontiguousarray(diag, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] dg = np.ascontiguousarray(deg, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] X_ = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = X_.shape[0], m = r.shape[0]
    cdef cnp.ndarray[double, ndim=1] Sarc = np.zeros(m)
    cdef cnp.ndarray[double, ndim=1] Sdiag = np.zeros(n)
    Ws = (np.ascontiguousarray(W3, dtype=np.float64),
          np.ascontiguousarray(W2, dtype=np.float64),
          np.ascontiguousarray(W1, dtype=np.float64))
    Ms = (np.ascontiguousarray(M3, dtype=np.float64),
          np.ascontiguousarray(M2, dtype=np.float64),
          np.ascontiguousarray(M1, dtype=np.float64))
    Ps = (np.ascontiguousarray(P3, dtype=np.float64),
          np.ascontiguousarray(P2, dtype=np.float64),
          np.ascontiguousarray(P1, dtype=np.float64))
    Hs = (np.ascontiguousarray(H2, dtype=np.float64),
          np.ascontiguousarray(H1, dtype=np.float64),
          X_)
    drops = (drop3, drop2, drop1)
    G = np.ascontiguousarray(dH3, dtype=np.float64)
    dWs = []
    dbs = []
    cdef Py_ssize_t k
    for k in range(3):
        h = Ms[k].shape[1]
        T = np.empty((n, h))
        _grad_at_pre(G, Ps[k], drops[k], T)
        _accum_s(r, s, T, Ms[k], Sarc, Sdiag)
        dbs.append(T.sum(axis=0))
        B = np.empty((n, h))
        _propagate_t(r, s, v_, d_, T, B)
        dW = np.empty((Hs[k].shape[1], h))
        _matmul_at(Hs[k], B, dW)
        dWs.append(dW)
        Gn = np.empty((n, Ws[k].shape[0]))
        _matmul_bt(B, Ws[k], Gn)
        G = Gn
    cdef cnp.ndarray[double, ndim=1] rowcol = np.zeros(n)
    cdef cnp.ndarray[double, ndim=1] d_arc = np.empty(m)
    cdef double t
    cdef Py_ssize_t a, v
    for a in range(m):
        t = Sarc[a] * v_[a]
        rowcol[r[a]] += t
        rowcol[s[a]] += t
    for v in range(n):
        rowcol[v] += 2.0 * Sdiag[v] * d_[v]
        rowcol[v] = -rowcol[v] / (2.0 * dg[v])
    for a in range(m):
        d_arc[a] = Sarc[a] / sqrt(dg[r[a]] * dg[s[a]]) + rowcol[r[a]]
    return G, d_arc, dWs[2], dbs[2], dWs[1], dbs[1], dWs[0], dbs[0]
