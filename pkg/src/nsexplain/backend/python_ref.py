"""Pure-NumPy propagation kernels (fallback backend).

Mirrors the compiled extension's API exactly: same function names, argument
order, and return conventions.  Arc arrays arrive sorted by receiver with a
CSR row pointer, so the sparse operator is assembled without any re-sorting.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def normalize_adjacency(recv, send, arc_w, num_nodes):
    """Symmetric renormalization of the weighted adjacency with self-loops.

    deg[v] = 1 + sum of weights received by v; off-diagonal entries are
    w / sqrt(deg_recv * deg_send), the diagonal is 1 / deg.  Returns
    (val, diag, deg) with val aligned to the arc arrays.
    """
    deg = 1.0 + np.bincount(recv, weights=arc_w, minlength=num_nodes)
    inv_sqrt = 1.0 / np.sqrt(deg)
    val = arc_w * inv_sqrt[recv] * inv_sqrt[send]
    return val, 1.0 / deg, deg


def _operator(send, indptr, val, n):
    return sp.csr_array((val, send, indptr), shape=(n, n))


def gcn_forward(recv, send, indptr, val, diag, X, W1, b1, W2, b2, W3, b3, drop1, drop2, drop3):
    """Three masked-propagation layers; returns every intermediate the backward needs.

    Layer k computes M_k = H_{k-1} W_k, P_k = A_hat M_k + b_k, H_k = relu(P_k)
    with an optional pre-scaled dropout mask folded in after the nonlinearity.
    """
    n = X.shape[0]
    A = _operator(send, indptr, val, n)

    def layer(H, W, b, drop):
        M = H @ W
        P = diag[:, None] * M + A @ M + b
        Hn = np.maximum(P, 0.0)
        if drop is not None:
            Hn = Hn * drop
        return M, P, Hn

    M1, P1, H1 = layer(X, W1, b1, drop1)
    M2, P2, H2 = layer(H1, W2, b2, drop2)
    M3, P3, H3 = layer(H2, W3, b3, drop3)
    return M1, P1, H1, M2, P2, H2, M3, P3, H3


def gcn_backward(
    recv,
    send,
    indptr,
    val,
    diag,
    deg,
    X,
    W1,
    W2,
    W3,
    M1,
    P1,
    H1,
    M2,
    P2,
    H2,
    M3,
    P3,
    drop1,
    drop2,
    drop3,
    dH3,
):
    """Reverse pass through the three layers and the renormalization.

    Per layer, with T the gradient at P_k: the operator gradient accumulates
    S[a] += <T[recv_a], M_k[send_a]> (and the matching diagonal term), the
    parameter gradient is H_{k-1}^T (A_hat^T T), and the input gradient
    continues as (A_hat^T T) W_k^T.  The degree terms then convert S into
    per-arc weight gradients:

        d w[a] = S[a] / sqrt(deg_recv deg_send)
                 - (row_recv + col_recv) / (2 deg_recv)

    where row/col collect S * val over arcs touching the receiver plus the
    diagonal contribution, because w[a] raises deg[recv_a] by one.
    """
    n = X.shape[0]
    A = _operator(send, indptr, val, n)
    AT = A.T
    Sarc = np.zeros(len(val))
    Sdiag = np.zeros(n)
    dWs = []
    dbs = []
    G = dH3
    for W, M, P, H_prev, drop in (
        (W3, M3, P3, H2, drop3),
        (W2, M2, P2, H1, drop2),
        (W1, M1, P1, X, drop1),
    ):
        T = G * (P > 0.0)
        if drop is not None:
            T = T * drop
        Sarc += np.einsum("aj,aj->a", T[recv], M[send])
        Sdiag += np.einsum("vj,vj->v", T, M)
        dbs.append(T.sum(axis=0))
        B = diag[:, None] * T + AT @ T
        dWs.append(H_prev.T @ B)
        G = B @ W.T
    dX = G
    inv_sqrt = 1.0 / np.sqrt(deg)
    row = np.bincount(recv, weights=Sarc * val, minlength=n) + Sdiag * diag
    col = np.bincount(send, weights=Sarc * val, minlength=n) + Sdiag * diag
    gdeg = -(row + col) / (2.0 * deg)
    d_arc = Sarc * inv_sqrt[recv] * inv_sqrt[send] + gdeg[recv]
    dW3, dW2, dW1 = dWs
    db3, db2, db1 = dbs
    return dX, d_arc, dW1, db1, dW2, db2, dW3, db3
