"""Cyclic Jacobi eigensolver for dense symmetric matrices.

Sizes here are small (a few hundred at most), where Jacobi is easy to
verify: every rotation is orthogonal by construction, so U stays
orthonormal to machine precision.
"""

from __future__ import annotations

import numpy as np


def jacobi_eigh(
    S: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvector matrix U with eigenvectors
    as columns).  The input is symmetrized as (S + S.T)/2 first; sweeps
    stop once every off-diagonal magnitude drops below `tol`.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"jacobi_eigh: expected a square matrix, got {S.shape}")
    n = S.shape[0]
    A = (S + S.T) / 2.0
    U = np.eye(n)
    if n == 1:
        return A[0].copy(), U

    for _ in range(max_sweeps):
        off = np.abs(A - np.diag(np.diag(A))).max()
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    A[p, q] = A[q, p] = 0.0
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                col_p, col_q = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * col_p - s * col_q
                A[:, q] = s * col_p + c * col_q
                row_p, row_q = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * row_p - s * row_q
                A[q, :] = s * row_p + c * row_q
                A[p, q] = A[q, p] = 0.0
                up, uq = U[:, p].copy(), U[:, q].copy()
                U[:, p] = c * up - s * uq
                U[:, q] = s * up + c * uq

    eigenvalues = np.diag(A).copy()
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], U[:, order]
