"""Global feature computation fused into node embeddings before scoring.

Two methods: a sequential one (transformer over the topologically sorted
embeddings, mean-pooled into one vector) and a subspace-merging one (a
fused graph distilled from the spectral embeddings of every edge type's
Laplacian, convolved with the original features).  Spectral quantities are
fixed per graph and never differentiated; only the fused-convolution
weight trains.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from schagraph import autodiff as ad
from schagraph.autodiff import Var
from schagraph.eigen import jacobi_eigh
from schagraph.layers import TransformerLayerVars, normalize, transformer_encode


def sequential_global(
    Z: Var,
    topo_order: np.ndarray,
    prev_scores: Var,
    tlayers: list[TransformerLayerVars],
) -> Var:
    """Append a score-weighted copy of the pooled global vector to each row.

    Rows are reordered into topological order, encoded, and mean-pooled
    into x_global; node j receives x_global * prev_scores[j] so nodes that
    were dropped (or nearly dropped) at the previous depth contribute a
    vanishing global block.
    """
    sequence = ad.permute_rows(Z, topo_order)
    encoded = transformer_encode(sequence, tlayers)
    x_global = ad.mean_rows(encoded)
    block = ad.matmul(prev_scores, x_global)
    return ad.concat_cols([Z, block])


def symmetrize(A: np.ndarray) -> np.ndarray:
    """Logical or of A and its transpose, diagonal cleared."""
    A = np.asarray(A, dtype=float)
    out = np.maximum(A, A.T)
    np.fill_diagonal(out, 0.0)
    return out


def laplacian(A_hat: np.ndarray) -> np.ndarray:
    """Symmetric normalized Laplacian I - D^{-1/2} A D^{-1/2}, degrees >= 1."""
    A_hat = np.asarray(A_hat, dtype=float)
    n = A_hat.shape[0]
    deg = np.maximum(A_hat.sum(axis=1), 1.0)
    scale = 1.0 / np.sqrt(deg)
    return np.eye(n) - A_hat * np.outer(scale, scale)


def _canonical_signs(U: np.ndarray) -> np.ndarray:
    U = U.copy()
    for col in range(U.shape[1]):
        nonzero = np.nonzero(np.abs(U[:, col]) > 1e-10)[0]
        if nonzero.size and U[nonzero[0], col] < 0:
            U[:, col] = -U[:, col]
    return U


def subspace_embeddings(L: np.ndarray, k: int) -> np.ndarray:
    """Eigenvectors of the k smallest eigenvalues, sign-canonicalized."""
    n = L.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    _, U = jacobi_eigh(L)
    return _canonical_signs(U[:, :k])


def merge_subspaces(
    Ls: list[np.ndarray], Us: list[np.ndarray], lam: float, k: int
) -> np.ndarray:
    """Fuse per-edge-type subspaces into one representative graph.

    L_merge = sum_i L_i - lam * sum_i U_i U_i^T; the k smallest
    eigenvectors of its symmetric part give a projector whose positive
    off-diagonal entries (symmetrized, scaled to row sums <= 1) form the
    fused adjacency.
    """
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    if len(Ls) != len(Us):
        raise ValueError("merge_subspaces: Laplacian/embedding counts differ")
    L_merge = np.zeros_like(Ls[0])
    for L, U in zip(Ls, Us):
        L_merge = L_merge + L - lam * (U @ U.T)
    sym = (L_merge + L_merge.T) / 2.0
    _, V = jacobi_eigh(sym)
    U_bar = _canonical_signs(V[:, :k])
    P = U_bar @ U_bar.T
    A_mod = np.maximum(P - np.diag(np.diag(P)), 0.0)
    A_mod = (A_mod + A_mod.T) / 2.0
    max_row = A_mod.sum(axis=1).max()
    if max_row > 1.0:
        A_mod = A_mod / max_row
    return A_mod


def binarize_top_q(A_mod: np.ndarray, q: int) -> np.ndarray:
    """Keep the q largest positive entries of each row as edges."""
    n = A_mod.shape[0]
    out = np.zeros((n, n))
    for row in range(n):
        order = np.argsort(-A_mod[row], kind="stable")
        kept = 0
        for col in order:
            if kept >= q or A_mod[row, col] <= 0:
                break
            out[row, col] = 1.0
            kept += 1
    return out


@dataclass(frozen=True)
class GrassmannCache:
    """Per-graph fused topology, fixed across training epochs."""

    A_mod: np.ndarray
    M_mod: np.ndarray  # normalized binarized fused adjacency


def grassmann_precompute(adjacency: dict, k: int, lam: float) -> GrassmannCache:
    keys = sorted(adjacency.keys())
    n = adjacency[keys[0]].shape[0]
    k_eff = min(k, n)
    hats = [symmetrize(adjacency[key]) for key in keys]
    Ls = [laplacian(h) for h in hats]
    Us = [subspace_embeddings(L, k_eff) for L in Ls]
    A_mod = merge_subspaces(Ls, Us, lam, k_eff)
    union = np.zeros((n, n))
    for h in hats:
        union = np.maximum(union, h)
    avg_degree = max(1, int(round(union.sum() / n)))
    M_mod = normalize(binarize_top_q(A_mod, avg_degree))
    return GrassmannCache(A_mod=A_mod, M_mod=M_mod)


def grassmann_global(X: Var, M_mod: Var, W_mod: Var) -> Var:
    """Convolve the original features over the fused graph: ReLU(M X W)."""
    return ad.relu(ad.matmul(ad.matmul(M_mod, X), W_mod))
