"""Graph convolution layers and a minimal pre-norm transformer encoder.

All layers are pure functions over Tape-bound values.  Normalized
adjacencies are plain numpy data (never differentiated); weights are Vars.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from schagraph import autodiff as ad
from schagraph.autodiff import ShapeError, Var


def normalize(A: np.ndarray) -> np.ndarray:
    """Degree-normalized adjacency with self-loops.

    A_tilde = A + I; out-degrees scale rows, in-degrees scale columns, both
    clamped at 1: M = D_row^{-1/2} A_tilde D_col^{-1/2}.  Coincides with
    the familiar symmetric normalization on undirected graphs.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    A_tilde = A + np.eye(n)
    row = np.maximum(A_tilde.sum(axis=1), 1.0)
    col = np.maximum(A_tilde.sum(axis=0), 1.0)
    return A_tilde / np.sqrt(np.outer(row, col))


def _activate(x: Var, activation: str) -> Var:
    if activation == "relu":
        return ad.relu(x)
    if activation == "sigmoid":
        return ad.sigmoid(x)
    if activation == "none":
        return x
    raise ValueError(f"unknown activation {activation!r}")


def gcn_layer(Z: Var, M: Var, W: Var, activation: str = "relu") -> Var:
    """Standard graph convolution: act(M Z W)."""
    return _activate(ad.matmul(ad.matmul(M, Z), W), activation)


def rgcn_layer(
    Z: Var, Ms: list[Var], Ws: list[Var], activation: str = "relu"
) -> Var:
    """Relational convolution: act(sum_i M_i Z W_i)."""
    if len(Ms) != len(Ws):
        raise ShapeError(
            f"rgcn_layer: {len(Ms)} adjacencies but {len(Ws)} weight matrices"
        )
    terms = [ad.matmul(ad.matmul(M, Z), W) for M, W in zip(Ms, Ws)]
    return _activate(ad.add_n(terms), activation)


def dir_rgcn_layer(
    Z: Var,
    Ms: list[Var],
    Mts: list[Var],
    W_fwd: list[Var],
    W_bwd: list[Var],
    alpha: float,
    activation: str = "relu",
) -> Var:
    """Directed relational convolution.

    act(sum_i alpha * M_i Z W_fwd_i + (1 - alpha) * M_i^T Z W_bwd_i), where
    M_i^T is supplied precomputed so adjacency data stays constant.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if not len(Ms) == len(Mts) == len(W_fwd) == len(W_bwd):
        raise ShapeError("dir_rgcn_layer: per-edge-type argument counts differ")
    terms = []
    for M, Mt, Wf, Wb in zip(Ms, Mts, W_fwd, W_bwd):
        terms.append(ad.scale(ad.matmul(ad.matmul(M, Z), Wf), alpha))
        terms.append(ad.scale(ad.matmul(ad.matmul(Mt, Z), Wb), 1.0 - alpha))
    return _activate(ad.add_n(terms), activation)


# ---------------------------------------------------------------------------
# Transformer encoder


@dataclass
class TransformerLayerVars:
    """One encoder layer's weights, bound to the active tape."""

    wq: list[Var]  # per head, dim x head_dim
    wk: list[Var]
    wv: list[Var]
    wo: Var  # dim x dim
    w1: Var  # dim x ff_dim
    w2: Var  # ff_dim x dim


def sinusoidal_positions(positions: np.ndarray, dim: int) -> np.ndarray:
    """Classic sin/cos positional table evaluated at integer positions."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 1)
    half = (dim + 1) // 2
    freqs = np.power(10000.0, -2.0 * np.arange(half) / dim)
    angles = positions * freqs
    table = np.zeros((positions.shape[0], dim))
    table[:, 0::2] = np.sin(angles)[:, : table[:, 0::2].shape[1]]
    table[:, 1::2] = np.cos(angles)[:, : table[:, 1::2].shape[1]]
    return table


def transformer_encode(
    x: Var,
    layers: list[TransformerLayerVars],
    positions: np.ndarray | None = None,
) -> Var:
    """Pre-norm encoder: self-attention + residual, then 2-layer MLP + residual.

    Sinusoidal encodings for `positions` (default 0..n-1) are added before
    the first layer.
    """
    n, dim = x.shape
    tape = x.tape
    if positions is None:
        positions = np.arange(n)
    x = ad.add(x, tape.constant(sinusoidal_positions(positions, dim)))
    for layer in layers:
        heads = len(layer.wq)
        if dim % heads != 0:
            raise ShapeError(f"model dim {dim} not divisible by {heads} heads")
        head_dim = dim // heads
        normed = ad.layer_norm(x)
        contexts = []
        for h in range(heads):
            q = ad.matmul(normed, layer.wq[h])
            k = ad.matmul(normed, layer.wk[h])
            v = ad.matmul(normed, layer.wv[h])
            scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(head_dim))
            contexts.append(ad.matmul(ad.softmax_rows(scores), v))
        attn = ad.matmul(ad.concat_cols(contexts), layer.wo)
        x = ad.add(x, attn)
        normed = ad.layer_norm(x)
        hidden = ad.relu(ad.matmul(normed, layer.w1))
        x = ad.add(x, ad.matmul(hidden, layer.w2))
    return x
