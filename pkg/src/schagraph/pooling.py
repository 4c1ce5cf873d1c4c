"""Node-isolation pooling: scoring, threshold masking, and the two losses.

A node whose score falls below c_min has every incident edge pruned (rows
and columns of each adjacency zeroed), so it exchanges no messages with
other nodes at deeper levels; its embedding row persists and continues to
be scored.  Masks accumulate across depths: once pruned, edges stay
pruned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from schagraph import autodiff as ad
from schagraph.autodiff import Tape, Var
from schagraph.layers import dir_rgcn_layer, normalize


@dataclass(frozen=True)
class DepthScores:
    """Per-depth node scores: row l-1 holds the depth-l score vector."""

    scores: np.ndarray  # d x n, entries in [0, 1]
    c_min: float

    @property
    def depth_count(self) -> int:
        return self.scores.shape[0]

    @property
    def n(self) -> int:
        return self.scores.shape[1]

    def to_json(self) -> bytes:
        doc = {"c_min": self.c_min, "scores": self.scores.tolist()}
        return json.dumps(doc).encode("utf-8")

    @classmethod
    def from_json(cls, data: bytes) -> "DepthScores":
        doc = json.loads(data)
        return cls(scores=np.array(doc["scores"], dtype=float), c_min=float(doc["c_min"]))


@dataclass
class PooledGraph:
    """Adjacencies and embeddings after one isolation step."""

    adjacency: dict
    z: Var
    indicator: np.ndarray  # n, 1.0 for surviving nodes


def score_nodes(
    Z: Var,
    Ms: list[Var],
    Mts: list[Var],
    W_fwd: list[Var],
    W_bwd: list[Var],
    alpha: float,
) -> Var:
    """Sigmoid node scores from a directed relational convolution (q = 1)."""
    return dir_rgcn_layer(Z, Ms, Mts, W_fwd, W_bwd, alpha, activation="sigmoid")


def isolate(
    adjacency: dict,
    Z: Var,
    y_hat: Var,
    c_min: float,
    indicator: np.ndarray | None = None,
) -> PooledGraph:
    """Prune all edges touching below-threshold nodes; reweight embeddings.

    `indicator` overrides the thresholded mask (frozen-mask evaluation).
    The masked adjacency keeps its original orientation: masking rows then
    columns is orientation-symmetric.
    """
    if indicator is None:
        indicator = (y_hat.value[:, 0] >= c_min).astype(float)
    else:
        indicator = np.asarray(indicator, dtype=float)
    keep = np.outer(indicator, indicator)
    masked = {key: A * keep for key, A in adjacency.items()}
    return PooledGraph(adjacency=masked, z=ad.row_scale(Z, y_hat), indicator=indicator)


def pooling_loss(score_vars: list[Var], targets: np.ndarray) -> Var:
    """Binary cross-entropy summed over all depths and nodes."""
    targets = np.asarray(targets, dtype=float)
    if targets.shape[0] != len(score_vars):
        raise ad.ShapeError(
            f"pooling_loss: {len(score_vars)} depth scores vs {targets.shape[0]} targets"
        )
    terms = [
        ad.bce(y, targets[l].reshape(-1, 1)) for l, y in enumerate(score_vars)
    ]
    return ad.add_n(terms)


def monotonicity_loss(
    score_vars: list[Var], c_min: float, strict: bool = False
) -> Var:
    """Regularizer pushing deeper scores of dropped nodes toward zero.

    Sums y_hat^(l+1)_j over nodes below threshold at level l, for l from 2
    to d-1 (`strict` extends the sum to start at l = 1).  The indicator is
    a constant during differentiation; only the deeper score receives
    gradient.
    """
    d = len(score_vars)
    tape = score_vars[0].tape
    start = 0 if strict else 1
    terms = []
    for i in range(start, d - 1):
        fired = (score_vars[i].value < c_min).astype(float)
        if not fired.any():
            continue
        terms.append(ad.sum(ad.elementwise_mul(score_vars[i + 1], tape.constant(fired))))
    if not terms:
        return tape.constant([[0.0]])
    return ad.add_n(terms)


def monotonicity_value(scores: np.ndarray, c_min: float, strict: bool = False) -> float:
    """Numeric monotonicity loss of a d x n score matrix."""
    d = scores.shape[0]
    start = 0 if strict else 1
    total = 0.0
    for i in range(start, d - 1):
        total += float((scores[i + 1] * (scores[i] < c_min)).sum())
    return total


@dataclass
class DepthLayerVars:
    """One depth's weights bound to the active tape."""

    conv: list[tuple[list[Var], list[Var]]]  # per conv layer: (W_fwd_i, W_bwd_i)
    score: tuple[list[Var], list[Var]]


@dataclass
class StackResult:
    score_vars: list[Var]
    embeddings: list[Var]  # post-conv, pre-reweighting Z of each depth
    masks: list[np.ndarray]

    @property
    def scores(self) -> np.ndarray:
        return np.concatenate([y.value.T for y in self.score_vars], axis=0)


def depth_step(
    tape: Tape,
    adjacency: dict,
    Z: Var,
    weights: DepthLayerVars,
    alpha: float,
    c_min: float,
    global_fn=None,
    prev_scores: Var | None = None,
    frozen_mask: np.ndarray | None = None,
) -> tuple[Var, PooledGraph]:
    """Convolve, optionally append global features, score, isolate.

    Returns (score vector, post-conv embedding, pooled graph); the pooled
    graph carries the reweighted embedding that feeds the next depth.
    """
    norms = [normalize(adjacency[k]) for k in sorted(adjacency.keys())]
    Ms = [tape.constant(M) for M in norms]
    Mts = [tape.constant(M.T) for M in norms]
    for w_fwd, w_bwd in weights.conv:
        Z = dir_rgcn_layer(Z, Ms, Mts, w_fwd, w_bwd, alpha, activation="relu")
    Z_score = Z if global_fn is None else global_fn(Z, prev_scores)
    y_hat = score_nodes(Z_score, Ms, Mts, weights.score[0], weights.score[1], alpha)
    pooled = isolate(adjacency, Z, y_hat, c_min, indicator=frozen_mask)
    return y_hat, Z, pooled


def apply_depth_stack(
    tape: Tape,
    adjacency: dict,
    X: np.ndarray,
    depth_weights: list[DepthLayerVars],
    alpha: float,
    c_min: float,
    global_fn=None,
    frozen_masks: list[np.ndarray] | None = None,
) -> StackResult:
    """Run the full per-depth convolve/score/isolate pipeline.

    `global_fn(depth_index, Z, prev_scores) -> Var` widens the embedding
    fed to the scoring layer; the convolution output itself (reweighted by
    its scores) is what flows to the next depth.
    """
    if not 0.0 < c_min < 1.0:
        raise ValueError(f"c_min must lie in (0, 1), got {c_min}")
    n = X.shape[0]
    Z = tape.constant(X)
    prev_scores = tape.constant(np.ones((n, 1)))
    current = {k: np.asarray(A, dtype=float) for k, A in adjacency.items()}
    result = StackResult(score_vars=[], embeddings=[], masks=[])
    for l, weights in enumerate(depth_weights):
        bound_global = None
        if global_fn is not None:
            bound_global = lambda Zl, prev, _l=l: global_fn(_l, Zl, prev)
        y_hat, Z_conv, pooled = depth_step(
            tape,
            current,
            Z,
            weights,
            alpha,
            c_min,
            global_fn=bound_global,
            prev_scores=prev_scores,
            frozen_mask=None if frozen_masks is None else frozen_masks[l],
        )
        result.score_vars.append(y_hat)
        result.embeddings.append(Z_conv)
        result.masks.append(pooled.indicator)
        current = pooled.adjacency
        Z = pooled.z
        prev_scores = y_hat
    return result


def membership(scores: np.ndarray, thresholds) -> np.ndarray:
    """Per-depth bit arrays: note j is in depth l iff score >= threshold_l."""
    scores = np.asarray(scores, dtype=float)
    d = scores.shape[0]
    thresholds = np.asarray(thresholds, dtype=float).reshape(-1)
    if thresholds.size == 1:
        thresholds = np.repeat(thresholds, d)
    if thresholds.size != d:
        raise ValueError(
            f"expected one threshold or {d} per-depth thresholds, got {thresholds.size}"
        )
    return (scores >= thresholds[:, None]).astype(int)
