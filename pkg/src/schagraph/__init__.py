"""Hierarchical music analysis as a learnable graph pooling problem.

The package converts symbolic scores into multi-relational note graphs,
trains a directed relational GNN whose pooling layer isolates notes that
fall below a per-depth score threshold, and serves the resulting depth
scores to an analyst who steers the final analysis by picking thresholds.
"""

from schagraph.score import (
    AnnotatedPiece,
    KeyContext,
    Note,
    Pitch,
    SchaAnnotation,
    Score,
    ScoreError,
    augment_12_keys,
    max_depth,
    parse_annotation_json,
    parse_score_json,
    serialize_annotation,
    serialize_score,
    transpose,
)
from schagraph.graph import EdgeType, MusicGraph, build_graph
from schagraph.model import ModelConfig, init_params

__all__ = [
    "AnnotatedPiece",
    "KeyContext",
    "Note",
    "Pitch",
    "SchaAnnotation",
    "Score",
    "ScoreError",
    "augment_12_keys",
    "max_depth",
    "parse_annotation_json",
    "parse_score_json",
    "serialize_annotation",
    "serialize_score",
    "transpose",
    "EdgeType",
    "MusicGraph",
    "build_graph",
    "ModelConfig",
    "init_params",
]

__version__ = "0.1.0"
