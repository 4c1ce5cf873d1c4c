"""Dataset assembly, training loops, metrics, sweeps, and checkpoints."""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from schagraph import autodiff as ad
from schagraph.autodiff import Tape
from schagraph.globalfeat import GrassmannCache, grassmann_precompute
from schagraph.graph import MusicGraph, build_graph
from schagraph.model import (
    POOLING_VARIANTS,
    ModelConfig,
    ablate_edges,
    forward_scores,
    init_params,
)
from schagraph.optim import AdamState, adam_step
from schagraph.pooling import monotonicity_loss, monotonicity_value, pooling_loss
from schagraph.score import VOICE_LABELS, AnnotatedPiece, augment_12_keys


class DivergenceError(RuntimeError):
    """Training hit a non-finite loss; carries the last good checkpoint."""

    def __init__(self, message: str, checkpoint: "Checkpoint | None"):
        super().__init__(message)
        self.checkpoint = checkpoint


class CheckpointError(RuntimeError):
    """Checkpoint file is unreadable, corrupt, or from another config."""


@dataclass
class DatasetEntry:
    piece: AnnotatedPiece
    graph: MusicGraph
    split: str  # "train" | "validation"
    grassmann: GrassmannCache | None = None


@dataclass
class Dataset:
    entries: list[DatasetEntry]

    @property
    def train(self) -> list[DatasetEntry]:
        return [e for e in self.entries if e.split == "train"]

    @property
    def validation(self) -> list[DatasetEntry]:
        return [e for e in self.entries if e.split == "validation"]


def build_dataset(
    pieces: list[AnnotatedPiece],
    val_fraction: float = 0.2,
    seed: int = 0,
    augment: bool = False,
) -> Dataset:
    """Split by piece title, then optionally 12-key augment each split.

    Transpositions inherit their parent's split, so no material leaks
    across the boundary.
    """
    titles = sorted({p.score.title for p in pieces})
    if len(titles) != len(pieces):
        raise ValueError("dataset pieces must have unique titles")
    rng = np.random.default_rng(seed)
    shuffled = list(titles)
    rng.shuffle(shuffled)
    val_count = int(round(val_fraction * len(titles)))
    val_titles = set(shuffled[:val_count])
    entries = []
    for piece in pieces:
        split = "validation" if piece.score.title in val_titles else "train"
        variants = augment_12_keys(piece) if augment else [piece]
        for variant in variants:
            entries.append(
                DatasetEntry(piece=variant, graph=build_graph(variant.score), split=split)
            )
    return Dataset(entries=entries)


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    monotonicity: float
    per_depth: tuple[float, ...]
    voice_accuracy: float

    def to_json(self) -> bytes:
        doc = {
            "accuracy": self.accuracy,
            "monotonicity": self.monotonicity,
            "per_depth": list(self.per_depth),
            "voice_accuracy": self.voice_accuracy,
        }
        return json.dumps(doc).encode("utf-8")


def accuracy(scores: np.ndarray, annotation, c_min: float) -> float:
    """Fraction of (depth, node) pairs on the correct side of the threshold."""
    scores = np.asarray(scores, dtype=float)
    targets = np.array(annotation.depths, dtype=float)
    if targets.shape != scores.shape:
        raise ValueError(f"scores {scores.shape} vs annotation {targets.shape}")
    predicted = scores >= c_min
    return float((predicted == (targets == 1.0)).mean())


def voice_targets(annotation) -> np.ndarray:
    return np.array(
        [[1.0 if label in labels else 0.0 for label in VOICE_LABELS]
         for labels in annotation.voices]
    )


def depth_targets(annotation, depth_count: int) -> np.ndarray:
    """First depth_count levels of the annotation as a float matrix."""
    if annotation.depth_count < depth_count:
        raise ValueError(
            f"model needs {depth_count} depths but annotation stores "
            f"{annotation.depth_count}"
        )
    return np.array(annotation.depths[:depth_count], dtype=float)


def voice_accuracy(voice_scores: np.ndarray, annotation, c_min: float) -> float:
    targets = voice_targets(annotation)
    return float(((np.asarray(voice_scores) >= c_min) == (targets == 1.0)).mean())


def evaluate(
    entries: list[DatasetEntry],
    config: ModelConfig,
    params: dict[str, np.ndarray],
) -> MetricsReport:
    """Pooled accuracy/monotonicity/voice metrics over a dataset split."""
    if not entries:
        raise ValueError("evaluate: empty split")
    correct = 0
    total = 0
    per_depth_correct = np.zeros(config.depth_count)
    per_depth_total = np.zeros(config.depth_count)
    mono_sum = 0.0
    voice_correct = 0
    voice_total = 0
    for entry in entries:
        result = forward_scores(
            entry.graph, config, params, grassmann_cache=entry.grassmann
        )
        scores = result.stack.scores
        targets = depth_targets(entry.piece.annotation, config.depth_count)
        hits = (scores >= config.c_min) == (targets == 1.0)
        correct += hits.sum()
        total += hits.size
        per_depth_correct += hits.sum(axis=1)
        per_depth_total += hits.shape[1]
        mono_sum += monotonicity_value(scores, config.c_min, config.strict_monotonicity)
        if result.voice is not None:
            vt = voice_targets(entry.piece.annotation)
            vh = (result.voice.value >= config.c_min) == (vt == 1.0)
            voice_correct += vh.sum()
            voice_total += vh.size
    return MetricsReport(
        accuracy=float(correct / total),
        monotonicity=float(mono_sum / len(entries)),
        per_depth=tuple(float(c / t) for c, t in zip(per_depth_correct, per_depth_total)),
        voice_accuracy=float(voice_correct / voice_total) if voice_total else 0.0,
    )


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 200
    val_fraction: float = 0.2
    augment: bool = False
    seed: int = 0
    stop_at_accuracy: float | None = None
    stop_at_monotonicity: float | None = None


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    adam: AdamState
    epoch: int
    history: list[dict] = field(default_factory=list)


@dataclass
class TrainResult:
    checkpoint: Checkpoint  # best validation accuracy
    history: list[dict]
    final_params: dict[str, np.ndarray]


def piece_loss(entry: DatasetEntry, config: ModelConfig, params, tape: Tape):
    """Total loss Var for one piece: pooling + monotonicity (+ voice BCE).

    The voice head has disjoint parameters, so folding its BCE into the
    objective is equivalent to training it separately.
    """
    is_pooling = config.variant in POOLING_VARIANTS
    result = forward_scores(
        entry.graph, config, params, tape=tape,
        grassmann_cache=entry.grassmann, with_voice=is_pooling,
    )
    targets = depth_targets(entry.piece.annotation, config.depth_count)
    loss = pooling_loss(result.score_vars, targets)
    if is_pooling:
        loss = ad.add(
            loss,
            monotonicity_loss(result.score_vars, config.c_min, config.strict_monotonicity),
        )
        loss = ad.add(loss, ad.bce(result.voice, voice_targets(entry.piece.annotation)))
    return loss, result


def train(
    dataset: Dataset,
    config: ModelConfig,
    train_config: TrainConfig | None = None,
) -> TrainResult:
    """Adam over summed per-piece gradients; keeps the best-accuracy epoch.

    Validation metrics come from the validation split when present, else
    the train split (overfitting runs).  Aborts with DivergenceError on a
    non-finite loss.
    """
    train_config = train_config or TrainConfig()
    train_entries = dataset.train
    if not train_entries:
        raise ValueError("train: empty train split")
    eval_entries = dataset.validation or dataset.train

    if config.variant == "grassmann":
        for entry in dataset.entries:
            if entry.grassmann is None:
                entry.grassmann = grassmann_precompute(
                    ablate_edges(entry.graph.adjacency, config),
                    config.subspace_k,
                    config.subspace_lambda,
                )

    params = init_params(config, seed=config.seed)
    adam = AdamState.for_params(params, learning_rate=train_config.learning_rate)
    history: list[dict] = []
    best: Checkpoint | None = None
    best_key = (-1.0, float("inf"))  # (accuracy, -monotonicity) preference

    for epoch in range(1, train_config.epochs + 1):
        total_loss = 0.0
        grads: dict[str, np.ndarray] = {}
        for entry in train_entries:  # gradients summed in piece order
            tape = Tape()
            loss, result = piece_loss(entry, config, params, tape)
            tape.backward(loss)
            total_loss += float(loss.value[0, 0])
            for name, g in result.binding.grads().items():
                if name in grads:
                    grads[name] += g
                else:
                    grads[name] = g.copy()
        if not np.isfinite(total_loss):
            raise DivergenceError(f"non-finite loss at epoch {epoch}", best)
        grad_norm = float(np.sqrt(sum((g * g).sum() for g in grads.values())))
        adam_step(adam, params, grads)

        metrics = evaluate(eval_entries, config, params)
        history.append(
            {
                "epoch": epoch,
                "loss": total_loss,
                "grad_norm": grad_norm,
                "val_accuracy": metrics.accuracy,
                "val_monotonicity": metrics.monotonicity,
            }
        )
        # Highest accuracy wins; accuracy ties go to lower monotonicity.
        if (metrics.accuracy, -metrics.monotonicity) > (best_key[0], -best_key[1]):
            best_key = (metrics.accuracy, metrics.monotonicity)
            best = Checkpoint(
                config=config,
                params={k: v.copy() for k, v in params.items()},
                adam=copy.deepcopy(adam),
                epoch=epoch,
            )
        if (
            train_config.stop_at_accuracy is not None
            and metrics.accuracy >= train_config.stop_at_accuracy
            and (
                train_config.stop_at_monotonicity is None
                or metrics.monotonicity <= train_config.stop_at_monotonicity
            )
        ):
            break

    assert best is not None
    best.history = list(history)
    return TrainResult(checkpoint=best, history=history, final_params=params)


# ---------------------------------------------------------------------------
# Ablation sweeps

SWEEP_AXES = ("feature_groups", "edge_types", "c_min", "alpha")
SWEEP_CSV_HEADER = ["axis", "value", "copy", "epochs", "max_val_accuracy", "min_monotonicity"]


def _config_for_axis(base: ModelConfig, axis: str, value) -> ModelConfig:
    doc = base.to_dict()
    if axis == "feature_groups":
        doc["feature_groups_off"] = [value]
    elif axis == "edge_types":
        doc["edge_types_off"] = [value]
    elif axis == "c_min":
        doc["c_min"] = float(value)
    elif axis == "alpha":
        doc["alpha"] = float(value)
    else:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")
    return ModelConfig.from_dict(doc)


def ablation_sweep(
    dataset: Dataset,
    base_config: ModelConfig,
    axis: str,
    values,
    copies: int = 3,
    train_config: TrainConfig | None = None,
) -> list[dict]:
    """Train `copies` models per axis value; report best-epoch metrics."""
    values = list(values)
    if not values:
        raise ValueError("ablation_sweep: empty value grid")
    train_config = train_config or TrainConfig()
    rows = []
    for value in values:
        for copy_idx in range(copies):
            cfg = _config_for_axis(base_config, axis, value)
            cfg = ModelConfig.from_dict({**cfg.to_dict(), "seed": base_config.seed + copy_idx})
            result = train(dataset, cfg, train_config)
            rows.append(
                {
                    "axis": axis,
                    "value": value,
                    "copy": copy_idx,
                    "epochs": train_config.epochs,
                    "max_val_accuracy": max(h["val_accuracy"] for h in result.history),
                    "min_monotonicity": min(h["val_monotonicity"] for h in result.history),
                }
            )
    return rows


def sweep_to_csv(rows: list[dict]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=SWEEP_CSV_HEADER)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


# ---------------------------------------------------------------------------
# Checkpoint file format

_MAGIC = b"SCHG"
_VERSION = 1


def _config_bytes(config: ModelConfig) -> bytes:
    return json.dumps(config.to_dict(), sort_keys=True).encode("utf-8")


def _write_block(out: io.BytesIO, payload: bytes):
    out.write(struct.pack("<Q", len(payload)))
    out.write(payload)


def _read_block(buf: io.BytesIO) -> bytes:
    raw = buf.read(8)
    if len(raw) != 8:
        raise CheckpointError("truncated checkpoint")
    (length,) = struct.unpack("<Q", raw)
    payload = buf.read(length)
    if len(payload) != length:
        raise CheckpointError("truncated checkpoint")
    return payload


def _write_matrix(out: io.BytesIO, name: str, value: np.ndarray):
    _write_block(out, name.encode("utf-8"))
    out.write(struct.pack("<QQ", value.shape[0], value.shape[1]))
    out.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


def _read_matrix(buf: io.BytesIO) -> tuple[str, np.ndarray]:
    name = _read_block(buf).decode("utf-8")
    rows, cols = struct.unpack("<QQ", buf.read(16))
    data = buf.read(rows * cols * 8)
    if len(data) != rows * cols * 8:
        raise CheckpointError("truncated matrix data")
    return name, np.frombuffer(data, dtype="<f8").reshape(rows, cols).copy()


def save_checkpoint(checkpoint: Checkpoint, path: Path):
    out = io.BytesIO()
    out.write(_MAGIC)
    out.write(struct.pack("<I", _VERSION))
    config_json = _config_bytes(checkpoint.config)
    _write_block(out, config_json)
    out.write(hashlib.sha256(config_json).digest())
    meta = {
        "epoch": checkpoint.epoch,
        "history": checkpoint.history,
        "adam": {
            "learning_rate": checkpoint.adam.learning_rate,
            "beta1": checkpoint.adam.beta1,
            "beta2": checkpoint.adam.beta2,
            "eps": checkpoint.adam.eps,
            "step": checkpoint.adam.step,
        },
    }
    _write_block(out, json.dumps(meta, sort_keys=True).encode("utf-8"))
    matrices = (
        [("param/" + k, v) for k, v in sorted(checkpoint.params.items())]
        + [("adam_m/" + k, v) for k, v in sorted(checkpoint.adam.m.items())]
        + [("adam_v/" + k, v) for k, v in sorted(checkpoint.adam.v.items())]
    )
    out.write(struct.pack("<Q", len(matrices)))
    for name, value in matrices:
        _write_matrix(out, name, value)
    Path(path).write_bytes(out.getvalue())


def load_checkpoint(path: Path) -> Checkpoint:
    buf = io.BytesIO(Path(path).read_bytes())
    if buf.read(4) != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack("<I", buf.read(4))
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    config_json = _read_block(buf)
    stored_hash = buf.read(32)
    if hashlib.sha256(config_json).digest() != stored_hash:
        raise CheckpointError(f"{path}: config hash mismatch; refusing to load")
    config = ModelConfig.from_dict(json.loads(config_json))
    meta = json.loads(_read_block(buf))
    (count,) = struct.unpack("<Q", buf.read(8))
    params: dict[str, np.ndarray] = {}
    adam_m: dict[str, np.ndarray] = {}
    adam_v: dict[str, np.ndarray] = {}
    for _ in range(count):
        name, value = _read_matrix(buf)
        if name.startswith("param/"):
            params[name[6:]] = value
        elif name.startswith("adam_m/"):
            adam_m[name[7:]] = value
        elif name.startswith("adam_v/"):
            adam_v[name[7:]] = value
        else:
            raise CheckpointError(f"{path}: unknown matrix section {name!r}")
    adam = AdamState(
        learning_rate=meta["adam"]["learning_rate"],
        beta1=meta["adam"]["beta1"],
        beta2=meta["adam"]["beta2"],
        eps=meta["adam"]["eps"],
        step=meta["adam"]["step"],
        m=adam_m,
        v=adam_v,
    )
    return Checkpoint(
        config=config,
        params=params,
        adam=adam,
        epoch=meta["epoch"],
        history=meta["history"],
    )
