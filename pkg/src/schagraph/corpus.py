"""Loading pieces from disk and the bundled toy corpus."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from schagraph.score import (
    AnnotatedPiece,
    Score,
    ScoreError,
    parse_annotation_json,
    parse_score_json,
)


def bundled_data_dir() -> Path:
    return Path(resources.files("schagraph") / "data")


def load_piece(score_path: Path, annotation_path: Path | None = None) -> AnnotatedPiece | Score:
    """Load a score, paired with its annotation when one exists."""
    score = parse_score_json(Path(score_path).read_bytes())
    if annotation_path is None:
        candidate = Path(str(score_path).replace(".score.json", ".annotation.json"))
        annotation_path = candidate if candidate != Path(score_path) and candidate.exists() else None
    if annotation_path is None:
        return score
    annotation = parse_annotation_json(Path(annotation_path).read_bytes(), score)
    return AnnotatedPiece(score=score, annotation=annotation)


def load_corpus_dir(path: Path, require_annotations: bool = True) -> list[AnnotatedPiece]:
    """All pieces in a directory of *.score.json / *.annotation.json pairs."""
    path = Path(path)
    pieces = []
    for score_file in sorted(path.glob("*.score.json")):
        piece = load_piece(score_file)
        if isinstance(piece, Score):
            if require_annotations:
                raise ScoreError(f"{score_file.name} has no matching annotation")
            continue
        pieces.append(piece)
    if not pieces:
        raise ScoreError(f"no annotated pieces found under {path}")
    return pieces


def load_bundled_corpus() -> list[AnnotatedPiece]:
    """The toy corpus shipped with the package (six small annotated pieces)."""
    return load_corpus_dir(bundled_data_dir())
