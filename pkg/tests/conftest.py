"""Shared fixtures: tiny graphs, random scores, small model configs."""

from fractions import Fraction

import numpy as np
import pytest

from schagraph.corpus import load_bundled_corpus
from schagraph.score import (
    AnnotatedPiece,
    KeyContext,
    Note,
    Pitch,
    SchaAnnotation,
    Score,
    TimeSignature,
)

STEP_NAMES = ("C", "D", "E", "F", "G", "A", "B")


def make_score(rows, key=("C", 0, "major"), title="fixture"):
    """rows: (onset, duration, step, alter, octave, voice[, slurs])."""
    rows = sorted(rows, key=lambda r: (Fraction(r[0]), r[5]))
    notes = []
    for i, row in enumerate(rows):
        onset, duration, step, alter, octave, voice = row[:6]
        slurs = frozenset(row[6]) if len(row) > 6 else frozenset()
        onset, duration = Fraction(onset), Fraction(duration)
        measure = int(onset // 4) + 1
        notes.append(
            Note(i, onset, duration, Pitch(step, alter, octave), voice,
                 slurs, measure, onset - (measure - 1) * 4)
        )
    return Score(
        title=title,
        key=KeyContext(*key),
        time_signatures=(TimeSignature(1, 4, 4),),
        notes=tuple(notes),
    )


def random_score(rng: np.random.Generator, n_notes: int = 8, n_voices: int = 2,
                 title="random"):
    """Random but valid polyphonic score for property tests."""
    rows = []
    onset = Fraction(0)
    used = set()
    while len(rows) < n_notes:
        voice = int(rng.integers(0, n_voices))
        step = STEP_NAMES[rng.integers(0, 7)]
        alter = int(rng.integers(-1, 2))
        octave = int(rng.integers(3, 6))
        pitch = Pitch(step, alter, octave)
        if (onset, voice, pitch.midi) in used:
            onset += Fraction(1, 2)
            continue
        used.add((onset, voice, pitch.midi))
        duration = Fraction(int(rng.integers(1, 5)), 2)
        rows.append((onset, duration, step, alter, octave, voice))
        if rng.random() < 0.6:
            onset += Fraction(int(rng.integers(1, 4)), 2)
    return make_score(rows, title=title)


def nested_annotation(max_depths, d=4, voices=None):
    depths = tuple(
        tuple(1 if md >= l else 0 for md in max_depths) for l in range(1, d + 1)
    )
    if voices is None:
        voices = [["treble"]] * len(max_depths)
    return SchaAnnotation(
        depth_count=d,
        depths=depths,
        voices=tuple(frozenset(v) for v in voices),
    )


@pytest.fixture(scope="session")
def corpus():
    return load_bundled_corpus()


@pytest.fixture(scope="session")
def subject_piece(corpus) -> AnnotatedPiece:
    for piece in corpus:
        if piece.score.title.startswith("Primi Toni"):
            return piece
    raise AssertionError("bundled corpus is missing the fugue-subject piece")
