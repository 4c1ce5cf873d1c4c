"""Symbolic score and analysis data model: parsing, validation, transposition.

Scores keep onsets/durations as exact rationals (quarter note = 1) so graph
construction downstream is deterministic.  Annotations store one bit array
per structural depth; depth 0 (every note) is implicit and not stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence


class ScoreError(ValueError):
    """Raised for malformed or inconsistent score/annotation data."""


STEPS = ("C", "D", "E", "F", "G", "A", "B")
_STEP_INDEX = {s: i for i, s in enumerate(STEPS)}
# Semitone offset of each natural letter within an octave.
_NATURAL_SEMITONE = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}

VOICE_LABELS = ("treble", "bass", "inner")


@dataclass(frozen=True)
class Pitch:
    """A spelled pitch: letter step, chromatic alteration, octave."""

    step: str
    alter: int
    octave: int

    def __post_init__(self):
        if self.step not in _STEP_INDEX:
            raise ScoreError(f"unknown pitch step {self.step!r}")
        if not -2 <= self.alter <= 2:
            raise ScoreError(f"alteration {self.alter} outside [-2, 2]")
        if not 0 <= self.midi <= 127:
            raise ScoreError(f"pitch {self} outside midi range 0-127")

    @property
    def midi(self) -> int:
        return (self.octave + 1) * 12 + _NATURAL_SEMITONE[self.step] + self.alter

    @property
    def diatonic_position(self) -> int:
        """Letter-name position on the staff: octave * 7 + letter index."""
        return self.octave * 7 + _STEP_INDEX[self.step]

    def __str__(self) -> str:
        acc = {-2: "bb", -1: "b", 0: "", 1: "#", 2: "##"}[self.alter]
        return f"{self.step}{acc}{self.octave}"


def pitch_from_diatonic(position: int, midi: int) -> Pitch:
    """Build the pitch at a staff position whose sounding pitch is `midi`.

    Raises ScoreError if the required alteration falls outside [-2, 2].
    """
    octave, letter = divmod(position, 7)
    step = STEPS[letter]
    alter = midi - ((octave + 1) * 12 + _NATURAL_SEMITONE[step])
    if not -2 <= alter <= 2:
        raise ScoreError(
            f"no spelling of midi {midi} on letter {step}{octave} within [-2, 2]"
        )
    return Pitch(step, alter, octave)


def respell_minimal(midi: int, near_position: int, max_alter: int = 2) -> Pitch:
    """Pick the spelling of `midi` with minimal |alter|, ties toward flats.

    Candidate letters are searched around `near_position` so the octave
    number stays sensible.
    """
    best = None
    for pos in range(near_position - 3, near_position + 4):
        octave, letter = divmod(pos, 7)
        step = STEPS[letter]
        alter = midi - ((octave + 1) * 12 + _NATURAL_SEMITONE[step])
        if abs(alter) > max_alter:
            continue
        key = (abs(alter), alter)
        if best is None or key < best[0]:
            best = (key, Pitch(step, alter, octave))
    if best is None:
        raise ScoreError(f"midi {midi} has no spelling with |alter| <= {max_alter}")
    return best[1]


@dataclass(frozen=True)
class KeyContext:
    """Home key: a tonic pitch class and a mode."""

    tonic_step: str
    tonic_alter: int
    mode: str

    def __post_init__(self):
        if self.tonic_step not in _STEP_INDEX:
            raise ScoreError(f"unknown tonic step {self.tonic_step!r}")
        if not -1 <= self.tonic_alter <= 1:
            raise ScoreError(f"tonic alteration {self.tonic_alter} outside [-1, 1]")
        if self.mode not in ("major", "minor"):
            raise ScoreError(f"mode must be 'major' or 'minor', got {self.mode!r}")

    @property
    def tonic_pc(self) -> int:
        """Pitch class of the tonic, 0-11."""
        return (_NATURAL_SEMITONE[self.tonic_step] + self.tonic_alter) % 12


@dataclass(frozen=True)
class Note:
    id: int
    onset: Fraction
    duration: Fraction
    pitch: Pitch
    voice_id: int
    slur_ids: frozenset[int]
    measure: int
    beat: Fraction

    def __post_init__(self):
        if self.duration <= 0:
            raise ScoreError(f"note {self.id}: duration must be positive")
        if self.onset < 0:
            raise ScoreError(f"note {self.id}: onset must be non-negative")
        if self.voice_id < 0:
            raise ScoreError(f"note {self.id}: voice_id must be non-negative")

    @property
    def offset_end(self) -> Fraction:
        return self.onset + self.duration


@dataclass(frozen=True)
class TimeSignature:
    measure_from: int
    num: int
    den: int

    def __post_init__(self):
        if self.num < 1 or self.den < 1:
            raise ScoreError("time signature must have positive members")

    @property
    def measure_quarters(self) -> Fraction:
        """Length of one measure in quarter notes."""
        return Fraction(self.num * 4, self.den)

    @property
    def beat_quarters(self) -> Fraction:
        """Length of one notated beat in quarter notes."""
        return Fraction(4, self.den)


@dataclass(frozen=True)
class Score:
    title: str
    key: KeyContext
    time_signatures: tuple[TimeSignature, ...]
    notes: tuple[Note, ...]

    def __post_init__(self):
        if not self.notes:
            raise ScoreError("a score must contain at least one note")
        if not self.time_signatures:
            raise ScoreError("a score must carry at least one time signature")
        for i, note in enumerate(self.notes):
            if note.id != i:
                raise ScoreError(f"note ids must be contiguous 0..n-1, found {note.id} at {i}")
        keys = [(n.onset, n.voice_id) for n in self.notes]
        if keys != sorted(keys):
            raise ScoreError("notes must be sorted by (onset, voice_id)")
        seen = set()
        for n in self.notes:
            sig = (n.onset, n.voice_id, n.pitch.midi)
            if sig in seen:
                raise ScoreError(
                    f"duplicate note at onset {n.onset}, voice {n.voice_id}, midi {n.pitch.midi}"
                )
            seen.add(sig)

    @property
    def n(self) -> int:
        return len(self.notes)

    def timesig_at(self, measure: int) -> TimeSignature:
        current = self.time_signatures[0]
        for ts in self.time_signatures:
            if ts.measure_from <= measure:
                current = ts
        return current


@dataclass(frozen=True)
class SchaAnnotation:
    """Expert analysis: nested per-depth membership plus voice label sets.

    depths[l-1][j] == 1 iff note j belongs to depth l (depth 0, all notes,
    is implicit).  Nesting: membership at depth l implies membership at
    every shallower stored depth.
    """

    depth_count: int
    depths: tuple[tuple[int, ...], ...]
    voices: tuple[frozenset[str], ...]

    def __post_init__(self):
        if self.depth_count < 1:
            raise ScoreError("depth_count must be >= 1")
        if len(self.depths) != self.depth_count:
            raise ScoreError("depths length must equal depth_count")
        n = len(self.voices)
        for l, row in enumerate(self.depths, start=1):
            if len(row) != n:
                raise ScoreError(f"depth {l} has length {len(row)}, expected {n}")
            if any(v not in (0, 1) for v in row):
                raise ScoreError(f"depth {l} contains non-bit values")
        for l in range(1, self.depth_count):
            for j in range(n):
                if self.depths[l][j] == 1 and self.depths[l - 1][j] == 0:
                    raise ScoreError(
                        f"nesting violation: note {j} in depth {l + 1} but not depth {l}"
                    )
        for j, labels in enumerate(self.voices):
            if not labels:
                raise ScoreError(f"note {j} has an empty voice label set")
            bad = labels - set(VOICE_LABELS)
            if bad:
                raise ScoreError(f"note {j} has unknown voice labels {sorted(bad)}")

    @property
    def n(self) -> int:
        return len(self.voices)


@dataclass(frozen=True)
class AnnotatedPiece:
    score: Score
    annotation: SchaAnnotation

    def __post_init__(self):
        if self.annotation.n != self.score.n:
            raise ScoreError(
                f"annotation length {self.annotation.n} does not match "
                f"score note count {self.score.n}"
            )


def max_depth(annotation: SchaAnnotation, note_id: int) -> int:
    """Deepest stored level containing the note, or 0 if none."""
    if not 0 <= note_id < annotation.n:
        raise ScoreError(f"note_id {note_id} out of range 0..{annotation.n - 1}")
    deepest = 0
    for l in range(annotation.depth_count):
        if annotation.depths[l][note_id] == 1:
            deepest = l + 1
    return deepest


# ---------------------------------------------------------------------------
# JSON serialization


def _frac_to_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def _frac_from_str(s) -> Fraction:
    if isinstance(s, int):
        return Fraction(s)
    if isinstance(s, str):
        try:
            if "/" in s:
                p, q = s.split("/")
                return Fraction(int(p), int(q))
            return Fraction(int(s))
        except (ValueError, ZeroDivisionError) as exc:
            raise ScoreError(f"bad rational {s!r}") from exc
    raise ScoreError(f"bad rational {s!r}")


def serialize_score(score: Score) -> bytes:
    doc = {
        "title": score.title,
        "key": {
            "tonic_step": score.key.tonic_step,
            "tonic_alter": score.key.tonic_alter,
            "mode": score.key.mode,
        },
        "time_signatures": [
            {"measure_from": ts.measure_from, "num": ts.num, "den": ts.den}
            for ts in score.time_signatures
        ],
        "notes": [
            {
                "onset": _frac_to_str(n.onset),
                "duration": _frac_to_str(n.duration),
                "step": n.pitch.step,
                "alter": n.pitch.alter,
                "octave": n.pitch.octave,
                "voice": n.voice_id,
                "measure": n.measure,
                "beat": _frac_to_str(n.beat),
                "slurs": sorted(n.slur_ids),
            }
            for n in score.notes
        ],
    }
    return json.dumps(doc, indent=1).encode("utf-8")


def parse_score_json(data: bytes) -> Score:
    """Parse and validate the score JSON format.

    Note ids are reassigned after sorting by (onset, voice_id).
    """
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ScoreError(f"malformed score JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScoreError("score JSON must be an object")
    if "key" not in doc or doc["key"] is None:
        raise ScoreError("score is missing its key signature")
    try:
        key = KeyContext(
            tonic_step=doc["key"]["tonic_step"],
            tonic_alter=int(doc["key"]["tonic_alter"]),
            mode=doc["key"]["mode"],
        )
        sigs = tuple(
            TimeSignature(int(t["measure_from"]), int(t["num"]), int(t["den"]))
            for t in doc.get("time_signatures", [])
        )
        raw_notes = []
        for entry in doc.get("notes", []):
            raw_notes.append(
                (
                    _frac_from_str(entry["onset"]),
                    _frac_from_str(entry["duration"]),
                    Pitch(entry["step"], int(entry["alter"]), int(entry["octave"])),
                    int(entry["voice"]),
                    frozenset(int(s) for s in entry.get("slurs", [])),
                    int(entry["measure"]),
                    _frac_from_str(entry["beat"]),
                )
            )
    except (KeyError, TypeError) as exc:
        raise ScoreError(f"score JSON missing field: {exc}") from exc
    raw_notes.sort(key=lambda t: (t[0], t[3]))
    notes = tuple(
        Note(i, onset, dur, pitch, voice, slurs, measure, beat)
        for i, (onset, dur, pitch, voice, slurs, measure, beat) in enumerate(raw_notes)
    )
    return Score(title=doc.get("title", ""), key=key, time_signatures=sigs, notes=notes)


def serialize_annotation(annotation: SchaAnnotation) -> bytes:
    doc = {
        "d": annotation.depth_count,
        "depths": [list(row) for row in annotation.depths],
        "voices": [sorted(labels) for labels in annotation.voices],
    }
    return json.dumps(doc, indent=1).encode("utf-8")


def parse_annotation_json(data: bytes, score: Score) -> SchaAnnotation:
    """Parse an annotation and validate it against the score it describes."""
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise ScoreError(f"malformed annotation JSON: {exc}") from exc
    try:
        d = int(doc["d"])
        depths = tuple(tuple(int(v) for v in row) for row in doc["depths"])
        voices = tuple(frozenset(str(v) for v in labels) for labels in doc["voices"])
    except (KeyError, TypeError) as exc:
        raise ScoreError(f"annotation JSON missing field: {exc}") from exc
    annotation = SchaAnnotation(depth_count=d, depths=depths, voices=voices)
    if annotation.n != score.n:
        raise ScoreError(
            f"annotation covers {annotation.n} notes but score has {score.n}"
        )
    return annotation


# ---------------------------------------------------------------------------
# Transposition and key augmentation

# Canonical letter-step count for each upward semitone distance 0..11.
_CANONICAL_STEPS = (0, 1, 1, 2, 2, 3, 3, 4, 5, 5, 6, 6)
# Semitone span of 0..6 natural letter steps upward from any tonic letter.
_DIATONIC_SPANS = (0, 2, 4, 5, 7, 9, 11)


def _transpose_key(key: KeyContext, semitones: int, diatonic_steps: int) -> KeyContext:
    """Move the tonic; spelling is canonicalized to minimal |alter|, flats on ties."""
    old_letter = _STEP_INDEX[key.tonic_step]
    new_letter = (old_letter + diatonic_steps) % 7
    step = STEPS[new_letter]
    target_pc = (key.tonic_pc + semitones) % 12
    alter = target_pc - _NATURAL_SEMITONE[step]
    if alter > 6:
        alter -= 12
    elif alter < -6:
        alter += 12
    if semitones % 12 != 0:
        # Among enharmonic spellings prefer the smallest |alter|; the corpus
        # leans toward flat-side keys, so ties resolve to the flat spelling.
        best = (abs(alter), alter, step)
        for cand in STEPS:
            cand_alter = target_pc - _NATURAL_SEMITONE[cand]
            if cand_alter > 6:
                cand_alter -= 12
            elif cand_alter < -6:
                cand_alter += 12
            if abs(cand_alter) > 1:
                continue
            key_cand = (abs(cand_alter), cand_alter, cand)
            if key_cand < best:
                best = key_cand
        alter, step = best[1], best[2]
    if not -1 <= alter <= 1:
        raise ScoreError(f"cannot spell transposed tonic within [-1, 1] (got {alter})")
    return KeyContext(tonic_step=step, tonic_alter=alter, mode=key.mode)


def transpose(score: Score, semitones: int, diatonic_steps: int) -> Score:
    """Shift every pitch and the key by a fixed interval.

    All rhythmic fields are untouched.  The tonic spelling is canonicalized
    (minimal |alter|, ties toward flats) and notes follow the canonical
    tonic's letter so scale degrees stay consistent; an individual note is
    respelled only if its alteration would leave [-2, 2].
    """
    if abs(semitones) > 11:
        raise ScoreError(f"|semitones| must be <= 11, got {semitones}")
    new_key = _transpose_key(score.key, semitones, diatonic_steps)
    # Letter steps actually applied, adjusted if the tonic was respelled;
    # the octave component keeps the letter shift within a semitone-sized
    # window of the chromatic shift.
    letter_delta = (
        _STEP_INDEX[new_key.tonic_step] - _STEP_INDEX[score.key.tonic_step]
    ) % 7
    octaves = (semitones - _DIATONIC_SPANS[letter_delta] + 6) // 12
    steps_eff = letter_delta + 7 * octaves

    new_notes = []
    for note in score.notes:
        position = note.pitch.diatonic_position + steps_eff
        midi = note.pitch.midi + semitones
        try:
            pitch = pitch_from_diatonic(position, midi)
        except ScoreError:
            pitch = respell_minimal(midi, position)
        new_notes.append(replace(note, pitch=pitch))
    return replace(score, key=new_key, notes=tuple(new_notes))


def augment_12_keys(piece: AnnotatedPiece) -> list[AnnotatedPiece]:
    """Original piece plus its 11 transpositions; annotations copy verbatim."""
    out = []
    for semitones in range(12):
        if semitones == 0:
            out.append(piece)
            continue
        steps = _CANONICAL_STEPS[semitones]
        shifted = transpose(piece.score, semitones, steps)
        shifted = replace(shifted, title=f"{piece.score.title} (+{semitones})")
        out.append(AnnotatedPiece(score=shifted, annotation=piece.annotation))
    return out
