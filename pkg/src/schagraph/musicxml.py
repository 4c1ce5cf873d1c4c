"""Restricted partwise MusicXML importer.

Supported subset: pitched notes and chords, ties (merged into single
notes), slurs, one stream of key/time signature changes, and tuplets no
finer than triplets.  Grace notes carry no duration and are skipped.
Anything else raises UnsupportedElementError naming the element.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from fractions import Fraction

from schagraph.score import (
    KeyContext,
    Note,
    Pitch,
    Score,
    ScoreError,
    TimeSignature,
)


class UnsupportedElementError(ScoreError):
    """A MusicXML element outside the supported subset was encountered."""

    def __init__(self, element: str, location: str):
        super().__init__(f"unsupported MusicXML element <{element}> at {location}")
        self.element = element
        self.location = location


# Circle of fifths: index = fifths + 7.
_MAJOR_TONICS = ["Cb", "Gb", "Db", "Ab", "Eb", "Bb", "F", "C", "G", "D", "A", "E", "B", "F#", "C#"]
_MINOR_TONICS = ["Ab", "Eb", "Bb", "F", "C", "G", "D", "A", "E", "B", "F#", "C#", "G#", "D#", "A#"]


def _tonic_from_fifths(fifths: int, mode: str) -> tuple[str, int]:
    table = _MAJOR_TONICS if mode == "major" else _MINOR_TONICS
    idx = fifths + 7
    if not 0 <= idx < len(table):
        raise ScoreError(f"key signature with {fifths} fifths out of range")
    name = table[idx]
    step = name[0]
    alter = {"": 0, "#": 1, "b": -1}[name[1:]]
    return step, alter


def _check_tuplet(note_el: ET.Element, location: str):
    tm = note_el.find("time-modification")
    if tm is None:
        return
    actual = int(tm.findtext("actual-notes", "1"))
    normal = int(tm.findtext("normal-notes", "1"))
    if (actual, normal) not in ((1, 1), (3, 2)):
        raise UnsupportedElementError(
            f"time-modification {actual}:{normal}", location
        )


def import_musicxml(data: bytes) -> Score:
    """Parse a partwise MusicXML document into a Score."""
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        raise ScoreError(f"malformed MusicXML: {exc}") from exc
    if root.tag != "score-partwise":
        raise UnsupportedElementError(root.tag, "document root")

    title = ""
    work = root.find("work/work-title")
    if work is not None and work.text:
        title = work.text.strip()
    movement = root.find("movement-title")
    if not title and movement is not None and movement.text:
        title = movement.text.strip()

    key: KeyContext | None = None
    time_sigs: list[TimeSignature] = []
    raw: list[dict] = []  # one dict per sounding (possibly tied) note
    slur_counter = 0
    open_slurs: dict[tuple[int, str], int] = {}  # (part, number) -> slur id
    # Notes awaiting a tie stop, keyed by (part, voice, midi).
    open_ties: dict[tuple[int, int, int], dict] = {}
    voice_offset = 0

    parts = root.findall("part")
    if not parts:
        raise ScoreError("MusicXML document contains no parts")

    for part_idx, part in enumerate(parts):
        divisions = 1
        position = Fraction(0)
        measure_start = Fraction(0)
        last_onset = Fraction(0)
        part_voices: set[int] = set()
        for measure in part.findall("measure"):
            measure_no = int(measure.get("number", "0") or 0)
            location = f"part {part_idx + 1}, measure {measure.get('number')}"
            position = measure_start
            for el in measure:
                if el.tag == "attributes":
                    div = el.findtext("divisions")
                    if div:
                        divisions = int(div)
                    key_el = el.find("key")
                    if key_el is not None:
                        fifths = int(key_el.findtext("fifths", "0"))
                        mode = key_el.findtext("mode", "major") or "major"
                        if mode not in ("major", "minor"):
                            raise UnsupportedElementError(f"mode {mode}", location)
                        step, alter = _tonic_from_fifths(fifths, mode)
                        if part_idx == 0:
                            key = KeyContext(step, alter, mode)
                    time_el = el.find("time")
                    if time_el is not None and part_idx == 0:
                        time_sigs.append(
                            TimeSignature(
                                measure_from=measure_no,
                                num=int(time_el.findtext("beats", "4")),
                                den=int(time_el.findtext("beat-type", "4")),
                            )
                        )
                elif el.tag == "backup":
                    position -= Fraction(int(el.findtext("duration", "0")), divisions)
                elif el.tag == "forward":
                    position += Fraction(int(el.findtext("duration", "0")), divisions)
                elif el.tag == "note":
                    _check_tuplet(el, location)
                    if el.find("grace") is not None:
                        continue  # grace notes carry no duration model
                    if el.find("unpitched") is not None or el.find("percussion") is not None:
                        raise UnsupportedElementError("unpitched", location)
                    dur = Fraction(int(el.findtext("duration", "0")), divisions)
                    if el.find("rest") is not None:
                        position += dur
                        continue
                    pitch_el = el.find("pitch")
                    if pitch_el is None:
                        raise UnsupportedElementError("note without pitch", location)
                    is_chord = el.find("chord") is not None
                    onset = last_onset if is_chord else position
                    last_onset = onset
                    pitch = Pitch(
                        step=pitch_el.findtext("step", ""),
                        alter=int(round(float(pitch_el.findtext("alter", "0") or 0))),
                        octave=int(pitch_el.findtext("octave", "4")),
                    )
                    voice = int(el.findtext("voice", "1")) - 1 + voice_offset
                    part_voices.add(voice)

                    slur_ids = set()
                    for slur in el.iter("slur"):
                        number = slur.get("number", "1")
                        stype = slur.get("type")
                        if stype == "start":
                            slur_counter += 1
                            open_slurs[(part_idx, number)] = slur_counter
                            slur_ids.add(slur_counter)
                        elif stype == "stop":
                            sid = open_slurs.pop((part_idx, number), None)
                            if sid is not None:
                                slur_ids.add(sid)
                    # Notes under any currently-open slur arc share its id.
                    slur_ids.update(
                        sid for (p, _), sid in open_slurs.items() if p == part_idx
                    )

                    tie_types = {t.get("type") for t in el.findall("tie")}
                    tie_key = (part_idx, voice, pitch.midi)
                    if "stop" in tie_types and tie_key in open_ties:
                        prev = open_ties.pop(tie_key)
                        prev["duration"] += dur
                        prev["slurs"] |= slur_ids
                        if "start" in tie_types:
                            open_ties[tie_key] = prev
                    else:
                        rec = {
                            "onset": onset,
                            "duration": dur,
                            "pitch": pitch,
                            "voice": voice,
                            "slurs": slur_ids,
                            "measure": measure_no,
                            "measure_start": measure_start,
                        }
                        raw.append(rec)
                        if "start" in tie_types:
                            open_ties[tie_key] = rec
                    if not is_chord:
                        position += dur
                elif el.tag in ("barline", "direction", "print", "sound", "harmony"):
                    continue
                else:
                    raise UnsupportedElementError(el.tag, location)
            measure_start = max(measure_start, position)
        voice_offset = max(part_voices) + 1 if part_voices else voice_offset + 1

    if key is None:
        raise ScoreError("MusicXML document is missing a key signature")
    if not time_sigs:
        time_sigs = [TimeSignature(measure_from=0, num=4, den=4)]
    if not raw:
        raise ScoreError("MusicXML document contains no pitched notes")

    raw.sort(key=lambda r: (r["onset"], r["voice"]))
    notes = tuple(
        Note(
            id=i,
            onset=r["onset"],
            duration=r["duration"],
            pitch=r["pitch"],
            voice_id=r["voice"],
            slur_ids=frozenset(r["slurs"]),
            measure=r["measure"],
            beat=r["onset"] - r["measure_start"],
        )
        for i, r in enumerate(raw)
    )
    return Score(title=title, key=key, time_signatures=tuple(time_sigs), notes=notes)
