"""MusicXML subset importer on hand-built fixtures."""

from fractions import Fraction

import pytest

from schagraph.musicxml import UnsupportedElementError, import_musicxml
from schagraph.score import ScoreError


def wrap(measures: str, fifths=0, mode="major", beats=4, beat_type=4) -> bytes:
    return f"""<?xml version="1.0"?>
<score-partwise version="3.1">
  <part-list><score-part id="P1"><part-name>x</part-name></score-part></part-list>
  <part id="P1">
    <measure number="1">
      <attributes>
        <divisions>4</divisions>
        <key><fifths>{fifths}</fifths><mode>{mode}</mode></key>
        <time><beats>{beats}</beats><beat-type>{beat_type}</beat-type></time>
      </attributes>
      {measures}
    </measure>
  </part>
</score-partwise>""".encode()


def note(step, octave, duration, voice=1, extra="", alter=None) -> str:
    alter_el = f"<alter>{alter}</alter>" if alter is not None else ""
    return (
        f"<note><pitch><step>{step}</step>{alter_el}<octave>{octave}</octave></pitch>"
        f"<duration>{duration}</duration><voice>{voice}</voice>{extra}</note>"
    )


def test_whole_note_c4():
    score = import_musicxml(wrap(note("C", 4, 16)))
    assert score.n == 1
    assert score.notes[0].duration == Fraction(4)
    assert score.notes[0].pitch.midi == 60
    assert score.key.mode == "major"


def test_two_voice_simultaneity():
    # expected output written by hand: two notes, same onset, voices 0 and 1
    body = note("D", 4, 16, voice=1) + "<backup><duration>16</duration></backup>" + note("F", 4, 16, voice=2)
    score = import_musicxml(wrap(body))
    assert score.n == 2
    assert score.notes[0].onset == score.notes[1].onset == 0
    assert {n.voice_id for n in score.notes} == {0, 1}
    assert {n.pitch.step for n in score.notes} == {"D", "F"}


def test_chord_shares_onset():
    body = note("C", 4, 8) + note("E", 4, 8, extra="<chord/>")
    score = import_musicxml(wrap(body))
    assert score.n == 2
    assert score.notes[0].onset == score.notes[1].onset


def test_tie_merges_into_one_note():
    body = (
        note("G", 4, 8, extra='<tie type="start"/>')
        + note("G", 4, 8, extra='<tie type="stop"/>')
    )
    score = import_musicxml(wrap(body))
    assert score.n == 1
    assert score.notes[0].duration == Fraction(4)


def test_rest_advances_time():
    body = note("C", 4, 8) + "<note><rest/><duration>4</duration></note>" + note("D", 4, 4)
    score = import_musicxml(wrap(body))
    assert score.notes[1].onset == Fraction(3)


def test_slur_ids_shared():
    body = (
        note("C", 4, 4, extra='<notations><slur type="start" number="1"/></notations>')
        + note("D", 4, 4)
        + note("E", 4, 4, extra='<notations><slur type="stop" number="1"/></notations>')
        + note("F", 4, 4)
    )
    score = import_musicxml(wrap(body))
    slurred = [n for n in score.notes if n.slur_ids]
    assert [n.pitch.step for n in slurred] == ["C", "D", "E"]
    assert len({n.slur_ids for n in slurred}) == 1


def test_triplet_accepted_nested_tuplet_rejected():
    triplet = note(
        "C", 4, 2,
        extra="<time-modification><actual-notes>3</actual-notes>"
              "<normal-notes>2</normal-notes></time-modification>",
    )
    assert import_musicxml(wrap(triplet * 3)).n == 3
    quintuplet = note(
        "C", 4, 2,
        extra="<time-modification><actual-notes>5</actual-notes>"
              "<normal-notes>4</normal-notes></time-modification>",
    )
    with pytest.raises(UnsupportedElementError) as err:
        import_musicxml(wrap(quintuplet))
    assert "5:4" in str(err.value)
    assert "measure" in str(err.value)


def test_unpitched_rejected():
    body = "<note><unpitched/><duration>4</duration></note>"
    with pytest.raises(UnsupportedElementError):
        import_musicxml(wrap(body))


def test_grace_note_skipped():
    body = "<note><grace/><pitch><step>D</step><octave>4</octave></pitch><voice>1</voice></note>" + note("C", 4, 4)
    score = import_musicxml(wrap(body))
    assert score.n == 1
    assert score.notes[0].pitch.step == "C"


def test_minor_key_from_fifths():
    score = import_musicxml(wrap(note("D", 4, 4), fifths=-1, mode="minor"))
    assert (score.key.tonic_step, score.key.tonic_alter, score.key.mode) == ("D", 0, "minor")


def test_missing_key_rejected():
    raw = """<?xml version="1.0"?>
<score-partwise><part-list/><part id="P1"><measure number="1">
<attributes><divisions>1</divisions></attributes>
<note><pitch><step>C</step><octave>4</octave></pitch><duration>4</duration><voice>1</voice></note>
</measure></part></score-partwise>"""
    with pytest.raises(ScoreError, match="key"):
        import_musicxml(raw.encode())


def test_non_partwise_rejected():
    with pytest.raises(UnsupportedElementError):
        import_musicxml(b"<score-timewise></score-timewise>")
