"""Score-to-graph conversion: node features and 20 typed adjacency matrices.

Six base edge types relate notes by time, voice, and articulation; fourteen
intervalic types connect each note to the next note a given diatonic
interval (2nd..octave) above or below it, scanning across voices.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction

import numpy as np

from schagraph.score import Note, Score, TimeSignature, _STEP_INDEX


class GraphError(ValueError):
    """Raised when a graph cannot be built (e.g. a cyclic forward graph)."""


class EdgeType(IntEnum):
    ONSET = 0
    FORWARD = 1
    VOICE = 2
    REST = 3
    SUSTAIN = 4
    SLUR = 5
    INTERVAL_UP_2 = 6
    INTERVAL_UP_3 = 7
    INTERVAL_UP_4 = 8
    INTERVAL_UP_5 = 9
    INTERVAL_UP_6 = 10
    INTERVAL_UP_7 = 11
    INTERVAL_UP_8 = 12
    INTERVAL_DOWN_2 = 13
    INTERVAL_DOWN_3 = 14
    INTERVAL_DOWN_4 = 15
    INTERVAL_DOWN_5 = 16
    INTERVAL_DOWN_6 = 17
    INTERVAL_DOWN_7 = 18
    INTERVAL_DOWN_8 = 19

    @property
    def json_name(self) -> str:
        return self.name.lower()


EDGE_TYPE_COUNT = len(EdgeType)  # m = 20

# Node feature columns (p = 47).
FEATURE_LAYOUT: dict[str, tuple[int, int]] = {
    "pitch_class": (0, 35),        # 7 steps x 5 alterations, one-hot
    "midi": (35, 36),              # midi / 127
    "scale_degree": (36, 44),      # degree one-hot (7) + alteration (1)
    "duration": (44, 45),          # duration / max duration
    "offset": (45, 46),            # onset / piece span
    "metric_strength": (46, 47),
}
FEATURE_DIM = 47

_MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)
_MINOR_SCALE = (0, 2, 3, 5, 7, 8, 10)


@dataclass(frozen=True)
class MusicGraph:
    """A score as a multi-relational graph with a fixed topological order."""

    n: int
    X: np.ndarray
    adjacency: dict[EdgeType, np.ndarray]
    topo_order: np.ndarray
    feature_layout: dict[str, tuple[int, int]]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def metric_strength(note: Note, timesig: TimeSignature) -> float:
    """Accentual weight of the note's position within its measure.

    Ladder: downbeat 1.0; mid-measure strong beat 0.75 (even meters only);
    other beats 0.5; half-beat offsets 0.25; anything finer 0.125.
    """
    b = note.beat
    if b == 0:
        return 1.0
    if timesig.num % 2 == 0 and b == timesig.measure_quarters / 2:
        return 0.75
    unit = timesig.beat_quarters
    if b % unit == 0:
        return 0.5
    if b % (unit / 2) == 0:
        return 0.25
    return 0.125


def scale_degree(note: Note, score: Score) -> tuple[int, int]:
    """(degree 1-7, chromatic alteration) of the note relative to the key.

    Degree counts letter names from the tonic; alteration is the semitone
    offset from the diatonic pitch of that degree, wrapped to [-1, 1].
    """
    key = score.key
    degree_idx = (_STEP_INDEX[note.pitch.step] - _STEP_INDEX[key.tonic_step]) % 7
    scale = _MAJOR_SCALE if key.mode == "major" else _MINOR_SCALE
    expected_pc = (key.tonic_pc + scale[degree_idx]) % 12
    diff = (note.pitch.midi - expected_pc + 6) % 12 - 6
    return degree_idx + 1, int(np.clip(diff, -1, 1))


def build_features(score: Score) -> np.ndarray:
    """n x 47 node feature matrix; see FEATURE_LAYOUT for the columns."""
    n = score.n
    X = np.zeros((n, FEATURE_DIM))
    max_duration = max(note.duration for note in score.notes)
    last = score.notes[-1]
    span = last.onset + last.duration
    for j, note in enumerate(score.notes):
        X[j, _STEP_INDEX[note.pitch.step] * 5 + note.pitch.alter + 2] = 1.0
        X[j, 35] = note.pitch.midi / 127.0
        degree, alteration = scale_degree(note, score)
        X[j, 36 + degree - 1] = 1.0
        X[j, 43] = alteration / 2.0
        X[j, 44] = float(note.duration / max_duration)
        X[j, 45] = float(note.onset / span) if span > 0 else 0.0
        X[j, 46] = metric_strength(note, score.timesig_at(note.measure))
    return X


def _onset_groups(notes) -> list[list[Note]]:
    groups: list[list[Note]] = []
    for note in notes:
        if groups and groups[-1][0].onset == note.onset:
            groups[-1].append(note)
        else:
            groups.append([note])
    return groups


def build_base_edges(score: Score) -> dict[EdgeType, np.ndarray]:
    """The six base adjacency matrices (onset/forward/voice/rest/sustain/slur)."""
    n = score.n
    adj = {t: np.zeros((n, n)) for t in list(EdgeType)[:6]}
    notes = score.notes

    groups = _onset_groups(notes)
    for group in groups:
        for a in group:
            for b in group:
                if a.id != b.id:
                    adj[EdgeType.ONSET][a.id, b.id] = 1.0
    for prev, nxt in zip(groups, groups[1:]):
        for a in prev:
            for b in nxt:
                adj[EdgeType.FORWARD][a.id, b.id] = 1.0

    by_voice: dict[int, list[Note]] = {}
    for note in notes:
        by_voice.setdefault(note.voice_id, []).append(note)
    for voice_notes in by_voice.values():
        vgroups = _onset_groups(voice_notes)
        for prev, nxt in zip(vgroups, vgroups[1:]):
            for a in prev:
                for b in nxt:
                    kind = EdgeType.REST if b.onset > a.offset_end else EdgeType.VOICE
                    adj[kind][a.id, b.id] = 1.0

    for a in notes:
        for b in notes:
            if a.onset < b.onset < a.offset_end:
                adj[EdgeType.SUSTAIN][a.id, b.id] = 1.0

    for a in notes:
        for b in notes:
            if a.id != b.id and a.slur_ids & b.slur_ids:
                adj[EdgeType.SLUR][a.id, b.id] = 1.0
    return adj


def build_intervalic_edges(
    score: Score, topo_order: np.ndarray
) -> dict[EdgeType, np.ndarray]:
    """Edges to the next note a given diatonic interval away (2nd..octave).

    For each note, interval size, and direction there is at most one edge:
    to the earliest later note at the exact letter-name distance, any
    voice; onset ties resolve to the earlier note in topological order.
    """
    n = score.n
    adj = {t: np.zeros((n, n)) for t in list(EdgeType)[6:]}
    topo_pos = np.empty(n, dtype=int)
    topo_pos[topo_order] = np.arange(n)
    notes = score.notes
    for a in notes:
        dpos_a = a.pitch.diatonic_position
        for size in range(2, 9):
            for direction, block in ((1, EdgeType.INTERVAL_UP_2), (-1, EdgeType.INTERVAL_DOWN_2)):
                target = dpos_a + direction * (size - 1)
                best = None
                for b in notes:
                    if b.onset <= a.onset or b.pitch.diatonic_position != target:
                        continue
                    key = (b.onset, topo_pos[b.id])
                    if best is None or key < best[0]:
                        best = (key, b.id)
                if best is not None:
                    adj[EdgeType(block + size - 2)][a.id, best[1]] = 1.0
    return adj


def topological_order(forward_adjacency: np.ndarray, score: Score) -> np.ndarray:
    """Kahn's algorithm over the forward graph.

    Ready nodes are popped lowest onset first, then lowest voice_id
    (treble before bass), then lowest id, so the order is deterministic.
    """
    n = forward_adjacency.shape[0]
    indegree = forward_adjacency.sum(axis=0).astype(int)
    priority = {
        note.id: (note.onset, note.voice_id, note.id) for note in score.notes
    }
    heap = [priority[j] for j in range(n) if indegree[j] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, _, j = heapq.heappop(heap)
        order.append(j)
        for k in np.nonzero(forward_adjacency[j])[0]:
            indegree[k] -= 1
            if indegree[k] == 0:
                heapq.heappush(heap, priority[k])
    if len(order) != n:
        stuck = next(j for j in range(n) if indegree[j] > 0)
        raise GraphError(f"forward graph contains a cycle through note {stuck}")
    return np.array(order, dtype=int)


def build_graph(score: Score) -> MusicGraph:
    """Assemble features, all 20 adjacency matrices, and the topological order."""
    X = build_features(score)
    adjacency = build_base_edges(score)
    topo = topological_order(adjacency[EdgeType.FORWARD], score)
    adjacency.update(build_intervalic_edges(score, topo))
    return MusicGraph(
        n=score.n,
        X=X,
        adjacency=adjacency,
        topo_order=topo,
        feature_layout=dict(FEATURE_LAYOUT),
    )


def graph_to_json(graph: MusicGraph) -> bytes:
    doc = {
        "n": graph.n,
        "p": graph.p,
        "feature_layout": {k: list(v) for k, v in graph.feature_layout.items()},
        "X": graph.X.tolist(),
        "edges": {
            t.json_name: [
                [int(r), int(c)] for r, c in zip(*np.nonzero(graph.adjacency[t]))
            ]
            for t in EdgeType
        },
        "topo_order": graph.topo_order.tolist(),
    }
    return json.dumps(doc, indent=1).encode("utf-8")


def graph_from_json(data: bytes) -> MusicGraph:
    doc = json.loads(data)
    n = int(doc["n"])
    X = np.array(doc["X"], dtype=float).reshape(n, int(doc["p"]))
    adjacency = {}
    for t in EdgeType:
        A = np.zeros((n, n))
        for r, c in doc["edges"].get(t.json_name, []):
            A[r, c] = 1.0
        adjacency[t] = A
    return MusicGraph(
        n=n,
        X=X,
        adjacency=adjacency,
        topo_order=np.array(doc["topo_order"], dtype=int),
        feature_layout={k: tuple(v) for k, v in doc["feature_layout"].items()},
    )
