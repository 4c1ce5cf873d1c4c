/** SVG piano-roll rendering.
 *
 * Pure string-producing functions: the view is a deterministic function
 * of (notes, scores, thresholds), which keeps re-rendering idempotent and
 * testable without a DOM.  Depth is drawn twice over: shading darkens
 * with the note's max depth, and an upward stem grows one notch per
 * depth (longer stems = deeper structure).  Nesting violations get a red
 * outline and are reported, never hidden.
 */

import { maxDepth, membership, nestingViolations, NestingViolation } from "./membership.js";
import { fromRational, ScoreNote, VOICE_LABELS } from "./types.js";

const NATURAL: Record<string, number> = { C: 0, D: 2, E: 4, F: 5, G: 7, A: 9, B: 11 };
const VOICE_COLORS: Record<string, string> = {
  treble: "#2563eb",
  bass: "#b45309",
  inner: "#059669",
};

export function noteMidi(note: ScoreNote): number {
  return (note.octave + 1) * 12 + NATURAL[note.step] + note.alter;
}

export interface RollGeometry {
  pxPerQuarter: number;
  laneHeight: number;
  stemNotch: number;
  padding: number;
}

export const DEFAULT_GEOMETRY: RollGeometry = {
  pxPerQuarter: 56,
  laneHeight: 14,
  stemNotch: 7,
  padding: 28,
};

function esc(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

/** Dominant predicted voice of one note (highest scoring class). */
export function dominantVoice(voiceScores: number[]): string {
  let best = 0;
  for (let k = 1; k < voiceScores.length; k++) {
    if (voiceScores[k] > voiceScores[best]) best = k;
  }
  return VOICE_LABELS[best];
}

export interface RenderResult {
  svg: string;
  violations: NestingViolation[];
}

export function renderPieceSvg(
  notes: ScoreNote[],
  scores: number[][],
  voiceScores: number[][],
  thresholds: number[],
  geometry: RollGeometry = DEFAULT_GEOMETRY,
): RenderResult {
  const d = scores.length;
  const bits = membership(scores, thresholds);
  const violations = nestingViolations(bits);
  const violatedNotes = new Set(violations.map((v) => v.note));

  const midis = notes.map(noteMidi);
  const low = Math.min(...midis) - 2;
  const high = Math.max(...midis) + 2;
  const span = Math.max(
    ...notes.map((n) => fromRational(n.onset) + fromRational(n.duration)),
  );
  const { pxPerQuarter, laneHeight, stemNotch, padding } = geometry;
  const width = padding * 2 + span * pxPerQuarter;
  const height = padding * 2 + (high - low + 1) * laneHeight + d * stemNotch;
  const yOf = (midi: number) => padding + d * stemNotch + (high - midi) * laneHeight;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="sans-serif">`,
  );
  // lane grid
  for (let midi = low; midi <= high; midi++) {
    const y = yOf(midi);
    const shade = [1, 3, 6, 8, 10].includes(midi % 12) ? "#f3f4f6" : "#ffffff";
    parts.push(
      `<rect x="0" y="${y}" width="${width}" height="${laneHeight}" fill="${shade}"/>`,
    );
  }
  // beat lines
  for (let q = 0; q <= span; q++) {
    const x = padding + q * pxPerQuarter;
    const strong = q % 4 === 0;
    parts.push(
      `<line x1="${x}" y1="${padding}" x2="${x}" y2="${height - padding}" ` +
        `stroke="${strong ? "#d1d5db" : "#eceef1"}" stroke-width="1"/>`,
    );
  }

  notes.forEach((note, j) => {
    const x = padding + fromRational(note.onset) * pxPerQuarter;
    const w = Math.max(4, fromRational(note.duration) * pxPerQuarter - 2);
    const y = yOf(midis[j]);
    const depth = maxDepth(bits, j);
    const voice = dominantVoice(voiceScores[j]);
    const color = VOICE_COLORS[voice];
    const opacity = 0.3 + (0.7 * depth) / Math.max(d, 1);
    const outline = violatedNotes.has(j)
      ? ' stroke="#dc2626" stroke-width="2.5"'
      : ' stroke="#1f2937" stroke-width="0.5"';
    const tooltip = scores
      .map((row, l) => `depth ${l + 1}: ${row[j].toFixed(3)}`)
      .join("\n");
    parts.push(
      `<g class="note" data-note="${j}" data-depth="${depth}" data-voice="${voice}">` +
        `<rect x="${x}" y="${y + 1.5}" width="${w}" height="${laneHeight - 3}" ` +
        `rx="2" fill="${color}" fill-opacity="${opacity.toFixed(3)}"${outline}>` +
        `<title>${esc(`note ${j} (${note.step}${note.octave}) max depth ${depth}\n${tooltip}`)}</title>` +
        `</rect>`,
    );
    if (depth > 0) {
      const stemX = x + 2;
      parts.push(
        `<line x1="${stemX}" y1="${y + 1.5}" x2="${stemX}" ` +
          `y2="${y + 1.5 - depth * stemNotch}" stroke="${color}" stroke-width="2"/>`,
      );
    }
  });

  parts.push("</svg>");
  return { svg: parts.join(""), violations };
}
