/** Shapes exchanged with the inference service. */

export interface PieceSummary {
  id: string;
  title: string;
  n: number;
  d: number;
}

export interface ScoreNote {
  onset: string; // rational "p/q"
  duration: string;
  step: string;
  alter: number;
  octave: number;
  voice: number;
  measure: number;
  beat: string;
  slurs: number[];
}

export interface PieceDetail {
  piece: {
    title: string;
    key: { tonic_step: string; tonic_alter: number; mode: string };
    notes: ScoreNote[];
  };
  topo_order: number[];
}

export interface ScoresDoc {
  c_min: number;
  scores: number[][]; // d x n
  voices: number[][]; // n x 3 in {treble, bass, inner} order
}

export interface AssignmentDoc {
  assignment: number[][];
  margins: number[][];
}

export const VOICE_LABELS = ["treble", "bass", "inner"] as const;
export type VoiceLabel = (typeof VOICE_LABELS)[number];

/** Rational "p/q" to float. */
export function fromRational(raw: string | number): number {
  if (typeof raw === "number") return raw;
  const [p, q] = raw.split("/");
  return Number(p) / Number(q ?? 1);
}
