/** Export of the displayed assignment in the backend's annotation format. */

import { membership, nestingViolations } from "./membership.js";
import { VOICE_LABELS, VoiceLabel } from "./types.js";

export interface AnnotationExport {
  d: number;
  depths: number[][];
  voices: VoiceLabel[][];
  metadata: { thresholds: number[]; voice_threshold: number };
}

export class ExportBlockedError extends Error {
  violations: ReturnType<typeof nestingViolations>;

  constructor(violations: ReturnType<typeof nestingViolations>) {
    super(
      `export blocked: ${violations.length} nesting violation(s); ` +
        "lower the deeper threshold or raise the shallower one",
    );
    this.violations = violations;
  }
}

/** Labels for one note: classes at/above threshold, argmax as fallback. */
export function voiceLabelsFor(
  voiceScores: number[],
  threshold: number,
): VoiceLabel[] {
  const labels = VOICE_LABELS.filter((_, k) => voiceScores[k] >= threshold);
  if (labels.length > 0) return labels.slice();
  let best = 0;
  for (let k = 1; k < voiceScores.length; k++) {
    if (voiceScores[k] > voiceScores[best]) best = k;
  }
  return [VOICE_LABELS[best]];
}

/** Build the downloadable annotation document; throws while non-nested. */
export function buildExport(
  scores: number[][],
  thresholds: number[],
  voiceScores: number[][],
  voiceThreshold: number,
): AnnotationExport {
  const bits = membership(scores, thresholds);
  const violations = nestingViolations(bits);
  if (violations.length > 0) {
    throw new ExportBlockedError(violations);
  }
  return {
    d: bits.length,
    depths: bits,
    voices: voiceScores.map((row) => voiceLabelsFor(row, voiceThreshold)),
    metadata: {
      thresholds: thresholds.slice(),
      voice_threshold: voiceThreshold,
    },
  };
}
