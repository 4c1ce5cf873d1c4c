/** Pure analysis math shared by rendering, export, and tests.
 *
 * The membership rule is pointwise identical to the service's: a note is
 * in depth l exactly when its score is >= the depth-l threshold (ties
 * count as in).  Everything here is O(d * n), so slider moves never need
 * a server round-trip.
 */

export function membership(scores: number[][], thresholds: number[]): number[][] {
  if (thresholds.length !== scores.length) {
    throw new Error(
      `expected ${scores.length} thresholds, got ${thresholds.length}`,
    );
  }
  return scores.map((row, l) => row.map((s) => (s >= thresholds[l] ? 1 : 0)));
}

export function margins(scores: number[][], thresholds: number[]): number[][] {
  return scores.map((row, l) => row.map((s) => s - thresholds[l]));
}

/** Deepest level containing the note under the current thresholds (0 = none). */
export function maxDepth(bits: number[][], note: number): number {
  let deepest = 0;
  for (let l = 0; l < bits.length; l++) {
    if (bits[l][note] === 1) deepest = l + 1;
  }
  return deepest;
}

export interface NestingViolation {
  note: number;
  depth: number; // 1-based level that is occupied while depth-1 is not
}

/** Notes present at some depth but absent from a shallower one.
 *
 * Independently chosen per-depth thresholds can produce non-nested
 * assignments; these are flagged, never silently repaired.
 */
export function nestingViolations(bits: number[][]): NestingViolation[] {
  const out: NestingViolation[] = [];
  const n = bits.length ? bits[0].length : 0;
  for (let j = 0; j < n; j++) {
    for (let l = 1; l < bits.length; l++) {
      if (bits[l][j] === 1 && bits[l - 1][j] === 0) {
        out.push({ note: j, depth: l + 1 });
      }
    }
  }
  return out;
}
