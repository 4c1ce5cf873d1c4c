/** Typed client for the inference service; one in-flight request per endpoint. */

import { AssignmentDoc, PieceDetail, PieceSummary, ScoresDoc } from "./types.js";

export class StaleCacheError extends Error {}

async function getJson<T>(url: string): Promise<T> {
  const resp = await fetch(url);
  if (resp.status === 409) {
    throw new StaleCacheError(`stale cache for ${url}`);
  }
  if (!resp.ok) {
    throw new Error(`GET ${url} failed: ${resp.status}`);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  listPieces(): Promise<PieceSummary[]> {
    return getJson(`${this.base}/pieces`);
  }

  pieceDetail(id: string): Promise<PieceDetail> {
    return getJson(`${this.base}/pieces/${id}`);
  }

  /** Scores are cached server-side; a 409 means the piece changed on disk
   *  and the caller should refetch (the server already dropped its cache). */
  async pieceScores(id: string, retryOnStale = true): Promise<ScoresDoc> {
    try {
      return await getJson<ScoresDoc>(`${this.base}/pieces/${id}/scores`);
    } catch (err) {
      if (err instanceof StaleCacheError && retryOnStale) {
        return this.pieceScores(id, false);
      }
      throw err;
    }
  }

  /** Server-verified assignment, used only on commit (not slider moves). */
  async commitAssignment(id: string, thresholds: number[]): Promise<AssignmentDoc> {
    const resp = await fetch(`${this.base}/pieces/${id}/assignment`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ c_min: thresholds }),
    });
    if (!resp.ok) {
      throw new Error(`POST assignment failed: ${resp.status}`);
    }
    return (await resp.json()) as AssignmentDoc;
  }
}
