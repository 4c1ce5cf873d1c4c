/** Page wiring: piece selection, sliders, commit, export. */

import { ApiClient } from "./api.js";
import { buildExport, ExportBlockedError } from "./export.js";
import { membership } from "./membership.js";
import { renderPieceSvg } from "./pianoroll.js";
import { PieceDetail, PieceSummary, ScoresDoc } from "./types.js";

interface AppState {
  pieces: PieceSummary[];
  pieceId: string | null;
  detail: PieceDetail | null;
  scores: ScoresDoc | null;
  thresholds: number[];
}

const api = new ApiClient("");
const state: AppState = {
  pieces: [],
  pieceId: null,
  detail: null,
  scores: null,
  thresholds: [],
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function banner(message: string, kind: "error" | "info" | "ok" = "info") {
  const box = el<HTMLDivElement>("banner");
  box.textContent = message;
  box.className = message ? `banner ${kind}` : "banner hidden";
}

function render() {
  const roll = el<HTMLDivElement>("roll");
  const flags = el<HTMLDivElement>("violations");
  if (!state.detail || !state.scores) {
    roll.innerHTML = "";
    flags.textContent = "";
    return;
  }
  const { svg, violations } = renderPieceSvg(
    state.detail.piece.notes,
    state.scores.scores,
    state.scores.voices,
    state.thresholds,
  );
  roll.innerHTML = svg;
  if (violations.length) {
    const detail = violations
      .slice(0, 6)
      .map((v) => `note ${v.note} in depth ${v.depth} but not ${v.depth - 1}`)
      .join("; ");
    flags.textContent =
      `${violations.length} nesting violation(s): ${detail}` +
      (violations.length > 6 ? "; …" : "");
    flags.className = "flags bad";
  } else {
    flags.textContent = "assignment is nested";
    flags.className = "flags good";
  }
}

function buildSliders() {
  const holder = el<HTMLDivElement>("sliders");
  holder.innerHTML = "";
  const make = (label: string, value: number, onInput: (v: number) => void) => {
    const row = document.createElement("label");
    row.className = "slider-row";
    const caption = document.createElement("span");
    const readout = document.createElement("code");
    const input = document.createElement("input");
    caption.textContent = label;
    input.type = "range";
    input.min = "0.01";
    input.max = "0.99";
    input.step = "0.01";
    input.value = String(value);
    readout.textContent = value.toFixed(2);
    input.addEventListener("input", () => {
      const v = Number(input.value);
      readout.textContent = v.toFixed(2);
      onInput(v);
      render(); // local recompute only; no server round-trip
    });
    row.append(caption, input, readout);
    holder.appendChild(row);
    return input;
  };

  const depthInputs: HTMLInputElement[] = [];
  state.thresholds.forEach((value, l) => {
    depthInputs.push(
      make(`depth ${l + 1}`, value, (v) => {
        state.thresholds[l] = v;
      }),
    );
  });
  make("all depths", state.scores?.c_min ?? 0.5, (v) => {
    state.thresholds = state.thresholds.map(() => v);
    depthInputs.forEach((input) => {
      input.value = String(v);
      const readout = input.nextElementSibling as HTMLElement | null;
      if (readout) readout.textContent = v.toFixed(2);
    });
  });
}

async function selectPiece(id: string) {
  try {
    state.pieceId = id;
    state.detail = await api.pieceDetail(id);
    state.scores = await api.pieceScores(id);
    state.thresholds = new Array(state.scores.scores.length).fill(
      state.scores.c_min,
    );
    buildSliders();
    banner("");
    render();
  } catch (err) {
    banner(`failed to load piece: ${err}`, "error");
  }
}

async function commit() {
  if (!state.pieceId || !state.scores) return;
  try {
    const server = await api.commitAssignment(state.pieceId, state.thresholds);
    const local = membership(state.scores.scores, state.thresholds);
    const agrees = JSON.stringify(server.assignment) === JSON.stringify(local);
    banner(
      agrees
        ? "server verified: assignment matches the local view"
        : "server DISAGREES with the local view - please report",
      agrees ? "ok" : "error",
    );
  } catch (err) {
    banner(`commit failed: ${err}`, "error");
  }
}

function exportAnalysis() {
  if (!state.scores) return;
  try {
    const doc = buildExport(
      state.scores.scores,
      state.thresholds,
      state.scores.voices,
      state.scores.c_min,
    );
    const blob = new Blob([JSON.stringify(doc, null, 1)], {
      type: "application/json",
    });
    const link = document.createElement("a");
    link.href = URL.createObjectURL(blob);
    link.download = `${state.pieceId}.annotation.json`;
    link.click();
    URL.revokeObjectURL(link.href);
    banner("analysis exported", "ok");
  } catch (err) {
    if (err instanceof ExportBlockedError) {
      banner(err.message, "error");
    } else {
      banner(`export failed: ${err}`, "error");
    }
  }
}

async function init() {
  try {
    state.pieces = await api.listPieces();
  } catch (err) {
    banner(`cannot reach the analysis service: ${err}`, "error");
    return;
  }
  const select = el<HTMLSelectElement>("piece-select");
  select.innerHTML = "";
  for (const piece of state.pieces) {
    const option = document.createElement("option");
    option.value = piece.id;
    option.textContent = `${piece.title} (${piece.n} notes, d=${piece.d})`;
    select.appendChild(option);
  }
  select.addEventListener("change", () => void selectPiece(select.value));
  el<HTMLButtonElement>("commit").addEventListener("click", () => void commit());
  el<HTMLButtonElement>("export").addEventListener("click", exportAnalysis);
  if (state.pieces.length) {
    await selectPiece(state.pieces[0].id);
  }
}

void init();
