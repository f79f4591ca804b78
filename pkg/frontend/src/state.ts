/**
 * Pure view-state machine for one query session.
 *
 * The UI is a plain client of the service: it formats what the API returns
 * and tracks which entries are new, but never recomputes scores or reorders
 * lists. All transition logic lives here, free of DOM concerns, so the
 * contract (stale payloads dropped, version display monotone, new-entry
 * marks exactly for ids absent from the previous list) is testable on
 * recorded payloads.
 */

import type { ResultsPayload } from "./types.js";

export interface GridCell {
  /** Stable identity for keyed rendering, derived from the repository id. */
  key: string;
  rank: number;
  id: number;
  name: string | null;
  /** Preformatted score text; the client does no arithmetic on scores. */
  score: string;
  /** True when this id was absent from the previously displayed list. */
  isNew: boolean;
}

export interface SessionView {
  sessionId: string | null;
  query: string;
  state: string;
  modelVersion: number;
  positivesFed: number;
  cells: readonly GridCell[];
  /** Fraction of ids new in each successive list, oldest first. */
  churn: readonly number[];
  error: string | null;
}

const CHURN_WINDOW = 120;

export function emptyView(): SessionView {
  return {
    sessionId: null,
    query: "",
    state: "idle",
    modelVersion: 0,
    positivesFed: 0,
    cells: [],
    churn: [],
    error: null,
  };
}

/** View shown immediately after a session is created, before any results. */
export function startingView(sessionId: string, query: string, state: string): SessionView {
  return { ...emptyView(), sessionId, query, state };
}

/** Terminal view for a query the service could not resolve. No grid. */
export function failedView(query: string, reason: string): SessionView {
  return { ...emptyView(), query, state: "failed", error: reason };
}

function isEntry(value: unknown): boolean {
  if (typeof value !== "object" || value === null) return false;
  const entry = value as Record<string, unknown>;
  return typeof entry.id === "number" && typeof entry.score === "number";
}

/** Structural guard used before trusting a polled payload. */
export function isResultsPayload(value: unknown): value is ResultsPayload {
  if (typeof value !== "object" || value === null) return false;
  const payload = value as Record<string, unknown>;
  return (
    typeof payload.state === "string" &&
    typeof payload.model_version === "number" &&
    typeof payload.positives_fed === "number" &&
    Array.isArray(payload.entries) &&
    payload.entries.every(isEntry)
  );
}

export function formatScore(score: number): string {
  return score.toFixed(4);
}

function buildCells(payload: ResultsPayload, previousIds: ReadonlySet<number>): GridCell[] {
  return payload.entries.map((entry, index) => ({
    key: `e${entry.id}`,
    rank: index + 1,
    id: entry.id,
    name: entry.name ?? null,
    score: formatScore(entry.score),
    isNew: !previousIds.has(entry.id),
  }));
}

function sameList(cells: readonly GridCell[], payload: ResultsPayload): boolean {
  if (cells.length !== payload.entries.length) return false;
  return payload.entries.every((entry, index) => {
    const cell = cells[index];
    return (
      cell !== undefined &&
      cell.id === entry.id &&
      cell.score === formatScore(entry.score)
    );
  });
}

export interface ApplyOutcome {
  view: SessionView;
  /** False when the payload was malformed or stale; the view is unchanged. */
  accepted: boolean;
}

/**
 * Fold one polled results payload into the view.
 *
 * A payload whose model_version is below the displayed one is dropped, so
 * the shown version never decreases even if responses arrive out of order.
 * When the list itself is unchanged (same ids and scores, same version) the
 * existing cells object is kept, which lets the renderer skip all work and
 * keeps current new-entry marks until the list actually moves.
 */
export function applyResults(view: SessionView, payload: unknown): ApplyOutcome {
  if (!isResultsPayload(payload)) {
    return { view, accepted: false };
  }
  if (payload.model_version < view.modelVersion) {
    return { view, accepted: false };
  }

  if (payload.model_version === view.modelVersion && sameList(view.cells, payload)) {
    const next: SessionView = {
      ...view,
      state: payload.state,
      positivesFed: payload.positives_fed,
    };
    return { view: next, accepted: true };
  }

  const previousIds = new Set(view.cells.map((cell) => cell.id));
  const cells = buildCells(payload, previousIds);
  const fresh = cells.filter((cell) => cell.isNew).length;
  const churnValue = cells.length === 0 ? 0 : fresh / cells.length;
  const churn = [...view.churn, churnValue].slice(-CHURN_WINDOW);

  const next: SessionView = {
    ...view,
    state: payload.state,
    modelVersion: payload.model_version,
    positivesFed: payload.positives_fed,
    cells,
    churn,
    error: null,
  };
  return { view: next, accepted: true };
}
