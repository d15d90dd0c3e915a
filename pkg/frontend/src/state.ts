// Pure view-state helpers: filtering, paging, highlight cycling and the
// optimistic-label bookkeeping. No DOM and no network in here, so the whole
// labeling workflow is unit-testable.

import type { Label, Metrics, SnakeInfo, SnippetSummary } from "./api.js";

export type Filter = "all" | "unlabeled" | "predicted-true" | "predicted-false";

export const PAGE_SIZE = 12;

export interface AppState {
  snippets: SnippetSummary[];
  snakesBySnippet: Map<string, SnakeInfo[]>;
  filter: Filter;
  page: number;
  current: string | null; // snippet open in the detail view
  highlight: number; // index of the active snake within the open snippet
  metrics: Metrics | null;
  busy: boolean;
  notice: string | null;
}

export function initialState(): AppState {
  return {
    snippets: [],
    snakesBySnippet: new Map(),
    filter: "all",
    page: 0,
    current: null,
    highlight: 0,
    metrics: null,
    busy: false,
    notice: null,
  };
}

export function snippetMatchesFilter(
  summary: SnippetSummary,
  snakes: SnakeInfo[] | undefined,
  filter: Filter,
): boolean {
  switch (filter) {
    case "all":
      return true;
    case "unlabeled":
      return summary.n_labeled < summary.n_snakes;
    case "predicted-true":
      return (snakes ?? []).some((s) => s.prediction === 1);
    case "predicted-false":
      return (snakes ?? []).some((s) => s.prediction === 0);
  }
}

export function visibleSnippets(state: AppState): { items: SnippetSummary[]; pages: number } {
  const matching = state.snippets.filter((s) =>
    snippetMatchesFilter(s, state.snakesBySnippet.get(s.snippet_id), state.filter),
  );
  const pages = Math.max(1, Math.ceil(matching.length / PAGE_SIZE));
  const page = Math.min(state.page, pages - 1);
  return { items: matching.slice(page * PAGE_SIZE, (page + 1) * PAGE_SIZE), pages };
}

/** Prediction filters need per-snippet snakes; everything else is free. */
export function filterNeedsSnakes(filter: Filter): boolean {
  return filter === "predicted-true" || filter === "predicted-false";
}

export function labeledCount(snakes: SnakeInfo[]): number {
  return snakes.filter((s) => s.label !== null).length;
}

/**
 * Apply a label locally before the server confirms. Returns the previous
 * label so the caller can roll back, plus the version to send (the server
 * expects the version currently stored, not the optimistic one).
 */
export function applyOptimisticLabel(
  snakes: SnakeInfo[],
  snakeId: string,
  target: boolean,
): { previous: Label; sendVersion: number } {
  const snake = snakes.find((s) => s.snake_id === snakeId);
  if (!snake) throw new Error(`unknown snake ${snakeId}`);
  const previous = snake.label;
  const sendVersion = previous ? previous.version : 0;
  snake.label = { target, version: sendVersion + 1 };
  return { previous, sendVersion };
}

export function rollbackLabel(snakes: SnakeInfo[], snakeId: string, previous: Label): void {
  const snake = snakes.find((s) => s.snake_id === snakeId);
  if (snake) snake.label = previous;
}

export function confirmLabel(
  snakes: SnakeInfo[],
  snakeId: string,
  confirmed: { target: boolean; version: number },
): void {
  const snake = snakes.find((s) => s.snake_id === snakeId);
  if (snake) snake.label = { target: confirmed.target, version: confirmed.version };
}

/** Refresh a summary's progress counter after labeling. */
export function syncProgress(summary: SnippetSummary, snakes: SnakeInfo[]): void {
  summary.n_labeled = labeledCount(snakes);
}

/** Next highlight position, cycling in detection order. */
export function nextHighlight(count: number, from: number, step: 1 | -1 = 1): number {
  if (count <= 0) return 0;
  return (from + step + count) % count;
}

/** First unlabeled snake at or after `from`, or null when all are labeled. */
export function nextUnlabeled(snakes: SnakeInfo[], from: number): number | null {
  if (snakes.length === 0) return null;
  for (let i = 0; i < snakes.length; i++) {
    const idx = (from + i) % snakes.length;
    if (snakes[idx].label === null) return idx;
  }
  return null;
}

/** Which binary cutoffs fired, for the inspect panel. */
export function firedCutoffs(features: Record<string, number | boolean | null>): string[] {
  return ["low_density", "long", "low"].filter((name) => features[name] === true);
}

export const FEATURE_ORDER = [
  "avg_density",
  "avg_x",
  "avg_y",
  "inertia",
  "length",
  "relative_density",
  "low_density",
  "long",
  "low",
] as const;

export function formatFeature(value: number | boolean | null): string {
  if (value === null) return "–";
  if (typeof value === "boolean") return value ? "1" : "0";
  return Number.isInteger(value) ? String(value) : value.toFixed(4);
}

/** Bounding box of a snake in rendered-image pixel coordinates; the grid is
 * bottom-origin while the PNG is top-origin, so y flips. */
export function snakeBox(
  points: [number, number][],
  imageHeight: number,
  pad = 3,
): { left: number; top: number; width: number; height: number } {
  const xs = points.map((p) => p[0]);
  const ys = points.map((p) => p[1]);
  const minX = Math.min(...xs) - pad;
  const maxX = Math.max(...xs) + pad;
  const minY = Math.min(...ys) - pad;
  const maxY = Math.max(...ys) + pad;
  return {
    left: minX,
    top: imageHeight - 1 - maxY,
    width: maxX - minX,
    height: maxY - minY,
  };
}
