// Labeling workbench: pages through spectrogram snippets, labels snakes with
// the keyboard, retrains the classifier and shows live metrics. Pure client
// of the REST API; overlays are server-rendered and the only client drawing
// is the highlight box around the active snake.

import { ApiClient, ApiError, Metrics, SnakeInfo } from "./api.js";
import {
  AppState,
  FEATURE_ORDER,
  applyOptimisticLabel,
  confirmLabel,
  filterNeedsSnakes,
  firedCutoffs,
  formatFeature,
  initialState,
  nextHighlight,
  nextUnlabeled,
  rollbackLabel,
  snakeBox,
  syncProgress,
  visibleSnippets,
  Filter,
} from "./state.js";

const client = new ApiClient();
const state: AppState = initialState();

const $ = <T extends HTMLElement>(selector: string): T => {
  const el = document.querySelector(selector);
  if (!el) throw new Error(`missing element ${selector}`);
  return el as T;
};

function setNotice(text: string | null, isError = false): void {
  state.notice = text;
  const el = $("#notice");
  el.textContent = text ?? "";
  el.className = isError ? "notice error" : "notice";
}

function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (c) =>
    ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;", "'": "&#39;" })[c] as string);
}

// ---------------------------------------------------------------------------
// snippet list

async function ensureSnakes(snippetId: string): Promise<SnakeInfo[]> {
  let snakes = state.snakesBySnippet.get(snippetId);
  if (!snakes) {
    snakes = await client.getSnakes(snippetId);
    state.snakesBySnippet.set(snippetId, snakes);
  }
  return snakes;
}

async function applyFilter(filter: Filter): Promise<void> {
  state.filter = filter;
  state.page = 0;
  if (filterNeedsSnakes(filter)) {
    setNotice("loading predictions…");
    for (const s of state.snippets) await ensureSnakes(s.snippet_id);
    setNotice(null);
  }
  renderList();
}

function renderList(): void {
  state.current = null;
  const { items, pages } = visibleSnippets(state);
  const main = $("#main");
  const cards = items.map((s) => {
    const done = s.n_snakes > 0 && s.n_labeled === s.n_snakes;
    return `
      <article class="card ${done ? "done" : ""}" data-snippet="${escapeHtml(s.snippet_id)}">
        <img src="${escapeHtml(s.overlay_url)}" alt="overlay of ${escapeHtml(s.snippet_id)}" loading="lazy">
        <footer>
          <span class="mono">${escapeHtml(s.snippet_id)}</span>
          <span class="progress">${s.n_labeled}/${s.n_snakes} labeled</span>
        </footer>
      </article>`;
  });
  main.innerHTML = `
    <div class="cards">${cards.join("") || "<p class='empty'>No snippets match this filter.</p>"}</div>
    <nav class="pager">
      <button id="prev-page" ${state.page <= 0 ? "disabled" : ""}>&laquo; prev</button>
      <span>page ${state.page + 1} / ${pages}</span>
      <button id="next-page" ${state.page >= pages - 1 ? "disabled" : ""}>next &raquo;</button>
    </nav>`;
  main.querySelectorAll<HTMLElement>(".card").forEach((card) => {
    card.addEventListener("click", () => void openSnippet(card.dataset.snippet as string));
  });
  $("#prev-page").addEventListener("click", () => { state.page--; renderList(); });
  $("#next-page").addEventListener("click", () => { state.page++; renderList(); });
}

// ---------------------------------------------------------------------------
// detail view

async function openSnippet(snippetId: string): Promise<void> {
  try {
    await ensureSnakes(snippetId);
  } catch (err) {
    setNotice(`failed to load snakes: ${err}`, true);
    return;
  }
  state.current = snippetId;
  const snakes = state.snakesBySnippet.get(snippetId) as SnakeInfo[];
  state.highlight = nextUnlabeled(snakes, 0) ?? 0;
  renderDetail();
}

function labelBadge(snake: SnakeInfo): string {
  if (snake.label === null) return `<span class="badge pending">unlabeled</span>`;
  return snake.label.target
    ? `<span class="badge yes">whistle</span>`
    : `<span class="badge no">false</span>`;
}

function predictionBadge(snake: SnakeInfo): string {
  if (snake.prediction === null) return "";
  const frac = snake.vote_fraction === null ? "" : ` ${(snake.vote_fraction * 100).toFixed(0)}%`;
  return snake.prediction === 1
    ? `<span class="badge pred-yes">pred: whistle${frac}</span>`
    : `<span class="badge pred-no">pred: false${frac}</span>`;
}

function renderDetail(): void {
  const snippetId = state.current;
  if (!snippetId) return;
  const summary = state.snippets.find((s) => s.snippet_id === snippetId);
  const snakes = state.snakesBySnippet.get(snippetId) ?? [];
  const rows = snakes.map((snake, i) => `
    <li class="snake-row ${i === state.highlight ? "active" : ""}" data-index="${i}">
      <span class="mono">${escapeHtml(snake.snake_id.split(":").pop() ?? "")}</span>
      ${predictionBadge(snake)} ${labelBadge(snake)}
    </li>`);
  const active = snakes[state.highlight];
  $("#main").innerHTML = `
    <div class="detail">
      <div class="viewer">
        <button id="back">&larr; back (esc)</button>
        <div class="stack" id="stack">
          <img id="overlay-img" src="${escapeHtml(summary?.overlay_url ?? "")}" alt="overlay">
          <div id="highlight-box" hidden></div>
        </div>
        <p class="hint">T = whistle &middot; F = false &middot; N/space = skip &middot; &uarr;/&darr; = move &middot; R = retrain</p>
      </div>
      <aside class="sidebar">
        <h2>${escapeHtml(snippetId)} <small>${snakes.length} snakes</small></h2>
        <ol id="snake-list">${rows.join("") || "<p class='empty'>No snakes in this snippet.</p>"}</ol>
        <div id="inspect">${active ? inspectHtml(active) : ""}</div>
      </aside>
    </div>`;
  $("#back").addEventListener("click", renderList);
  document.querySelectorAll<HTMLElement>(".snake-row").forEach((row) => {
    row.addEventListener("click", () => {
      state.highlight = Number(row.dataset.index);
      renderDetail();
    });
  });
  const img = $("#overlay-img") as HTMLImageElement;
  if (img.complete) positionHighlight();
  else img.addEventListener("load", positionHighlight);
}

function inspectHtml(snake: SnakeInfo): string {
  const rows = FEATURE_ORDER.map((name) => `
    <tr><td>${name}</td><td class="mono">${formatFeature(snake.features[name] ?? null)}</td></tr>`);
  const fired = firedCutoffs(snake.features);
  return `
    <h3>features</h3>
    <table class="features">${rows.join("")}</table>
    <p class="cutoffs">${fired.length ? `cutoffs fired: <b>${fired.join(", ")}</b>` : "no binary cutoffs fired"}</p>`;
}

function positionHighlight(): void {
  const snippetId = state.current;
  if (!snippetId) return;
  const snakes = state.snakesBySnippet.get(snippetId) ?? [];
  const active = snakes[state.highlight];
  const box = $("#highlight-box");
  const img = $("#overlay-img") as HTMLImageElement;
  if (!active || !img.naturalWidth) {
    box.hidden = true;
    return;
  }
  const scaleX = img.clientWidth / img.naturalWidth;
  const scaleY = img.clientHeight / img.naturalHeight;
  const b = snakeBox(active.points, img.naturalHeight);
  box.hidden = false;
  box.style.left = `${b.left * scaleX}px`;
  box.style.top = `${b.top * scaleY}px`;
  box.style.width = `${b.width * scaleX}px`;
  box.style.height = `${b.height * scaleY}px`;
}

// ---------------------------------------------------------------------------
// labeling

async function annotate(target: boolean): Promise<void> {
  const snippetId = state.current;
  if (!snippetId) return;
  const snakes = state.snakesBySnippet.get(snippetId) ?? [];
  const active = snakes[state.highlight];
  if (!active) return;
  const summary = state.snippets.find((s) => s.snippet_id === snippetId);
  const { previous, sendVersion } = applyOptimisticLabel(snakes, active.snake_id, target);
  if (summary) syncProgress(summary, snakes);
  advanceHighlight(snakes);
  renderDetail();
  try {
    const confirmed = await client.postLabel(active.snake_id, target, sendVersion);
    confirmLabel(snakes, active.snake_id, confirmed);
  } catch (err) {
    rollbackLabel(snakes, active.snake_id, previous);
    if (summary) syncProgress(summary, snakes);
    if (err instanceof ApiError && err.status === 409) {
      setNotice("label conflict: refreshing snippet", true);
      state.snakesBySnippet.delete(snippetId);
      await openSnippet(snippetId);
      return;
    }
    setNotice(`label failed: ${err}`, true);
    renderDetail();
  }
}

function advanceHighlight(snakes: SnakeInfo[]): void {
  const next = nextUnlabeled(snakes, state.highlight);
  state.highlight = next ?? nextHighlight(snakes.length, state.highlight);
}

// ---------------------------------------------------------------------------
// retraining and metrics

function metricsHtml(metrics: Metrics): string {
  const [[tn, fp], [fn, tp]] = metrics.confusion;
  const chosen = metrics.chosen as { n_estimators: number; criterion: string } | undefined;
  return `
    <h3>last training</h3>
    <table class="confusion">
      <tr><th></th><th>pred 0</th><th>pred 1</th></tr>
      <tr><th>true 0</th><td>${tn}</td><td>${fp}</td></tr>
      <tr><th>true 1</th><td>${fn}</td><td>${tp}</td></tr>
    </table>
    <dl class="scores">
      <dt>accuracy</dt><dd>${metrics.accuracy.toFixed(3)}</dd>
      <dt>false positive rate</dt><dd>${metrics.false_positive_rate.toFixed(3)}</dd>
      <dt>false negative rate</dt><dd>${metrics.false_negative_rate.toFixed(3)}</dd>
      ${chosen ? `<dt>model</dt><dd>${chosen.n_estimators} trees, ${escapeHtml(chosen.criterion)}</dd>` : ""}
    </dl>
    <button id="close-metrics">close</button>`;
}

function showMetrics(metrics: Metrics): void {
  state.metrics = metrics;
  const panel = $("#metrics-panel");
  panel.hidden = false;
  panel.innerHTML = metricsHtml(metrics);
  $("#close-metrics").addEventListener("click", () => { panel.hidden = true; });
}

async function retrain(): Promise<void> {
  if (state.busy) return;
  state.busy = true;
  const button = $("#retrain") as HTMLButtonElement;
  button.disabled = true;
  setNotice("training…");
  try {
    const metrics = await client.train({});
    setNotice(null);
    showMetrics(metrics);
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      setNotice("a training job is already running", true);
    } else {
      setNotice(`training failed: ${err}`, true);
    }
  } finally {
    state.busy = false;
    button.disabled = false;
  }
}

// ---------------------------------------------------------------------------
// boot

function onKeydown(event: KeyboardEvent): void {
  if (event.target instanceof HTMLInputElement || event.target instanceof HTMLSelectElement) return;
  if (state.current === null) return;
  const snakes = state.snakesBySnippet.get(state.current) ?? [];
  switch (event.key.toLowerCase()) {
    case "t":
      void annotate(true);
      break;
    case "f":
      void annotate(false);
      break;
    case "n":
    case " ":
      state.highlight = nextHighlight(snakes.length, state.highlight);
      renderDetail();
      break;
    case "arrowdown":
      state.highlight = nextHighlight(snakes.length, state.highlight, 1);
      renderDetail();
      break;
    case "arrowup":
      state.highlight = nextHighlight(snakes.length, state.highlight, -1);
      renderDetail();
      break;
    case "r":
      void retrain();
      break;
    case "escape":
      renderList();
      break;
    default:
      return;
  }
  event.preventDefault();
}

async function boot(): Promise<void> {
  $("#filter").addEventListener("change", (e) => {
    void applyFilter((e.target as HTMLSelectElement).value as Filter);
  });
  $("#retrain").addEventListener("click", () => void retrain());
  document.addEventListener("keydown", onKeydown);
  window.addEventListener("resize", positionHighlight);
  try {
    state.snippets = await client.listSnippets();
  } catch (err) {
    setNotice(`failed to load snippets: ${err}`, true);
    return;
  }
  const existing = await client.metrics();
  if (existing) state.metrics = existing;
  renderList();
}

void boot();
