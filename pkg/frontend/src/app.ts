/**
 * DOM wiring for the query console. All behavior lives in the pure modules;
 * this file binds them to the page and executes grid diff ops against real
 * elements, one node per cell key.
 */

import { HttpApiClient } from "./api.js";
import { SessionController } from "./controller.js";
import { diffGrid } from "./grid.js";
import type { GridCell, SessionView } from "./state.js";
import { sparklinePath } from "./sparkline.js";

function mustFind<T extends Element>(selector: string): T {
  const node = document.querySelector<T>(selector);
  if (node === null) throw new Error(`missing element ${selector}`);
  return node;
}

function hueFor(label: string): number {
  let h = 0;
  for (let i = 0; i < label.length; i += 1) {
    h = (h * 31 + label.charCodeAt(i)) % 360;
  }
  return h;
}

declare global {
  interface Window {
    /** Optional base URL for thumbnails looked up by entry name. */
    OTF_THUMBS_BASE?: string;
  }
}

class GridRenderer {
  private readonly nodes = new Map<string, HTMLElement>();
  private cells: readonly GridCell[] = [];

  constructor(private readonly container: HTMLElement) {}

  private buildNode(cell: GridCell): HTMLElement {
    const tile = document.createElement("figure");
    tile.className = "tile";
    tile.dataset.key = cell.key;
    const label = cell.name ?? `#${cell.id}`;

    const thumbsBase = window.OTF_THUMBS_BASE;
    if (thumbsBase && cell.name) {
      const img = document.createElement("img");
      img.loading = "lazy";
      img.alt = label;
      img.src = `${thumbsBase}/${encodeURIComponent(cell.name)}.jpg`;
      img.addEventListener("error", () => {
        img.remove();
        tile.style.background = `hsl(${hueFor(label)} 45% 30%)`;
      });
      tile.appendChild(img);
    } else {
      tile.style.background = `hsl(${hueFor(label)} 45% 30%)`;
    }

    const caption = document.createElement("figcaption");
    const rank = document.createElement("span");
    rank.className = "rank";
    const name = document.createElement("span");
    name.className = "name";
    name.textContent = label;
    const score = document.createElement("span");
    score.className = "score";
    caption.append(rank, name, score);
    tile.appendChild(caption);
    return tile;
  }

  private patch(node: HTMLElement, cell: GridCell): void {
    const rank = node.querySelector(".rank");
    if (rank) rank.textContent = String(cell.rank);
    const score = node.querySelector(".score");
    if (score) score.textContent = cell.score;
    node.classList.toggle("new", cell.isNew);
  }

  render(cells: readonly GridCell[]): void {
    const ops = diffGrid(this.cells, cells);
    const byKey = new Map(cells.map((cell) => [cell.key, cell]));
    for (const op of ops) {
      if (op.kind === "remove") {
        this.nodes.get(op.key)?.remove();
        this.nodes.delete(op.key);
      } else if (op.kind === "place") {
        const cell = byKey.get(op.key);
        if (cell === undefined) continue;
        let node = this.nodes.get(op.key);
        if (node === undefined) {
          node = this.buildNode(cell);
          this.patch(node, cell);
          this.nodes.set(op.key, node);
        }
        const reference = this.container.children[op.index] ?? null;
        this.container.insertBefore(node, reference);
      } else {
        const node = this.nodes.get(op.key);
        const cell = byKey.get(op.key);
        if (node !== undefined && cell !== undefined) this.patch(node, cell);
      }
    }
    this.cells = cells;
  }

  clear(): void {
    this.nodes.clear();
    this.cells = [];
    this.container.replaceChildren();
  }
}

function main(): void {
  const form = mustFind<HTMLFormElement>("#query-form");
  const input = mustFind<HTMLInputElement>("#query-input");
  const stopButton = mustFind<HTMLButtonElement>("#stop-button");
  const banner = mustFind<HTMLElement>("#error-banner");
  const stateBadge = mustFind<HTMLElement>("#state-badge");
  const versionBadge = mustFind<HTMLElement>("#version-badge");
  const fedBadge = mustFind<HTMLElement>("#fed-badge");
  const sessionLabel = mustFind<HTMLElement>("#session-label");
  const sparkline = mustFind<SVGPathElement>("#churn-path");
  const gridHost = mustFind<HTMLElement>("#grid");

  const renderer = new GridRenderer(gridHost);
  let lastSession: string | null = null;

  const apply = (view: SessionView): void => {
    if (view.sessionId !== lastSession) {
      renderer.clear();
      lastSession = view.sessionId;
    }
    banner.textContent = view.error ?? "";
    banner.hidden = view.error === null;
    stateBadge.textContent = view.state;
    stateBadge.dataset.state = view.state;
    versionBadge.textContent = `model v${view.modelVersion}`;
    fedBadge.textContent = `${view.positivesFed} positives`;
    sessionLabel.textContent = view.sessionId ? `session ${view.sessionId.slice(0, 8)}` : "";
    sparkline.setAttribute("d", sparklinePath(view.churn));
    renderer.render(view.cells);
  };

  const params = new URLSearchParams(window.location.search);
  const pollMs = Math.max(250, Number(params.get("poll") ?? "250") || 250);
  const limit = Math.max(1, Number(params.get("k") ?? "24") || 24);

  const controller = new SessionController(new HttpApiClient(""), {
    onChange: apply,
    pollMs,
    limit,
  });

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const query = input.value.trim();
    if (query.length > 0) void controller.submit(query);
  });
  stopButton.addEventListener("click", () => {
    void controller.stop();
  });
}

main();
