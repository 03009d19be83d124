// Entry point: builds the DOM, wires events to the controller, and re-renders
// on every state change. Base URL comes from ?api=... or defaults to same
// origin on port 8000.

import { ServiceClient } from "./api.js";
import { CanvasController } from "./controller.js";
import { cellIndex, valueToGray } from "./coords.js";
import { paintGrid } from "./render.js";
import { canRequest, isStale, type CanvasState } from "./state.js";

const GRID: number[] = [16, 16];
const VIEW = 384;

function baseUrl(): string {
  const param = new URLSearchParams(location.search).get("api");
  return param ?? `${location.protocol}//${location.hostname}:8000`;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

async function boot(): Promise<void> {
  const app = document.querySelector<HTMLDivElement>("#app")!;
  app.append(el("h1", "", "samplefield canvas"));

  const client = new ServiceClient(baseUrl());
  const checkpoints = await client.listCheckpoints();
  const ckpt = checkpoints.find((c) => c.pos_dim === 2 && c.value_dim === 1);
  if (!ckpt) {
    app.append(el("p", "error", "no 2-d grayscale checkpoint is loaded on the server"));
    return;
  }
  app.append(el("p", "hint", `checkpoint: ${ckpt.id} — click to paint, shift-click to erase`));

  // --- layout ----------------------------------------------------------------
  const row = el("div", "row");
  const left = el("div", "col");
  const right = el("div", "col");
  row.append(left, right);
  app.append(row);

  const board = el("canvas", "board") as HTMLCanvasElement;
  board.width = board.height = VIEW;
  left.append(board);

  const brushRow = el("div", "controls");
  const brushLabel = el("span", "", "brush 128");
  const brush = el("input") as HTMLInputElement;
  brush.type = "range";
  brush.min = "0";
  brush.max = "255";
  brush.value = "128";
  brushRow.append(brushLabel, brush);
  left.append(brushRow);

  const buttons = el("div", "controls");
  const meanBtn = el("button", "", "Mean");
  const sampleBtn = el("button", "", "Sample x4");
  const repeatBtn = el("button", "", "Same seed");
  buttons.append(meanBtn, sampleBtn, repeatBtn);
  left.append(buttons);

  const banner = el("div", "banner hidden");
  const retryBtn = el("button", "", "Retry");
  banner.append(el("span", "", "network failure — your edits are kept locally "), retryBtn);
  left.append(banner);
  const toast = el("div", "toast hidden");
  left.append(toast);
  const hover = el("div", "hover", "hover a cell to inspect its distribution");
  left.append(hover);

  const meanPanel = el("div", "panel");
  meanPanel.append(el("h2", "", "mean"));
  const meanBadge = el("span", "badge", "—");
  meanPanel.append(meanBadge);
  const meanCanvas = el("canvas", "thumb-large") as HTMLCanvasElement;
  meanCanvas.width = meanCanvas.height = 192;
  const meanNote = el("p", "note hidden");
  meanPanel.append(meanCanvas, meanNote);
  right.append(meanPanel);

  const samplePanel = el("div", "panel");
  samplePanel.append(el("h2", "", "samples"));
  const sampleBadge = el("span", "badge", "—");
  const seedNote = el("span", "note", "");
  samplePanel.append(sampleBadge, seedNote);
  const strip = el("div", "strip");
  samplePanel.append(strip);
  const enlarged = el("canvas", "thumb-large hidden") as HTMLCanvasElement;
  enlarged.width = enlarged.height = 192;
  samplePanel.append(enlarged);
  right.append(samplePanel);

  // --- controller ------------------------------------------------------------
  const ctl = new CanvasController(client, ckpt.id, GRID, render);
  await ctl.connect();

  function brushValue(): number {
    return (2 * Number(brush.value)) / 255 - 1;
  }

  brush.addEventListener("input", () => {
    brushLabel.textContent = `brush ${brush.value}`;
  });

  function cellAt(ev: MouseEvent): number[] {
    const rect = board.getBoundingClientRect();
    const c = Math.floor(((ev.clientX - rect.left) / rect.width) * GRID[1]);
    const r = Math.floor(((ev.clientY - rect.top) / rect.height) * GRID[0]);
    return [
      Math.min(Math.max(r, 0), GRID[0] - 1),
      Math.min(Math.max(c, 0), GRID[1] - 1),
    ];
  }

  board.addEventListener("click", (ev) => {
    const cell = cellAt(ev);
    if (ev.shiftKey || (ctl.hasObservation(cell) && !ev.altKey)) {
      void ctl.removeObservation(cell);
    } else {
      void ctl.placeObservation(cell, brushValue());
    }
  });

  board.addEventListener("mousemove", (ev) => {
    if (!ctl.canRequest()) return;
    void ctl.queryCell(cellAt(ev)).then((view) => {
      if (!view) return;
      const bins = view.topBins
        .map((b) => `q=${b.q.toFixed(2)} at ${b.center_plus_mu[0].toFixed(2)}±${b.sigma.toFixed(2)}`)
        .join("  |  ");
      hover.textContent = `expected ${view.expected[0].toFixed(3)} (rev ${view.revision})  ${bins}`;
    });
  });

  meanBtn.addEventListener("click", () => void ctl.refreshMean());
  sampleBtn.addEventListener("click", () => void ctl.requestSamples(4));
  repeatBtn.addEventListener("click", () => void ctl.repeatSamples());
  retryBtn.addEventListener("click", () => void ctl.retrySync());

  // --- rendering ---------------------------------------------------------------
  function paintBoard(state: CanvasState): void {
    const ctx = board.getContext("2d")!;
    ctx.fillStyle = "#20242b";
    ctx.fillRect(0, 0, VIEW, VIEW);
    const cw = VIEW / GRID[1];
    const ch = VIEW / GRID[0];
    ctx.strokeStyle = "#3a4150";
    for (let r = 0; r <= GRID[0]; r++) {
      ctx.beginPath();
      ctx.moveTo(0, r * ch);
      ctx.lineTo(VIEW, r * ch);
      ctx.stroke();
    }
    for (let c = 0; c <= GRID[1]; c++) {
      ctx.beginPath();
      ctx.moveTo(c * cw, 0);
      ctx.lineTo(c * cw, VIEW);
      ctx.stroke();
    }
    for (const obs of state.observations) {
      const g = valueToGray(obs.value);
      ctx.fillStyle = `rgb(${g},${g},${g})`;
      ctx.fillRect(obs.cell[1] * cw + 1, obs.cell[0] * ch + 1, cw - 2, ch - 2);
    }
  }

  function thumbnail(values: number[], index: number): HTMLCanvasElement {
    const thumb = el("canvas", "thumb") as HTMLCanvasElement;
    thumb.width = thumb.height = 64;
    paintGrid(thumb, values, GRID);
    thumb.title = `sample ${index} — click to enlarge`;
    thumb.addEventListener("click", () => {
      enlarged.classList.remove("hidden");
      paintGrid(enlarged, values, GRID);
    });
    return thumb;
  }

  function render(state: CanvasState): void {
    paintBoard(state);
    const ready = canRequest(state);
    meanBtn.disabled = !ready;
    sampleBtn.disabled = !ready;
    repeatBtn.disabled = state.samples === null;
    banner.classList.toggle("hidden", !state.retryBanner);
    toast.classList.toggle("hidden", state.toast === null);
    toast.textContent = state.toast ?? "";

    if (state.mean) {
      paintGrid(meanCanvas, state.mean.values, state.gridShape);
      meanBadge.textContent = `rev ${state.mean.revision}`;
      meanBadge.classList.toggle("stale", isStale(state, state.mean));
    }
    meanNote.classList.toggle("hidden", state.meanDisabledReason === null);
    meanNote.textContent = state.meanDisabledReason ?? "";

    if (state.samples) {
      sampleBadge.textContent = `rev ${state.samples.revision}`;
      sampleBadge.classList.toggle("stale", isStale(state, state.samples));
      seedNote.textContent = ` seed ${state.samples.seed}`;
      strip.replaceChildren(...state.samples.images.map((img, i) => thumbnail(img, i)));
    }
  }

  render(ctl.state);
}

boot().catch((err: Error) => {
  document.querySelector("#app")!.append(el("p", "error", String(err)));
});
