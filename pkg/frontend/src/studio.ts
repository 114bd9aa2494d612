/**
 * Browser wiring. Everything stateful lives in StudioSession; this file
 * paints that state onto canvases and funnels pointer events back in.
 *
 * Overlay draw order per image, bottom to top: the photo, every committed
 * pair's mask in that pair's color, the active proposed mask in white, the
 * active prompts as vector marks. Committed overlays therefore "freeze"
 * into their pair color the moment a chip appears, and live prompts always
 * stay visible above the mask they are shaping.
 */

import { StudioClient } from "./api.js";
import type { Role } from "./api.js";
import { ACTIVE_COLOR, maskToRgba, pairColor, pairColorCss } from "./overlay.js";
import { diffPixelCount } from "./png.js";
import type { PromptSet } from "./prompts.js";
import { RecordingClient, logToJson, replayLog } from "./recorder.js";
import type { RleMask } from "./rle.js";
import { StudioSession } from "./session.js";

interface ImagePanel {
  role: Role;
  canvas: HTMLCanvasElement;
  bitmap: ImageBitmap | null;
  mode: "point" | "box" | "contour";
  drag: { x0: number; y0: number; x1: number; y1: number } | null;
  trail: [number, number][];
  status: HTMLElement;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text) node.textContent = text;
  return node;
}

function canvasPoint(canvas: HTMLCanvasElement, ev: MouseEvent): [number, number] {
  const rect = canvas.getBoundingClientRect();
  const x = Math.floor(((ev.clientX - rect.left) / rect.width) * canvas.width);
  const y = Math.floor(((ev.clientY - rect.top) / rect.height) * canvas.height);
  return [
    Math.max(0, Math.min(canvas.width - 1, x)),
    Math.max(0, Math.min(canvas.height - 1, y)),
  ];
}

function paintMask(ctx: CanvasRenderingContext2D, mask: RleMask, color: Parameters<typeof maskToRgba>[1]): void {
  const scratch = document.createElement("canvas");
  scratch.width = mask.w;
  scratch.height = mask.h;
  const sctx = scratch.getContext("2d");
  if (!sctx) return;
  const layer = sctx.createImageData(mask.w, mask.h);
  layer.data.set(maskToRgba(mask, color));
  sctx.putImageData(layer, 0, 0);
  ctx.drawImage(scratch, 0, 0);
}

function paintPrompts(ctx: CanvasRenderingContext2D, prompts: PromptSet, panel: ImagePanel): void {
  for (const point of prompts.points ?? []) {
    ctx.beginPath();
    ctx.arc(point.x + 0.5, point.y + 0.5, 4, 0, Math.PI * 2);
    ctx.fillStyle = point.label === 1 ? "#2ecc40" : "#ff4136";
    ctx.fill();
    ctx.strokeStyle = "#ffffff";
    ctx.lineWidth = 1.5;
    ctx.stroke();
  }
  ctx.strokeStyle = "#ffdc00";
  ctx.lineWidth = 1.5;
  ctx.setLineDash([5, 3]);
  const box = prompts.box;
  if (box) ctx.strokeRect(box.x_lt, box.y_lt, box.x_rb - box.x_lt, box.y_rb - box.y_lt);
  if (panel.drag && panel.mode === "box") {
    const { x0, y0, x1, y1 } = panel.drag;
    ctx.strokeRect(Math.min(x0, x1), Math.min(y0, y1), Math.abs(x1 - x0), Math.abs(y1 - y0));
  }
  ctx.setLineDash([]);
  const path = panel.trail.length > 1 ? panel.trail : prompts.contour ?? [];
  if (path.length > 1) {
    ctx.beginPath();
    ctx.moveTo(path[0][0], path[0][1]);
    for (const [x, y] of path.slice(1)) ctx.lineTo(x, y);
    ctx.strokeStyle = "#ffdc00";
    ctx.stroke();
  }
}

export async function mountStudio(root: HTMLElement, baseUrl: string): Promise<void> {
  const recorder = new RecordingClient(new StudioClient(baseUrl));
  const panels: Record<Role, ImagePanel> = {
    content: makePanel("content"),
    style: makePanel("style"),
  };

  const chipList = el("ol", { class: "chips" });
  const commitBtn = el("button", {}, "commit pair");
  const runBtn = el("button", {}, "stylize");
  const runStatus = el("div", { class: "status" });
  const resultImg = el("img", { class: "result" });
  const diffLine = el("div", { class: "status" });
  const saveLogBtn = el("button", {}, "save session log");
  const replayBtn = el("button", {}, "verify replay");

  const session = await StudioSession.open(recorder, {
    onMask: (role) => {
      panels[role].status.textContent = session.roles[role].maskError ?? "";
      redraw(role);
    },
    onPairsChanged: () => {
      renderChips();
      redraw("content");
      redraw("style");
    },
    onResult: () => {},
  });

  function makePanel(role: Role): ImagePanel {
    const canvas = el("canvas", { class: "image" });
    return { role, canvas, bitmap: null, mode: "point", drag: null, trail: [], status: el("div", { class: "status" }) };
  }

  function redraw(role: Role): void {
    const panel = panels[role];
    const ctx = panel.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, panel.canvas.width, panel.canvas.height);
    if (panel.bitmap) ctx.drawImage(panel.bitmap, 0, 0);
    session.pairs.forEach((chip, index) => {
      paintMask(ctx, role === "content" ? chip.content : chip.style, pairColor(index));
    });
    const active = session.roles[role].mask;
    if (active) paintMask(ctx, active, ACTIVE_COLOR);
    paintPrompts(ctx, session.roles[role].prompts, panel);
  }

  function renderChips(): void {
    chipList.textContent = "";
    session.pairs.forEach((chip, index) => {
      const item = el("li", { class: "chip" });
      item.style.backgroundColor = pairColorCss(index);
      item.appendChild(el("span", {}, `pair ${index}`));
      if (chip.error) item.appendChild(el("strong", { class: "chip-error" }, chip.error));
      const remove = el("button", { title: "remove pair" }, "×");
      remove.addEventListener("click", () => {
        void session.removePair(index).then(() => undefined, showError);
      });
      item.appendChild(remove);
      chipList.appendChild(item);
    });
  }

  function showError(err: unknown): void {
    runStatus.textContent = err instanceof Error ? `${err.name}: ${err.message}` : String(err);
  }

  async function loadInto(role: Role, file: File): Promise<void> {
    const png = new Uint8Array(await file.arrayBuffer());
    await session.uploadImage(role, png);
    const panel = panels[role];
    panel.bitmap = await createImageBitmap(new Blob([png as BlobPart], { type: "image/png" }));
    panel.canvas.width = panel.bitmap.width;
    panel.canvas.height = panel.bitmap.height;
    panel.trail = [];
    panel.drag = null;
    redraw(role);
    renderChips();
  }

  function wirePanel(panel: ImagePanel): HTMLElement {
    const box = el("section", { class: "panel" });
    box.appendChild(el("h2", {}, panel.role));

    const file = el("input", { type: "file", accept: "image/png" });
    file.addEventListener("change", () => {
      const picked = (file as HTMLInputElement).files?.[0];
      if (picked) void loadInto(panel.role, picked).catch(showError);
    });
    box.appendChild(file);

    const modes = el("div", { class: "modes" });
    for (const mode of ["point", "box", "contour"] as const) {
      const label = el("label", {}, mode);
      const radio = el("input", { type: "radio", name: `mode-${panel.role}` });
      (radio as HTMLInputElement).checked = mode === panel.mode;
      radio.addEventListener("change", () => {
        panel.mode = mode;
      });
      label.prepend(radio);
      modes.appendChild(label);
    }
    const clear = el("button", {}, "clear prompts");
    clear.addEventListener("click", () => {
      panel.trail = [];
      panel.drag = null;
      session.clearPrompts(panel.role);
    });
    modes.appendChild(clear);
    box.appendChild(modes);

    panel.canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());
    panel.canvas.addEventListener("pointerdown", (ev) => {
      if (!panel.bitmap) return;
      const [x, y] = canvasPoint(panel.canvas, ev);
      if (panel.mode === "point") {
        // left button adds foreground, any other button background
        session.placePoint(panel.role, x, y, ev.button === 0 ? 1 : 0);
      } else if (panel.mode === "box") {
        panel.drag = { x0: x, y0: y, x1: x, y1: y };
      } else {
        panel.trail = [[x, y]];
      }
      panel.canvas.setPointerCapture(ev.pointerId);
      redraw(panel.role);
    });
    panel.canvas.addEventListener("pointermove", (ev) => {
      if (!panel.bitmap) return;
      const [x, y] = canvasPoint(panel.canvas, ev);
      if (panel.mode === "box" && panel.drag) {
        panel.drag.x1 = x;
        panel.drag.y1 = y;
        redraw(panel.role);
      } else if (panel.mode === "contour" && panel.trail.length > 0 && ev.buttons !== 0) {
        panel.trail.push([x, y]);
        redraw(panel.role);
      }
    });
    panel.canvas.addEventListener("pointerup", () => {
      if (panel.mode === "box" && panel.drag) {
        const { x0, y0, x1, y1 } = panel.drag;
        panel.drag = null;
        if (x0 !== x1 && y0 !== y1) {
          session.setBox(panel.role, {
            x_lt: Math.min(x0, x1),
            y_lt: Math.min(y0, y1),
            x_rb: Math.max(x0, x1) + 1,
            y_rb: Math.max(y0, y1) + 1,
          });
        }
      } else if (panel.mode === "contour" && panel.trail.length > 2) {
        session.setContour(panel.role, panel.trail);
        panel.trail = [];
      }
      redraw(panel.role);
    });

    box.appendChild(panel.canvas);
    box.appendChild(panel.status);
    return box;
  }

  commitBtn.addEventListener("click", () => {
    void session.commitPair().then(() => undefined, showError);
  });

  let previousResult: Uint8Array | null = null;
  runBtn.addEventListener("click", () => {
    void (async () => {
      runStatus.textContent = "running";
      const outcome = await session.runAndShow();
      if (!outcome.ok) {
        runStatus.textContent =
          outcome.pair === undefined ? outcome.error : `${outcome.error} on pair ${outcome.pair}`;
        return;
      }
      runStatus.textContent = outcome.cached ? "done (cached)" : "done";
      resultImg.src = URL.createObjectURL(new Blob([outcome.png as BlobPart], { type: "image/png" }));
      if (previousResult) {
        const differing = await diffPixelCount(previousResult, outcome.png);
        diffLine.textContent = `${differing} pixels differ from previous result`;
      }
      previousResult = outcome.png;
    })().catch(showError);
  });

  saveLogBtn.addEventListener("click", () => {
    const blob = new Blob([logToJson(recorder.log)], { type: "application/json" });
    const link = el("a", { href: URL.createObjectURL(blob), download: "session-log.json" });
    link.click();
  });

  replayBtn.addEventListener("click", () => {
    void (async () => {
      runStatus.textContent = "replaying";
      const replayed = await replayLog(new StudioClient(baseUrl), recorder.log);
      if (replayed === null || session.lastResult === null) {
        runStatus.textContent = "nothing to replay yet";
        return;
      }
      const same =
        replayed.length === session.lastResult.length &&
        replayed.every((byte, i) => byte === session.lastResult![i]);
      runStatus.textContent = same ? "replay reproduced the result byte-for-byte" : "replay DIVERGED";
    })().catch(showError);
  });

  const grid = el("main", { class: "grid" });
  grid.appendChild(wirePanel(panels.content));
  grid.appendChild(wirePanel(panels.style));

  const side = el("section", { class: "panel" });
  side.appendChild(el("h2", {}, "pairs"));
  side.appendChild(commitBtn);
  side.appendChild(chipList);
  side.appendChild(el("h2", {}, "result"));
  side.appendChild(runBtn);
  side.appendChild(runStatus);
  side.appendChild(resultImg);
  side.appendChild(diffLine);
  side.appendChild(saveLogBtn);
  side.appendChild(replayBtn);
  grid.appendChild(side);

  root.appendChild(grid);
}
