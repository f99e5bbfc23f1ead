/**
 * Browser entry: canvas dome view, channel sliders, RGB picker, transport
 * bar, preview panes, and the stale badge. All rendering reads
 * ConsoleController state; all service traffic goes through ServiceClient.
 */

import { ServiceClient } from "./api.js";
import { ConsoleController } from "./console.js";
import { cssColor } from "./heatmap.js";
import { hitTest, projectLayout } from "./projection.js";
import type { Dmx6, PanelLayout, Weights6 } from "./types.js";

const LED_LABELS = ["red", "green", "blue", "amber", "cyan", "white"] as const;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function setupConsole(): void {
  const client = new ServiceClient(window.location.origin);
  const controller = new ConsoleController(client, (url) => new WebSocket(url) as never);

  const canvas = el<HTMLCanvasElement>("dome-view");
  const maybeCtx = canvas.getContext("2d");
  if (!maybeCtx) throw new Error("canvas 2d context unavailable");
  const ctx: CanvasRenderingContext2D = maybeCtx;

  let layout: PanelLayout[] = [];

  const staleBadge = el<HTMLSpanElement>("stale-badge");
  const selectionLabel = el<HTMLSpanElement>("selection-label");
  const toastBox = el<HTMLDivElement>("toasts");
  const timeLabel = el<HTMLSpanElement>("time-label");
  const sliders = LED_LABELS.map((label) => el<HTMLInputElement>(`slider-${label}`));

  function render(): void {
    const { liveFrame, selection, stale, transport, toasts } = controller.state;
    staleBadge.hidden = !stale;
    selectionLabel.textContent = selection.size ? `panels ${[...selection].join(", ")}` : "no selection";
    timeLabel.textContent = transport
      ? `${transport.playing ? "playing" : "paused"} t=${transport.t.toFixed(2)}s`
      : "idle";
    toastBox.textContent = toasts.map((t) => t.message).join("\n");

    ctx.fillStyle = "#101014";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    if (!layout.length) return;
    for (const point of projectLayout(layout)) {
      const dmx = (liveFrame ? controller.displayedDmx(point.id) : null) ?? ([0, 0, 0, 0, 0, 0] as Dmx6);
      const x = point.u * canvas.width;
      const y = point.v * canvas.height;
      ctx.beginPath();
      ctx.arc(x, y, Math.max(3, canvas.width / 140), 0, 2 * Math.PI);
      ctx.fillStyle = cssColor(dmx);
      ctx.fill();
      if (selection.has(point.id)) {
        ctx.strokeStyle = "#ffcf5a";
        ctx.lineWidth = 2;
        ctx.stroke();
      }
    }
  }

  controller.onChange = render;

  canvas.addEventListener("click", (event) => {
    const rect = canvas.getBoundingClientRect();
    const u = (event.clientX - rect.left) / rect.width;
    const v = (event.clientY - rect.top) / rect.height;
    const id = hitTest(layout, u, v);
    if (id !== null) controller.select(id, event.shiftKey);
  });

  for (const slider of sliders) {
    slider.addEventListener("input", () => {
      const weights = sliders.map((s) => Number(s.value) / 255) as Weights6;
      controller.editChannels(weights);
    });
  }

  el<HTMLInputElement>("rgb-picker").addEventListener("input", (event) => {
    const hex = (event.target as HTMLInputElement).value;
    const rgb: [number, number, number] = [
      parseInt(hex.slice(1, 3), 16) / 255,
      parseInt(hex.slice(3, 5), 16) / 255,
      parseInt(hex.slice(5, 7), 16) / 255,
    ];
    controller.editRgb(rgb);
  });

  el<HTMLButtonElement>("btn-clear").addEventListener("click", () => void controller.clearOverrides());
  el<HTMLButtonElement>("btn-play").addEventListener("click", () => {
    const name = el<HTMLSelectElement>("sequence-select").value;
    void controller.play(name || undefined);
  });
  el<HTMLButtonElement>("btn-pause").addEventListener("click", () => void controller.pause());
  el<HTMLButtonElement>("btn-stop").addEventListener("click", () => void controller.stopPlayback());
  el<HTMLInputElement>("seek-bar").addEventListener("change", (event) => {
    void controller.seek(Number((event.target as HTMLInputElement).value));
  });

  el<HTMLButtonElement>("btn-previews").addEventListener("click", () => {
    el<HTMLImageElement>("preview-probe").src = client.previewUrl("probe_diffuse", { source: "recon", size: 128, _: Date.now() });
    el<HTMLImageElement>("preview-cells").src = client.previewUrl("voronoi_overlay", { _: Date.now() });
  });

  void controller.start().then(() => {
    const state = controller.state.serviceState;
    if (!state) return;
    layout = controller.panelLayoutFromState(state.panel_dirs);
    const select = el<HTMLSelectElement>("sequence-select");
    select.innerHTML = "";
    for (const name of state.sequences) {
      const option = document.createElement("option");
      option.value = name;
      option.textContent = name;
      select.appendChild(option);
    }
    render();
  });
}

setupConsole();
