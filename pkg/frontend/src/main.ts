/**
 * Browser entry point: connects to the teleoperation service, maps
 * pointer motion to velocity commands at a fixed rate, and renders
 * interpolated state between server ticks.
 */

import {
  PROTOCOL_VERSION,
  MODES,
  parseServerMessage,
  type ConfigMsg,
  type ModeName,
  type StateMsg,
} from "./protocol.js";
import { COMMAND_INTERVAL_MS, CommandStream, DEFAULT_INPUT, pointerToCommand } from "./input.js";
import { StateBuffer } from "./interpolate.js";
import { RingBuffer } from "./traces.js";
import { computeView, drawScene, drawStrip, screenToWorld, type View } from "./render.js";

const STALE_AFTER_MS = 600;

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (el === null) throw new Error(`missing element: ${id}`);
  return el as T;
}

const canvas = byId<HTMLCanvasElement>("world");
const strips = byId<HTMLCanvasElement>("strips");
const modeSelect = byId<HTMLSelectElement>("mode");
const resetButton = byId<HTMLButtonElement>("reset");
const statusLine = byId<HTMLDivElement>("status");
const banner = byId<HTMLDivElement>("banner");

const ctx = canvas.getContext("2d");
const stripsCtx = strips.getContext("2d");
if (ctx === null || stripsCtx === null) throw new Error("canvas 2d context unavailable");

let cfg: ConfigMsg | null = null;
let view: View | null = null;
let lastState: StateMsg | null = null;
let lastStateAt = 0;
let heatmapCells: number[] | null = null;
let pointerWorld: [number, number] | null = null;
const buffer = new StateBuffer();
const alphaTrace = new RingBuffer(600);
const confTrace = new RingBuffer(600);
const stream = new CommandStream();

function setStatus(text: string): void {
  statusLine.textContent = text;
}

function showBanner(text: string, cls: string): void {
  banner.textContent = text;
  banner.className = `banner ${cls}`;
}

function hideBanner(): void {
  banner.textContent = "";
  banner.className = "banner hidden";
}

function serverUrl(): string {
  const override = new URLSearchParams(window.location.search).get("server");
  return override ?? "ws://127.0.0.1:8765";
}

function startEpisodeView(): void {
  buffer.clear();
  alphaTrace.clear();
  confTrace.clear();
  heatmapCells = null;
  hideBanner();
}

for (const m of MODES) {
  const opt = document.createElement("option");
  opt.value = m;
  opt.textContent = m.replace("_", " ");
  modeSelect.appendChild(opt);
}

const ws = new WebSocket(serverUrl());
setStatus(`connecting to ${serverUrl()}`);

ws.onopen = () => {
  ws.send(JSON.stringify({ type: "hello", version: PROTOCOL_VERSION }));
  setStatus("connected");
};

ws.onclose = () => {
  setStatus("disconnected; reload to reconnect");
  showBanner("disconnected", "error");
};

ws.onmessage = (ev: MessageEvent) => {
  const msg = parseServerMessage(String(ev.data));
  if (msg === null) return;
  switch (msg.type) {
    case "config": {
      cfg = msg;
      view = computeView(canvas.width, canvas.height, msg.workspace);
      modeSelect.value = msg.pending_mode;
      setStatus(
        msg.pending_mode !== msg.mode
          ? `mode ${msg.mode}; ${msg.pending_mode} after reset`
          : `mode ${msg.mode}`,
      );
      break;
    }
    case "state": {
      if (msg.t === 0) startEpisodeView();
      buffer.push(msg, performance.now());
      lastState = msg;
      lastStateAt = performance.now();
      alphaTrace.push(msg.alpha);
      confTrace.push(msg.conf === null ? NaN : msg.conf);
      if (msg.heatmap !== undefined) heatmapCells = msg.heatmap;
      break;
    }
    case "episode_end": {
      showBanner(
        msg.success ? `success in ${msg.timesteps} steps` : `failed after ${msg.timesteps} steps`,
        msg.success ? "success" : "failure",
      );
      break;
    }
    case "error": {
      setStatus(`server error: ${msg.reason}`);
      break;
    }
  }
};

canvas.addEventListener("pointermove", (ev: PointerEvent) => {
  if (view === null) return;
  const r = canvas.getBoundingClientRect();
  pointerWorld = screenToWorld(view, [ev.clientX - r.left, ev.clientY - r.top]);
});

canvas.addEventListener("pointerleave", () => {
  pointerWorld = null;
});

modeSelect.addEventListener("change", () => {
  if (ws.readyState !== WebSocket.OPEN) return;
  ws.send(JSON.stringify({ type: "set_mode", mode: modeSelect.value as ModeName }));
});

resetButton.addEventListener("click", () => {
  if (ws.readyState !== WebSocket.OPEN) return;
  ws.send(JSON.stringify({ type: "reset" }));
});

window.setInterval(() => {
  if (ws.readyState !== WebSocket.OPEN || cfg === null || pointerWorld === null) return;
  const gripper = buffer.gripperAt(performance.now()) ?? cfg.gripper_start;
  const params = { ...DEFAULT_INPUT, vMax: cfg.v_max };
  const v = pointerToCommand(pointerWorld, gripper, params);
  ws.send(JSON.stringify(stream.next(v)));
}, COMMAND_INTERVAL_MS);

function frame(): void {
  window.requestAnimationFrame(frame);
  if (cfg === null || view === null || ctx === null || stripsCtx === null) return;
  const now = performance.now();
  const gripper = buffer.gripperAt(now) ?? cfg.gripper_start;
  drawScene(ctx, view, cfg, gripper, lastState, heatmapCells, canvas.width);
  if (lastState !== null && !lastState.done && now - lastStateAt > STALE_AFTER_MS) {
    ctx.fillStyle = "rgba(0,0,0,0.5)";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    ctx.fillStyle = "#ff9a66";
    ctx.font = "16px sans-serif";
    ctx.fillText("no recent state from server", 20, 34);
  }
  const half = strips.height / 2;
  drawStrip(
    stripsCtx,
    { x: 0, y: 0, w: strips.width, h: half - 2 },
    alphaTrace.values(),
    alphaTrace.capacity,
    "#6ec6ff",
    "arbitration weight",
  );
  drawStrip(
    stripsCtx,
    { x: 0, y: half + 2, w: strips.width, h: half - 2 },
    confTrace.values(),
    confTrace.capacity,
    "#9fe08a",
    "goal confidence",
  );
}

window.requestAnimationFrame(frame);
