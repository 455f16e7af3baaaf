/**
 * Canvas drawing for the world view and the strip charts.
 *
 * Everything draws through Canvas2DLike, the structural subset of
 * CanvasRenderingContext2D actually used, so tests can record calls
 * without a DOM. World coordinates have y pointing up; the view
 * transform flips to canvas pixels.
 */

import type { ConfigMsg, StateMsg } from "./protocol.js";
import { DEFAULT_HEAT, heatmapRGBA } from "./heatmap.js";

export interface Canvas2DLike {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  fill(): void;
  stroke(): void;
  fillText(text: string, x: number, y: number): void;
}

export interface View {
  scale: number;
  offsetX: number;
  offsetY: number;
  canvasH: number;
  workspace: [[number, number], [number, number]];
}

export function computeView(
  canvasW: number,
  canvasH: number,
  workspace: [[number, number], [number, number]],
): View {
  const [lo, hi] = workspace;
  const w = hi[0] - lo[0];
  const h = hi[1] - lo[1];
  const scale = Math.min(canvasW / w, canvasH / h);
  return {
    scale,
    offsetX: (canvasW - w * scale) / 2,
    offsetY: (canvasH - h * scale) / 2,
    canvasH,
    workspace,
  };
}

export function worldToScreen(view: View, p: [number, number]): [number, number] {
  const [lo] = view.workspace;
  return [
    view.offsetX + (p[0] - lo[0]) * view.scale,
    view.canvasH - view.offsetY - (p[1] - lo[1]) * view.scale,
  ];
}

export function screenToWorld(view: View, p: [number, number]): [number, number] {
  const [lo] = view.workspace;
  return [
    (p[0] - view.offsetX) / view.scale + lo[0],
    (view.canvasH - view.offsetY - p[1]) / view.scale + lo[1],
  ];
}

function circle(ctx: Canvas2DLike, view: View, center: [number, number], r: number): void {
  const [sx, sy] = worldToScreen(view, center);
  ctx.beginPath();
  ctx.arc(sx, sy, r * view.scale, 0, 2 * Math.PI);
}

export function drawScene(
  ctx: Canvas2DLike,
  view: View,
  cfg: ConfigMsg,
  gripper: [number, number],
  state: StateMsg | null,
  heatmap: readonly number[] | null,
  canvasW: number,
): void {
  ctx.clearRect(0, 0, canvasW, view.canvasH);
  const [lo, hi] = cfg.workspace;
  const [ox, oy] = worldToScreen(view, [lo[0], hi[1]]);
  ctx.fillStyle = "#10141a";
  ctx.fillRect(ox, oy, (hi[0] - lo[0]) * view.scale, (hi[1] - lo[1]) * view.scale);

  if (heatmap !== null) drawHeatmap(ctx, view, cfg, heatmap);

  ctx.fillStyle = "#2e8b57";
  circle(ctx, view, cfg.place_target, cfg.place_radius);
  ctx.fill();

  const half = cfg.object_half_extent;
  cfg.objects.forEach((center, i) => {
    const carried = state !== null && state.grabbed === i;
    if (carried) return; // drawn on the gripper below
    ctx.fillStyle = state !== null && state.g_star === i ? "#b8c4d0" : "#8a9099";
    const [sx, sy] = worldToScreen(view, [center[0] - half, center[1] + half]);
    ctx.fillRect(sx, sy, 2 * half * view.scale, 2 * half * view.scale);
  });

  ctx.fillStyle = "#5a4040";
  ctx.strokeStyle = "#c08080";
  ctx.lineWidth = 1;
  for (const [cx, cy, r] of cfg.obstacles) {
    circle(ctx, view, [cx, cy], r);
    ctx.fill();
    ctx.stroke();
  }

  const grabbed = state !== null && state.grabbed !== null;
  if (grabbed) {
    // carried object rides with the gripper, highlighted
    ctx.fillStyle = "#ffd45e";
    const [sx, sy] = worldToScreen(view, [gripper[0] - half, gripper[1] + half]);
    ctx.fillRect(sx, sy, 2 * half * view.scale, 2 * half * view.scale);
  }
  ctx.strokeStyle = grabbed ? "#ffd45e" : "#6ec6ff";
  ctx.fillStyle = "#6ec6ff";
  ctx.lineWidth = 2;
  circle(ctx, view, gripper, cfg.grab_radius);
  ctx.stroke();
  circle(ctx, view, gripper, 0.006);
  ctx.fill();
}

export function drawHeatmap(
  ctx: Canvas2DLike,
  view: View,
  cfg: ConfigMsg,
  cells: readonly number[],
): void {
  const grid = cfg.grid;
  const rgba = heatmapRGBA(cells, DEFAULT_HEAT);
  const [lo, hi] = cfg.workspace;
  const cw = (hi[0] - lo[0]) / grid;
  const ch = (hi[1] - lo[1]) / grid;
  for (let cy = 0; cy < grid; cy++) {
    for (let cx = 0; cx < grid; cx++) {
      const i = cy * grid + cx;
      const a = rgba[4 * i + 3];
      if (a === 0) continue;
      ctx.fillStyle = `rgba(${rgba[4 * i]},${rgba[4 * i + 1]},${rgba[4 * i + 2]},${a / 255})`;
      const [sx, sy] = worldToScreen(view, [lo[0] + cx * cw, lo[1] + (cy + 1) * ch]);
      ctx.fillRect(sx, sy, cw * view.scale + 0.5, ch * view.scale + 0.5);
    }
  }
}

export interface StripRect {
  x: number;
  y: number;
  w: number;
  h: number;
}

/** One strip chart: values in [0,1], oldest left, fixed span of `capacity`. */
export function drawStrip(
  ctx: Canvas2DLike,
  rect: StripRect,
  values: readonly number[],
  capacity: number,
  color: string,
  label: string,
): void {
  ctx.fillStyle = "#10141a";
  ctx.fillRect(rect.x, rect.y, rect.w, rect.h);
  ctx.strokeStyle = "#343b46";
  ctx.lineWidth = 1;
  ctx.strokeRect(rect.x, rect.y, rect.w, rect.h);
  ctx.beginPath();
  let started = false;
  values.forEach((v, i) => {
    if (Number.isNaN(v)) return;
    const px = rect.x + (i / Math.max(1, capacity - 1)) * rect.w;
    const py = rect.y + (1 - Math.min(1, Math.max(0, v))) * rect.h;
    if (!started) {
      ctx.moveTo(px, py);
      started = true;
    } else {
      ctx.lineTo(px, py);
    }
  });
  if (started) {
    ctx.strokeStyle = color;
    ctx.stroke();
  }
  ctx.fillStyle = "#9aa4b0";
  ctx.font = "11px sans-serif";
  ctx.fillText(label, rect.x + 4, rect.y + 12);
}
