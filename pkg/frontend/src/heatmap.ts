/**
 * Heatmap cells to RGBA pixels for alpha-blended canvas overlay.
 *
 * Cell values are relative (the belief map is normalized server-side,
 * so individual cells are tiny); opacity scales against the current
 * maximum so the hottest cell always reads at maxAlpha.
 */

export interface HeatmapStyle {
  r: number;
  g: number;
  b: number;
  maxAlpha: number;
}

export const DEFAULT_HEAT: HeatmapStyle = { r: 255, g: 120, b: 0, maxAlpha: 0.55 };

export function heatmapRGBA(
  cells: readonly number[],
  style: HeatmapStyle = DEFAULT_HEAT,
): Uint8ClampedArray {
  const out = new Uint8ClampedArray(cells.length * 4);
  let peak = 0;
  for (const c of cells) if (c > peak) peak = c;
  if (peak <= 0) return out; // fully transparent
  for (let i = 0; i < cells.length; i++) {
    const a = Math.max(0, cells[i] / peak) * style.maxAlpha;
    out[4 * i] = style.r;
    out[4 * i + 1] = style.g;
    out[4 * i + 2] = style.b;
    out[4 * i + 3] = Math.round(a * 255);
  }
  return out;
}

/** Row-major cell index for a workspace point, for hit-testing/tests. */
export function cellIndex(
  x: number,
  y: number,
  grid: number,
  workspace: [[number, number], [number, number]],
): number {
  const [lo, hi] = workspace;
  const cx = Math.min(grid - 1, Math.max(0, Math.floor(((x - lo[0]) / (hi[0] - lo[0])) * grid)));
  const cy = Math.min(grid - 1, Math.max(0, Math.floor(((y - lo[1]) / (hi[1] - lo[1])) * grid)));
  return cy * grid + cx;
}
