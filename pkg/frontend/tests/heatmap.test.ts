import { describe, expect, it } from "vitest";

import { DEFAULT_HEAT, cellIndex, heatmapRGBA } from "../src/heatmap.js";

const WS: [[number, number], [number, number]] = [[0, 0], [1, 1]];

describe("heatmapRGBA", () => {
  it("emits four bytes per cell", () => {
    const out = heatmapRGBA([0.1, 0.2, 0.7]);
    expect(out.length).toBe(12);
  });

  it("scales opacity so the peak cell hits maxAlpha", () => {
    const out = heatmapRGBA([0.0, 0.5, 0.25], { r: 10, g: 20, b: 30, maxAlpha: 0.5 });
    expect(out[4 * 1 + 3]).toBe(Math.round(0.5 * 255));
    expect(out[4 * 2 + 3]).toBe(Math.round(0.25 * 255));
    expect(out[4 * 0 + 3]).toBe(0);
    expect(out[4 * 1 + 0]).toBe(10);
    expect(out[4 * 1 + 1]).toBe(20);
    expect(out[4 * 1 + 2]).toBe(30);
  });

  it("an all-zero map renders fully transparent", () => {
    const out = heatmapRGBA(new Array(784).fill(0), DEFAULT_HEAT);
    expect(out.every((b) => b === 0)).toBe(true);
  });

  it("uniform map gives uniform peak opacity", () => {
    const n = 28 * 28;
    const out = heatmapRGBA(new Array(n).fill(1 / n), DEFAULT_HEAT);
    const expected = Math.round(DEFAULT_HEAT.maxAlpha * 255);
    for (let i = 0; i < n; i++) expect(out[4 * i + 3]).toBe(expected);
  });
});

describe("cellIndex", () => {
  it("maps corners to the corner cells, row-major from the bottom", () => {
    expect(cellIndex(0.001, 0.001, 28, WS)).toBe(0);
    expect(cellIndex(0.999, 0.001, 28, WS)).toBe(27);
    expect(cellIndex(0.001, 0.999, 28, WS)).toBe(27 * 28);
    expect(cellIndex(0.999, 0.999, 28, WS)).toBe(28 * 28 - 1);
  });

  it("clamps points outside the workspace", () => {
    expect(cellIndex(-5, -5, 28, WS)).toBe(0);
    expect(cellIndex(5, 5, 28, WS)).toBe(28 * 28 - 1);
  });

  it("respects the grid size", () => {
    expect(cellIndex(0.6, 0.6, 2, WS)).toBe(3);
  });
});
