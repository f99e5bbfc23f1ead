import { describe, expect, it } from "vitest";

import { hitTest, projectLayout, projectPanel } from "../src/projection.js";
import { cssColor, dmxToDisplayRgb } from "../src/heatmap.js";
import type { Dmx6, PanelLayout } from "../src/types.js";

function ringLayout(n: number): PanelLayout[] {
  return Array.from({ length: n }, (_, i) => {
    const phi = (2 * Math.PI * i) / n - Math.PI + 0.1;
    return { id: i, dir: [Math.sin(phi), 0, Math.cos(phi)] as [number, number, number] };
  });
}

describe("projection", () => {
  it("maps the zenith to the top edge and +Z to the horizontal center", () => {
    const zenith = projectPanel({ id: 0, dir: [0, 1, 0] });
    expect(zenith.v).toBeCloseTo(0, 12);
    const forward = projectPanel({ id: 1, dir: [0, 0, 1] });
    expect(forward.u).toBeCloseTo(0.5, 12);
    expect(forward.v).toBeCloseTo(0.5, 12);
  });

  it("clicking a panel's own equirect position selects that panel", () => {
    const layout = ringLayout(24);
    for (const point of projectLayout(layout)) {
      expect(hitTest(layout, point.u, point.v)).toBe(point.id);
    }
  });

  it("clicking between panels selects the angularly nearest one", () => {
    const layout: PanelLayout[] = [
      { id: 0, dir: [0, 1, 0] },
      { id: 1, dir: [0, 0, 1] },
    ];
    expect(hitTest(layout, 0.5, 0.05)).toBe(0); // near the pole
    expect(hitTest(layout, 0.5, 0.45)).toBe(1); // near the equator center
    expect(hitTest([], 0.5, 0.5)).toBeNull();
  });
});

describe("heatmap display colors", () => {
  it("renders dark panels dark and full red as pure red", () => {
    expect(dmxToDisplayRgb([0, 0, 0, 0, 0, 0] as Dmx6)).toEqual([0, 0, 0]);
    const [r, g, b] = dmxToDisplayRgb([255, 0, 0, 0, 0, 0] as Dmx6);
    expect(r).toBe(255);
    expect(g).toBe(0);
    expect(b).toBe(0);
  });

  it("white channel renders neutral", () => {
    const [r, g, b] = dmxToDisplayRgb([0, 0, 0, 0, 0, 255] as Dmx6);
    expect(r).toBe(g);
    expect(g).toBe(b);
    expect(r).toBeGreaterThan(0);
  });

  it("produces css color strings", () => {
    expect(cssColor([255, 0, 0, 0, 0, 0] as Dmx6)).toBe("rgb(255, 0, 0)");
  });
});
