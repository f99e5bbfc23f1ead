/**
 * Equirectangular projection of the dome for the 2D editing view, matching
 * the service's convention: azimuth from atan2(x, z), polar from acos(y).
 */

import type { PanelLayout } from "./types.js";

export interface PanelPoint {
  id: number;
  /** Horizontal position in [0, 1): azimuth. */
  u: number;
  /** Vertical position in [0, 1]: polar angle. */
  v: number;
}

export function projectPanel(panel: PanelLayout): PanelPoint {
  const [x, y, z] = panel.dir;
  const phi = Math.atan2(x, z);
  const theta = Math.acos(Math.min(Math.max(y, -1), 1));
  return {
    id: panel.id,
    u: (phi + Math.PI) / (2 * Math.PI),
    v: theta / Math.PI,
  };
}

export function projectLayout(panels: PanelLayout[]): PanelPoint[] {
  return panels.map(projectPanel);
}

function directionFromUv(u: number, v: number): [number, number, number] {
  const phi = u * 2 * Math.PI - Math.PI;
  const theta = v * Math.PI;
  const st = Math.sin(theta);
  return [st * Math.sin(phi), Math.cos(theta), st * Math.cos(phi)];
}

/**
 * Click hit-test: the panel whose direction is angularly nearest to the
 * clicked equirect position. This matches the service's Voronoi ownership,
 * so clicking inside a cell selects that cell's panel.
 */
export function hitTest(panels: PanelLayout[], u: number, v: number): number | null {
  if (panels.length === 0) return null;
  const d = directionFromUv(u, v);
  let best = -1;
  let bestDot = -Infinity;
  for (const panel of panels) {
    const dot = d[0] * panel.dir[0] + d[1] * panel.dir[1] + d[2] * panel.dir[2];
    if (dot > bestDot) {
      bestDot = dot;
      best = panel.id;
    }
  }
  return best;
}
