/**
 * Display colorization of DMX frames for the dome heatmap. This is
 * presentation only: a fixed six-channel to sRGB approximation for the
 * operator's eyes. All real lighting math stays server-side.
 */

import type { Dmx6 } from "./types.js";

/** Fixed display mix per LED channel (R, G, B, amber, cyan, white). */
const DISPLAY_MIX: ReadonlyArray<readonly [number, number, number]> = [
  [1.0, 0.0, 0.0],
  [0.0, 1.0, 0.0],
  [0.0, 0.0, 1.0],
  [0.5, 0.25, 0.0],
  [0.0, 0.25, 0.5],
  [1 / 3, 1 / 3, 1 / 3],
];

export function dmxToDisplayRgb(dmx: Dmx6): [number, number, number] {
  let r = 0;
  let g = 0;
  let b = 0;
  for (let c = 0; c < 6; c++) {
    const level = (dmx[c] ?? 0) / 255;
    const mix = DISPLAY_MIX[c]!;
    r += level * mix[0];
    g += level * mix[1];
    b += level * mix[2];
  }
  const encode = (x: number) => Math.round(Math.min(1, x) ** (1 / 2.2) * 255);
  return [encode(r), encode(g), encode(b)];
}

export function cssColor(dmx: Dmx6): string {
  const [r, g, b] = dmxToDisplayRgb(dmx);
  return `rgb(${r}, ${g}, ${b})`;
}
