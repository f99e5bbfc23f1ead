/** DTOs matching the control service's JSON payloads. */

/** Six DMX bytes, one per LED channel: R, G, B, amber, cyan, white. */
export type Dmx6 = [number, number, number, number, number, number];

/** Six drive weights in [0, 1], same channel order as Dmx6. */
export type Weights6 = [number, number, number, number, number, number];

export type Rgb = [number, number, number];

export interface TransportState {
  playing: boolean;
  sequence: string | null;
  t: number;
  fps: number | null;
  frames_emitted: number;
  lateness_ms_median: number | null;
}

export interface ServiceState {
  name: string;
  n_panels: number;
  universes: number[];
  panel_dirs: [number, number, number][];
  envmaps: string[];
  sequences: string[];
  base_lightmap: {
    source: string | null;
    deficit: number[];
    exposure_scalar: number;
  };
  overrides: Record<string, number[]>;
  transport: TransportState;
  version: number;
}

/** One frame from the live stream. frame_no is -1 for idle (edit) frames. */
export interface LiveFrame {
  version: number;
  frame_no: number;
  dmx: Dmx6[];
  lateness: number;
  playing: boolean;
  t: number;
}

export interface ReproduceResultInfo {
  source: string | null;
  deficit: number[];
  exposure_scalar: number;
  dilation_iterations?: number;
  dilation_converged?: boolean;
}

export type OverrideMode = "rgb" | "direct";

export type TransportAction = "play" | "pause" | "seek" | "stop";

export type PreviewKind = "probe_diffuse" | "probe_mirror" | "recon_env" | "voronoi_overlay";

/** Panel geometry the console needs for the equirect projection. */
export interface PanelLayout {
  id: number;
  /** Unit direction from the dome center, +Y up. */
  dir: [number, number, number];
}
