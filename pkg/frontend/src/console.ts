/**
 * Console view-state controller: wires the typed client, live stream, and
 * override store together. The view renders exclusively from this state.
 */

import { ServiceClient } from "./api.js";
import { LiveStreamClient, type SocketFactory, type StreamClock } from "./liveStream.js";
import { OverrideStore, weightsToDmx } from "./overrides.js";
import type { Clock } from "./rateLimiter.js";
import type { Dmx6, LiveFrame, PanelLayout, Rgb, ServiceState, TransportState, Weights6 } from "./types.js";

export interface Toast {
  message: string;
  at: number;
}

export interface ConsoleViewState {
  serviceState: ServiceState | null;
  selection: Set<number>;
  liveFrame: LiveFrame | null;
  stale: boolean;
  transport: TransportState | null;
  toasts: Toast[];
}

export class ConsoleController {
  readonly state: ConsoleViewState = {
    serviceState: null,
    selection: new Set(),
    liveFrame: null,
    stale: true,
    transport: null,
    toasts: [],
  };
  readonly overrides: OverrideStore;
  readonly stream: LiveStreamClient;

  /** Fired after any state change; the view re-renders from state. */
  onChange: (() => void) | null = null;

  constructor(
    readonly client: ServiceClient,
    socketFactory: SocketFactory,
    options: { clock?: Clock; streamClock?: StreamClock } = {},
  ) {
    this.overrides = new OverrideStore(client, options.clock);
    this.overrides.onRejected = (panelId, error) => {
      this.toast(`panel ${panelId}: ${error.message}`);
      this.notify();
    };
    this.stream = new LiveStreamClient(client.liveStreamUrl(), socketFactory, {
      clock: options.streamClock,
    });
    this.stream.onFrame = (frame) => {
      this.state.liveFrame = frame;
      this.overrides.reconcile(frame);
      if (this.state.transport) {
        this.state.transport = { ...this.state.transport, playing: frame.playing, t: frame.t };
      }
      this.notify();
    };
    this.stream.onStaleChange = (stale) => {
      this.state.stale = stale;
      this.notify();
    };
  }

  async start(): Promise<void> {
    this.state.serviceState = await this.client.state();
    this.state.transport = this.state.serviceState.transport;
    this.stream.start();
    this.notify();
  }

  stop(): void {
    this.stream.stop();
  }

  select(panelId: number, additive = false): void {
    if (!additive) this.state.selection.clear();
    this.state.selection.add(panelId);
    this.notify();
  }

  clearSelection(): void {
    this.state.selection.clear();
    this.notify();
  }

  /** Displayed dmx for one panel (served frame + optimistic edit layer). */
  displayedDmx(panelId: number): Dmx6 | null {
    return this.overrides.displayedDmx(panelId);
  }

  /** Slider edit: direct six-channel override on every selected panel. */
  editChannels(weights: Weights6): void {
    const dmx = weightsToDmx(weights);
    for (const panelId of this.state.selection) {
      this.overrides.setOverride(panelId, "direct", weights, dmx);
    }
    this.notify();
  }

  /** Color-picker edit: server solves RGB into the six channels, so the
   * optimistic display shows the white-free RGB approximation until the
   * stream confirms the real solve. */
  editRgb(rgb: Rgb): void {
    const display = weightsToDmx([rgb[0], rgb[1], rgb[2], 0, 0, 0]);
    for (const panelId of this.state.selection) {
      this.overrides.setOverride(panelId, "rgb", rgb, display);
    }
    this.notify();
  }

  async clearOverrides(): Promise<void> {
    for (const panelId of this.state.selection) {
      await this.overrides.clearOverride(panelId);
    }
    this.notify();
  }

  async play(sequence?: string): Promise<void> {
    this.state.transport = await this.client.transport("play", { sequence });
    this.notify();
  }

  async pause(): Promise<void> {
    this.state.transport = await this.client.transport("pause");
    this.notify();
  }

  /** Seek issues exactly one transport call. */
  async seek(t: number): Promise<void> {
    this.state.transport = await this.client.transport("seek", { t });
    this.notify();
  }

  async stopPlayback(): Promise<void> {
    this.state.transport = await this.client.transport("stop");
    this.notify();
  }

  panelLayoutFromState(dirs: [number, number, number][]): PanelLayout[] {
    return dirs.map((dir, id) => ({ id, dir }));
  }

  private toast(message: string): void {
    this.state.toasts.push({ message, at: Date.now() });
    if (this.state.toasts.length > 8) this.state.toasts.shift();
  }

  private notify(): void {
    this.onChange?.();
  }
}
