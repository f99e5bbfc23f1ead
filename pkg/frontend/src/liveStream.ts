/**
 * Live frame stream consumer: latest-wins coalescing, reconnect with
 * exponential backoff, and stale detection so the console never presents
 * dead state as live.
 *
 * The console only ever renders frames received here; dmx values are never
 * extrapolated client-side.
 */

import type { LiveFrame } from "./types.js";

/** Minimal WebSocket surface so tests can inject a fake. */
export interface SocketLike {
  onmessage: ((event: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
  onopen: (() => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface StreamClock {
  now(): number;
  setInterval(fn: () => void, ms: number): ReturnType<typeof setInterval>;
  clearInterval(handle: ReturnType<typeof setInterval>): void;
  setTimeout(fn: () => void, ms: number): ReturnType<typeof setTimeout>;
  clearTimeout(handle: ReturnType<typeof setTimeout>): void;
}

const systemStreamClock: StreamClock = {
  now: () => Date.now(),
  setInterval: (fn, ms) => setInterval(fn, ms),
  clearInterval: (h) => clearInterval(h),
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (h) => clearTimeout(h),
};

export interface LiveStreamOptions {
  /** Frames older than this with no successor mark the view stale. */
  staleAfterMs?: number;
  /** First reconnect delay; doubles per failure up to maxBackoffMs. */
  backoffMs?: number;
  maxBackoffMs?: number;
  clock?: StreamClock;
}

export class LiveStreamClient {
  private socket: SocketLike | null = null;
  private latest: LiveFrame | null = null;
  private lastMessageAt = -Infinity;
  private backoff: number;
  private readonly initialBackoff: number;
  private readonly maxBackoff: number;
  private readonly staleAfterMs: number;
  private readonly clock: StreamClock;
  private staleTimer: ReturnType<typeof setInterval> | null = null;
  private reconnectTimer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;
  private staleFlag = true; // nothing received yet
  private connectedFlag = false;

  /** Called at most once per received frame (latest already applied). */
  onFrame: ((frame: LiveFrame) => void) | null = null;
  /** Called whenever the stale flag flips. */
  onStaleChange: ((stale: boolean) => void) | null = null;

  constructor(
    private readonly url: string,
    private readonly socketFactory: SocketFactory,
    options: LiveStreamOptions = {},
  ) {
    this.staleAfterMs = options.staleAfterMs ?? 2000;
    this.initialBackoff = options.backoffMs ?? 250;
    this.maxBackoff = options.maxBackoffMs ?? 5000;
    this.backoff = this.initialBackoff;
    this.clock = options.clock ?? systemStreamClock;
  }

  get stale(): boolean {
    return this.staleFlag;
  }

  get connected(): boolean {
    return this.connectedFlag;
  }

  /** Latest frame the service sent; null before the first one. */
  get latestFrame(): LiveFrame | null {
    return this.latest;
  }

  start(): void {
    this.stopped = false;
    this.connect();
    if (this.staleTimer === null) {
      // staleness also trips on silent hangs where no close event arrives
      this.staleTimer = this.clock.setInterval(() => this.checkStale(), Math.max(50, this.staleAfterMs / 4));
    }
  }

  stop(): void {
    this.stopped = true;
    if (this.staleTimer !== null) {
      this.clock.clearInterval(this.staleTimer);
      this.staleTimer = null;
    }
    if (this.reconnectTimer !== null) {
      this.clock.clearTimeout(this.reconnectTimer);
      this.reconnectTimer = null;
    }
    this.socket?.close();
    this.socket = null;
  }

  private connect(): void {
    if (this.stopped) return;
    const socket = this.socketFactory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.connectedFlag = true;
      this.backoff = this.initialBackoff;
    };
    socket.onmessage = (event) => {
      let frame: LiveFrame;
      try {
        frame = JSON.parse(event.data) as LiveFrame;
      } catch {
        return; // not a frame; ignore
      }
      // latest-wins: an older version never replaces a newer one
      if (this.latest !== null && frame.version < this.latest.version) return;
      this.latest = frame;
      this.lastMessageAt = this.clock.now();
      this.setStale(false);
      this.onFrame?.(frame);
    };
    const dropped = () => {
      if (this.socket !== socket) return;
      this.connectedFlag = false;
      this.setStale(true);
      this.scheduleReconnect();
    };
    socket.onclose = dropped;
    socket.onerror = dropped;
  }

  private scheduleReconnect(): void {
    if (this.stopped || this.reconnectTimer !== null) return;
    const delay = this.backoff;
    this.backoff = Math.min(this.backoff * 2, this.maxBackoff);
    this.reconnectTimer = this.clock.setTimeout(() => {
      this.reconnectTimer = null;
      this.connect();
    }, delay);
  }

  private checkStale(): void {
    if (this.clock.now() - this.lastMessageAt >= this.staleAfterMs) {
      this.setStale(true);
    }
  }

  private setStale(stale: boolean): void {
    if (stale !== this.staleFlag) {
      this.staleFlag = stale;
      this.onStaleChange?.(stale);
    }
  }
}
