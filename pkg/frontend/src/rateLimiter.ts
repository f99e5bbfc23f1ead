/**
 * Trailing-edge rate limiter for slider scrubbing: forwards at most
 * `maxPerSecond` values, always ending on the latest one. Intermediate
 * values are coalesced away, never queued.
 */

export interface Clock {
  now(): number;
  setTimeout(fn: () => void, ms: number): ReturnType<typeof setTimeout>;
  clearTimeout(handle: ReturnType<typeof setTimeout>): void;
}

export const systemClock: Clock = {
  now: () => Date.now(),
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (handle) => clearTimeout(handle),
};

export class RateLimiter<T> {
  private readonly intervalMs: number;
  private lastSentAt = -Infinity;
  private pending: { value: T } | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  sent = 0;

  constructor(
    private readonly send: (value: T) => void,
    maxPerSecond: number,
    private readonly clock: Clock = systemClock,
  ) {
    if (maxPerSecond <= 0) throw new Error("maxPerSecond must be > 0");
    this.intervalMs = 1000 / maxPerSecond;
  }

  /** Submit the newest value; it will be sent now or replace the pending one. */
  push(value: T): void {
    const now = this.clock.now();
    if (now - this.lastSentAt >= this.intervalMs && this.timer === null) {
      this.deliver(value, now);
      return;
    }
    this.pending = { value };
    if (this.timer === null) {
      const wait = Math.max(0, this.lastSentAt + this.intervalMs - now);
      this.timer = this.clock.setTimeout(() => this.flush(), wait);
    }
  }

  /** Drain the pending value; never violates the minimum spacing (a timer
   * that fires a fraction early just reschedules the remainder). */
  flush(): void {
    if (this.timer !== null) {
      this.clock.clearTimeout(this.timer);
      this.timer = null;
    }
    if (this.pending !== null) {
      const now = this.clock.now();
      const readyAt = this.lastSentAt + this.intervalMs;
      if (now >= readyAt) {
        const { value } = this.pending;
        this.pending = null;
        this.deliver(value, now);
      } else {
        // whole-ms reschedule so truncating clocks cannot spin-loop
        this.timer = this.clock.setTimeout(() => this.flush(), Math.max(1, Math.ceil(readyAt - now)));
      }
    }
  }

  dispose(): void {
    if (this.timer !== null) {
      this.clock.clearTimeout(this.timer);
      this.timer = null;
    }
    this.pending = null;
  }

  private deliver(value: T, now: number): void {
    this.lastSentAt = now;
    this.sent += 1;
    this.send(value);
  }
}
