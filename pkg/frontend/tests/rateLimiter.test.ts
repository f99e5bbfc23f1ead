import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { RateLimiter } from "../src/rateLimiter.js";
import { maxPerWindow } from "./util.js";

describe("RateLimiter", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("limits a fast scrub to 30 per second and ends on the latest value", () => {
    const sent: number[] = [];
    const sentAt: number[] = [];
    const limiter = new RateLimiter<number>((v) => {
      sent.push(v);
      sentAt.push(Date.now());
    }, 30);
    // 600 slider moves over two seconds
    for (let i = 0; i < 600; i++) {
      limiter.push(i);
      vi.advanceTimersByTime(2000 / 600);
    }
    vi.runAllTimers(); // drain the trailing value
    expect(maxPerWindow(sentAt, 1000)).toBeLessThanOrEqual(30);
    expect(sent.length).toBeGreaterThan(40); // still responsive, not starved
    expect(sent.at(-1)).toBe(599);
  });

  it("passes a single value through immediately", () => {
    const sent: number[] = [];
    const limiter = new RateLimiter<number>((v) => sent.push(v), 30);
    limiter.push(42);
    expect(sent).toEqual([42]);
  });

  it("coalesces intermediate values instead of queueing them", () => {
    const sent: number[] = [];
    const limiter = new RateLimiter<number>((v) => sent.push(v), 10);
    limiter.push(1);
    limiter.push(2);
    limiter.push(3);
    vi.advanceTimersByTime(100);
    expect(sent).toEqual([1, 3]);
  });

  it("spaces deliveries by at least the interval", () => {
    const at: number[] = [];
    const limiter = new RateLimiter<number>(() => at.push(Date.now()), 20);
    for (let i = 0; i < 100; i++) {
      limiter.push(i);
      vi.advanceTimersByTime(7);
    }
    vi.runOnlyPendingTimers();
    for (let i = 1; i < at.length; i++) {
      expect(at[i]! - at[i - 1]!).toBeGreaterThanOrEqual(50);
    }
  });

  it("flush drains the pending value exactly once, respecting spacing", () => {
    const sent: number[] = [];
    const limiter = new RateLimiter<number>((v) => sent.push(v), 5);
    limiter.push(1);
    limiter.push(2);
    limiter.flush();
    expect(sent).toEqual([1]); // still inside the 200 ms spacing window
    vi.advanceTimersByTime(200);
    expect(sent).toEqual([1, 2]);
    limiter.flush();
    vi.runAllTimers();
    expect(sent).toEqual([1, 2]);
  });
});
