import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ServiceClient } from "../src/api.js";
import { OverrideStore, weightsToDmx } from "../src/overrides.js";
import type { Weights6 } from "../src/types.js";
import { FakeService } from "./fakes.js";
import { maxPerWindow } from "./util.js";

const RED: Weights6 = [1, 0, 0, 0, 0, 0];

describe("OverrideStore", () => {
  let service: FakeService;
  let store: OverrideStore;

  beforeEach(() => {
    vi.useFakeTimers();
    service = new FakeService(8);
    store = new OverrideStore(new ServiceClient("http://test", service.fetch));
    store.applyFrame(service.frame());
  });

  afterEach(() => vi.useRealTimers());

  it("override then clear returns the displayed dmx to the pre-edit snapshot exactly", async () => {
    const before = store.displayedDmx(3)!;
    expect(before).toEqual([51, 51, 51, 51, 51, 51]);

    store.setOverride(3, "direct", RED, weightsToDmx(RED));
    expect(store.displayedDmx(3)).toEqual([255, 0, 0, 0, 0, 0]);
    await store.settle(3);
    await vi.runAllTimersAsync();
    store.reconcile(service.frame()); // server confirms the override

    await store.clearOverride(3);
    store.reconcile(service.frame()); // server confirms the revert
    expect(store.displayedDmx(3)).toEqual(before);
    expect(service.overrides.size).toBe(0);
  });

  it("optimistically reflects the target before the server confirms", () => {
    store.setOverride(5, "direct", RED, weightsToDmx(RED));
    expect(store.displayedDmx(5)).toEqual([255, 0, 0, 0, 0, 0]);
    // the service has not confirmed anything yet
    expect(service.overrides.has(5)).toBe(false);
  });

  it("drops the optimistic layer once the stream reflects the target", async () => {
    store.setOverride(2, "direct", RED, weightsToDmx(RED));
    await store.settle(2);
    await vi.runAllTimersAsync();
    expect(service.overrides.has(2)).toBe(true);
    store.reconcile(service.frame());
    // now served state, not the optimistic layer, provides the value
    expect(store.callsIssued(2)).toBe(0); // edit record gone
    expect(store.displayedDmx(2)).toEqual([255, 0, 0, 0, 0, 0]);
  });

  it("reverts to server state and reports when the service rejects", async () => {
    service.rejectOverrides = true;
    const rejected: number[] = [];
    store.onRejected = (panelId) => rejected.push(panelId);

    const before = store.displayedDmx(4)!;
    store.setOverride(4, "direct", RED, weightsToDmx(RED));
    expect(store.displayedDmx(4)).toEqual([255, 0, 0, 0, 0, 0]);
    await store.settle(4);
    await vi.runAllTimersAsync();

    expect(rejected).toEqual([4]);
    expect(store.displayedDmx(4)).toEqual(before);
  });

  it("a rapid scrub issues at most 30 requests per second", async () => {
    const putAt: number[] = [];
    service.onPut = () => putAt.push(Date.now());
    // 600 slider positions over two seconds of fake time
    for (let i = 0; i < 600; i++) {
      const w = i / 599;
      store.setOverride(6, "direct", [w, 0, 0, 0, 0, 0], weightsToDmx([w, 0, 0, 0, 0, 0]));
      await vi.advanceTimersByTimeAsync(2000 / 600);
    }
    await vi.runAllTimersAsync();
    expect(maxPerWindow(putAt, 1000)).toBeLessThanOrEqual(30);
    expect(service.putCalls).toBeGreaterThan(10);
    // the last value always lands
    expect(service.overrides.get(6)![0]).toBe(1);
  });

  it("rgb overrides route through the server solve", async () => {
    store.setOverride(1, "rgb", [0.5, 0.4, 0.3], weightsToDmx([0.5, 0.4, 0.3, 0, 0, 0]));
    await store.settle(1);
    await vi.runAllTimersAsync();
    expect(service.overrides.get(1)).toEqual([0.5, 0.4, 0.3, 0, 0, 0]);
  });
});

describe("weightsToDmx", () => {
  it("matches the service quantization (round half up)", () => {
    expect(weightsToDmx([0, 0.5, 1, 0, 0, 0])).toEqual([0, 128, 255, 0, 0, 0]);
  });

  it("clamps out-of-range values", () => {
    expect(weightsToDmx([-0.1, 1.2, 0, 0, 0, 0] as Weights6)[0]).toBe(0);
    expect(weightsToDmx([-0.1, 1.2, 0, 0, 0, 0] as Weights6)[1]).toBe(255);
  });
});
