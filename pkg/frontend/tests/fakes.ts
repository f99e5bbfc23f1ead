/**
 * Contract doubles for tests: an in-memory service implementing the same
 * HTTP JSON surface, and a controllable socket for the live stream.
 */

import type { FetchLike } from "../src/api.js";
import type { SocketLike } from "../src/liveStream.js";
import type { Dmx6, LiveFrame, ServiceState, TransportState } from "../src/types.js";

export class FakeSocket implements SocketLike {
  onmessage: ((event: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;
  onopen: (() => void) | null = null;
  closed = false;

  open(): void {
    this.onopen?.();
  }

  emit(frame: LiveFrame): void {
    this.onmessage?.({ data: JSON.stringify(frame) });
  }

  emitRaw(data: string): void {
    this.onmessage?.({ data });
  }

  dropFromServer(): void {
    this.onclose?.();
  }

  close(): void {
    this.closed = true;
  }
}

function weightsToDmxRow(weights: number[]): Dmx6 {
  return weights.map((w) => Math.floor(Math.min(Math.max(w, 0), 1) * 255 + 0.5)) as Dmx6;
}

/** Minimal service double honoring the console's API contract. */
export class FakeService {
  readonly base: Dmx6[];
  readonly overrides = new Map<number, number[]>();
  version = 0;
  putCalls = 0;
  deleteCalls = 0;
  onPut: (() => void) | null = null;
  transportCalls: { action: string; sequence?: string; t?: number }[] = [];
  rejectOverrides = false;
  sockets: FakeSocket[] = [];
  transportState: TransportState = {
    playing: false,
    sequence: null,
    t: 0,
    fps: null,
    frames_emitted: 0,
    lateness_ms_median: null,
  };

  constructor(readonly nPanels: number, baseLevel = 51) {
    this.base = Array.from({ length: nPanels }, () => [
      baseLevel, baseLevel, baseLevel, baseLevel, baseLevel, baseLevel,
    ] as Dmx6);
  }

  currentDmx(): Dmx6[] {
    return this.base.map((row, id) => {
      const ov = this.overrides.get(id);
      return ov ? weightsToDmxRow(ov) : ([...row] as Dmx6);
    });
  }

  frame(frameNo = -1): LiveFrame {
    return {
      version: this.version,
      frame_no: frameNo,
      dmx: this.currentDmx(),
      lateness: 0,
      playing: this.transportState.playing,
      t: this.transportState.t,
    };
  }

  /** Push the current state to every connected fake socket. */
  broadcast(): void {
    const frame = this.frame();
    for (const socket of this.sockets) socket.emit(frame);
  }

  newSocket(): FakeSocket {
    const socket = new FakeSocket();
    this.sockets.push(socket);
    return socket;
  }

  state(): ServiceState {
    return {
      name: "fake",
      n_panels: this.nPanels,
      universes: [0],
      panel_dirs: Array.from({ length: this.nPanels }, (_, i) => {
        const phi = (2 * Math.PI * i) / this.nPanels;
        return [Math.sin(phi), 0, Math.cos(phi)] as [number, number, number];
      }),
      envmaps: [],
      sequences: ["fade"],
      base_lightmap: { source: null, deficit: [0, 0, 0], exposure_scalar: 0 },
      overrides: Object.fromEntries([...this.overrides].map(([k, v]) => [String(k), v])),
      transport: this.transportState,
      version: this.version,
    };
  }

  readonly fetch: FetchLike = async (input, init) => {
    await Promise.resolve(); // a real service never confirms synchronously
    const url = new URL(input);
    const method = init?.method ?? "GET";
    const body = init?.body ? (JSON.parse(init.body as string) as Record<string, unknown>) : {};

    const overrideMatch = url.pathname.match(/^\/api\/panel\/(\d+)\/override$/);
    if (overrideMatch && method === "PUT") {
      this.putCalls += 1;
      this.onPut?.();
      if (this.rejectOverrides) {
        return json(422, { error: "RangeError", detail: "rejected by test" });
      }
      const panelId = Number(overrideMatch[1]);
      if (panelId >= this.nPanels) return json(404, { error: "NotFoundError", detail: "no panel" });
      const values = body.values as number[];
      this.overrides.set(panelId, body.mode === "rgb" ? [...values, 0, 0, 0] : values);
      this.version += 1;
      return json(200, { ok: true, panel: panelId });
    }
    if (overrideMatch && method === "DELETE") {
      this.deleteCalls += 1;
      const panelId = Number(overrideMatch[1]);
      if (panelId >= this.nPanels) return json(404, { error: "NotFoundError", detail: "no panel" });
      this.overrides.delete(panelId);
      this.version += 1;
      return json(200, { ok: true, panel: panelId });
    }
    if (url.pathname === "/api/state" && method === "GET") {
      return json(200, this.state());
    }
    if (url.pathname === "/api/transport" && method === "POST") {
      const action = body.action as string;
      this.transportCalls.push({ action, sequence: body.sequence as string | undefined, t: body.t as number | undefined });
      if (action === "play") this.transportState = { ...this.transportState, playing: true, sequence: (body.sequence as string) ?? this.transportState.sequence };
      if (action === "pause" || action === "stop") this.transportState = { ...this.transportState, playing: false };
      if (action === "seek") this.transportState = { ...this.transportState, t: (body.t as number) ?? 0 };
      this.version += 1;
      return json(200, this.transportState);
    }
    return json(404, { error: "NotFoundError", detail: `no route ${method} ${url.pathname}` });
  };
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}
