/**
 * Typed client for the control service. Every endpoint the console touches
 * lives here; no other module may hold endpoint string literals.
 */

import type {
  OverrideMode,
  PreviewKind,
  ReproduceResultInfo,
  ServiceState,
  TransportAction,
  TransportState,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`service rejected request (${status}): ${detail}`);
  }
}

export class ServiceClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string,
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? ((input, init) => fetch(input, init));
  }

  /** ws:// URL of the live frame stream. */
  liveStreamUrl(): string {
    const http = new URL("/api/live", this.baseUrl);
    http.protocol = http.protocol === "https:" ? "wss:" : "ws:";
    return http.toString();
  }

  previewUrl(kind: PreviewKind, params: Record<string, string | number> = {}): string {
    const url = new URL(`/api/preview/${kind}`, this.baseUrl);
    for (const [key, value] of Object.entries(params)) {
      url.searchParams.set(key, String(value));
    }
    return url.toString();
  }

  async state(): Promise<ServiceState> {
    return this.request("GET", "/api/state");
  }

  async uploadEnvmap(name: string, body: ArrayBuffer | Uint8Array): Promise<void> {
    const url = new URL("/api/envmap", this.baseUrl);
    url.searchParams.set("name", name);
    const response = await this.fetchImpl(url.toString(), {
      method: "POST",
      headers: { "content-type": "application/octet-stream" },
      body: body as BodyInit,
    });
    await this.ensureOk(response);
  }

  async reproduce(envmap: string, options: { dilation?: Record<string, number>; dropUncovered?: boolean } = {}): Promise<ReproduceResultInfo> {
    return this.request("POST", "/api/reproduce", {
      envmap,
      dilation: options.dilation,
      drop_uncovered: options.dropUncovered ?? false,
    });
  }

  async setOverride(panelId: number, mode: OverrideMode, values: number[]): Promise<void> {
    await this.request("PUT", `/api/panel/${panelId}/override`, { mode, values });
  }

  async clearOverride(panelId: number): Promise<void> {
    await this.request("DELETE", `/api/panel/${panelId}/override`);
  }

  async transport(action: TransportAction, options: { sequence?: string; t?: number } = {}): Promise<TransportState> {
    return this.request("POST", "/api/transport", {
      action,
      sequence: options.sequence,
      t: options.t,
    });
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(new URL(path, this.baseUrl).toString(), {
      method,
      headers: body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    await this.ensureOk(response);
    return (await response.json()) as T;
  }

  private async ensureOk(response: Response): Promise<void> {
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const doc = (await response.json()) as { detail?: string };
        if (doc.detail) detail = doc.detail;
      } catch {
        // non-JSON error body: keep the status text
      }
      throw new ServiceError(response.status, detail);
    }
  }
}
