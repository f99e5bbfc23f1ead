/**
 * Optimistic per-panel override editing with server reconciliation.
 *
 * Edits apply to the displayed state immediately and go out through a
 * rate limiter (at most 30 PUTs/s per panel). The next live-stream frame
 * is authoritative: once the server confirms, the optimistic layer drops
 * away. A rejected call reverts the panel and reports the error.
 */

import type { ServiceClient } from "./api.js";
import type { Clock } from "./rateLimiter.js";
import { RateLimiter, systemClock } from "./rateLimiter.js";
import type { Dmx6, LiveFrame, OverrideMode, Weights6 } from "./types.js";

export const MAX_OVERRIDE_CALLS_PER_SECOND = 30;

export function weightsToDmx(weights: Weights6): Dmx6 {
  return weights.map((w) => Math.floor(Math.min(Math.max(w, 0), 1) * 255 + 0.5)) as Dmx6;
}

interface PanelEdit {
  limiter: RateLimiter<{ mode: OverrideMode; values: number[] }>;
  /** Server frame dmx captured before the first optimistic edit. */
  preEditDmx: Dmx6;
  /** What the user is aiming at right now (display-only until confirmed). */
  optimisticDmx: Dmx6;
  inFlight: Promise<void>;
}

export class OverrideStore {
  private serverFrame: LiveFrame | null = null;
  private readonly edits = new Map<number, PanelEdit>();

  /** Rejection reporting hook (toast in the UI). */
  onRejected: ((panelId: number, error: Error) => void) | null = null;

  constructor(
    private readonly client: ServiceClient,
    private readonly clock: Clock = systemClock,
  ) {}

  /** Feed every live-stream frame through here; it reconciles the display. */
  applyFrame(frame: LiveFrame): void {
    this.serverFrame = frame;
  }

  /** The dmx values the console displays for one panel: the latest served
   * frame, with the user's optimistic target layered on top while a call
   * is pending. Never extrapolated. */
  displayedDmx(panelId: number): Dmx6 | null {
    const edit = this.edits.get(panelId);
    if (edit) return edit.optimisticDmx;
    return this.serverFrame?.dmx[panelId] ?? null;
  }

  /** Number of override PUTs actually issued (test instrumentation). */
  callsIssued(panelId: number): number {
    return this.edits.get(panelId)?.limiter.sent ?? 0;
  }

  /** Optimistically set a panel override; the PUT goes out rate-limited. */
  setOverride(panelId: number, mode: OverrideMode, values: number[], displayDmx: Dmx6): void {
    let edit = this.edits.get(panelId);
    if (!edit) {
      const preEdit = this.serverFrame?.dmx[panelId] ?? ([0, 0, 0, 0, 0, 0] as Dmx6);
      const limiter = new RateLimiter<{ mode: OverrideMode; values: number[] }>(
        (payload) => this.issue(panelId, payload),
        MAX_OVERRIDE_CALLS_PER_SECOND,
        this.clock,
      );
      edit = { limiter, preEditDmx: preEdit, optimisticDmx: displayDmx, inFlight: Promise.resolve() };
      this.edits.set(panelId, edit);
    }
    edit.optimisticDmx = displayDmx;
    edit.limiter.push({ mode, values });
  }

  /** Clear the override; the displayed dmx returns to the pre-edit
   * snapshot exactly, then the stream confirms. */
  async clearOverride(panelId: number): Promise<void> {
    const edit = this.edits.get(panelId);
    if (edit) {
      edit.limiter.dispose();
      this.edits.delete(panelId);
      if (this.serverFrame && this.serverFrame.dmx[panelId]) {
        // until the next frame arrives, show the pre-edit snapshot
        this.serverFrame.dmx[panelId] = edit.preEditDmx;
      }
    }
    await this.client.clearOverride(panelId);
  }

  /** Wait until the panel's pending call settles (tests and teardown). */
  async settle(panelId: number): Promise<void> {
    const edit = this.edits.get(panelId);
    if (edit) {
      edit.limiter.flush();
      await edit.inFlight;
    }
  }

  private issue(panelId: number, payload: { mode: OverrideMode; values: number[] }): void {
    const edit = this.edits.get(panelId);
    const call = this.client.setOverride(panelId, payload.mode, payload.values).catch((error: Error) => {
      // rejection: drop the optimistic layer and fall back to server state
      const current = this.edits.get(panelId);
      if (current) {
        if (this.serverFrame && this.serverFrame.dmx[panelId]) {
          this.serverFrame.dmx[panelId] = current.preEditDmx;
        }
        current.limiter.dispose();
        this.edits.delete(panelId);
      }
      this.onRejected?.(panelId, error);
    });
    if (edit) edit.inFlight = call;
  }

  /** Confirmed server state has caught up: drop optimistic layers whose
   * target the frame already reflects. */
  reconcile(frame: LiveFrame): void {
    this.applyFrame(frame);
    for (const [panelId, edit] of [...this.edits.entries()]) {
      const served = frame.dmx[panelId];
      if (served && served.every((v, c) => v === edit.optimisticDmx[c])) {
        edit.limiter.dispose();
        this.edits.delete(panelId);
      }
    }
  }
}
