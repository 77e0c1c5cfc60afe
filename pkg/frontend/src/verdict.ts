/* Live verdict driver: handle edits in, badge states out.
 *
 * No geometry happens on the client; every badge shown comes from a
 * POST /api/verdict response. Edits during a drag are debounced to 100 ms,
 * drag end flushes immediately so the final position always reaches the
 * server, and responses arriving out of order are dropped via a ticket
 * check so the badge always reflects the newest placement.
 */

import { ApiError, DegenerateLineError } from "./api.js";
import type { ReviewApi, Verdict, VerdictRequest } from "./api.js";
import type { CaseAnnotation } from "./annotation.js";
import { debounce } from "./debounce.js";
import type { Debounced } from "./debounce.js";

export const VERDICT_DEBOUNCE_MS = 100;

export type BadgeState =
  | { kind: "incomplete" }
  | { kind: "verdict"; verdict: Verdict; stale: boolean }
  | { kind: "degenerate" }
  | { kind: "offline"; message: string };

type VerdictApi = Pick<ReviewApi, "verdict">;

export class VerdictDriver {
  state: BadgeState = { kind: "incomplete" };

  private ticket = 0;
  private readonly queue: Debounced<[]>;
  private readonly outstanding = new Set<Promise<void>>();

  constructor(
    private readonly api: VerdictApi,
    private readonly annotation: () => CaseAnnotation | null,
    private readonly onChange: (s: BadgeState) => void = () => {},
    waitMs = VERDICT_DEBOUNCE_MS,
  ) {
    this.queue = debounce(() => {
      void this.dispatch();
    }, waitMs);
  }

  /** Call on every handle move while dragging. */
  edited(): void {
    this.queue();
  }

  /** The final drag position always fires, without waiting out the interval. */
  dragEnded(): void {
    this.queue.flush();
  }

  /** Skip the debounce entirely (case switch, laterality toggle). */
  refreshNow(): Promise<void> {
    this.queue.cancel();
    return this.dispatch();
  }

  /** Resolves once nothing is queued or in flight. */
  async settled(): Promise<void> {
    for (;;) {
      if (this.queue.pending()) this.queue.flush();
      if (this.outstanding.size === 0) return;
      await Promise.all([...this.outstanding]);
    }
  }

  private set(s: BadgeState): void {
    this.state = s;
    this.onChange(s);
  }

  private dispatch(): Promise<void> {
    const ann = this.annotation();
    if (ann === null || !ann.complete) {
      this.set({ kind: "incomplete" });
      return Promise.resolve();
    }
    const t = ++this.ticket;
    if (this.state.kind === "verdict" && !this.state.stale) {
      this.set({ ...this.state, stale: true });
    }
    const req: VerdictRequest = {
      landmarks: ann.landmarks(),
      shape: [ann.width, ann.height],
      laterality: ann.laterality,
    };
    const run = this.roundTrip(t, req);
    this.outstanding.add(run);
    void run.finally(() => this.outstanding.delete(run));
    return run;
  }

  private async roundTrip(t: number, req: VerdictRequest): Promise<void> {
    let next: BadgeState;
    try {
      const v: Verdict = await this.api.verdict(req);
      next = { kind: "verdict", verdict: v, stale: false };
    } catch (e) {
      if (e instanceof DegenerateLineError) {
        next = { kind: "degenerate" };
      } else {
        const message = e instanceof ApiError ? e.message : "cannot reach the server";
        next = { kind: "offline", message };
      }
    }
    if (t !== this.ticket) return; // a newer placement superseded this one
    this.set(next);
  }
}
