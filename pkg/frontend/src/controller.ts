/**
 * Session lifecycle orchestration: submit a query, poll results on a fixed
 * cadence, fold payloads into the view, stop on demand or terminal state.
 *
 * The scheduler and API client are injected so the whole flow runs under
 * test with fake timers and recorded payloads. Re-submitting while a session
 * is live stops the old session; responses still in flight for it are
 * discarded via a generation counter.
 */

import { ApiError, type ApiClient } from "./api.js";
import {
  applyResults,
  emptyView,
  failedView,
  startingView,
  type SessionView,
} from "./state.js";

export interface Scheduler {
  set(fn: () => void, ms: number): unknown;
  clear(handle: unknown): void;
}

const realScheduler: Scheduler = {
  set: (fn, ms) => setTimeout(fn, ms),
  clear: (handle) => clearTimeout(handle as ReturnType<typeof setTimeout>),
};

export interface ControllerOptions {
  onChange: (view: SessionView) => void;
  /** Polling period in milliseconds; must stay at or above the publish cadence. */
  pollMs?: number;
  /** Page size requested from the results endpoint. */
  limit?: number;
  scheduler?: Scheduler;
  /** Sink for non-fatal anomalies such as malformed payloads. */
  diagnostic?: (message: string) => void;
}

const LIVE_STATES = new Set(["warming", "training"]);

export class SessionController {
  private view: SessionView = emptyView();
  private readonly pollMs: number;
  private readonly limit: number | undefined;
  private readonly scheduler: Scheduler;
  private readonly diagnostic: (message: string) => void;
  private readonly onChange: (view: SessionView) => void;
  private timer: unknown = null;
  private generation = 0;

  constructor(
    private readonly api: ApiClient,
    options: ControllerOptions,
  ) {
    this.onChange = options.onChange;
    this.pollMs = options.pollMs ?? 250;
    this.limit = options.limit;
    this.scheduler = options.scheduler ?? realScheduler;
    this.diagnostic = options.diagnostic ?? ((message) => console.warn(message));
  }

  current(): SessionView {
    return this.view;
  }

  private publish(view: SessionView): void {
    this.view = view;
    this.onChange(view);
  }

  private cancelTimer(): void {
    if (this.timer !== null) {
      this.scheduler.clear(this.timer);
      this.timer = null;
    }
  }

  /** Stop the previous session if live, create a new one, start polling. */
  async submit(query: string): Promise<void> {
    this.generation += 1;
    const generation = this.generation;
    this.cancelTimer();

    const previous = this.view;
    if (previous.sessionId !== null && LIVE_STATES.has(previous.state)) {
      this.api.stopSession(previous.sessionId).catch(() => {
        this.diagnostic(`could not stop session ${previous.sessionId}`);
      });
    }

    let created;
    try {
      created = await this.api.createSession(query, this.limit);
    } catch (error) {
      const reason = error instanceof ApiError ? error.message : "service unreachable";
      if (generation === this.generation) {
        this.publish(failedView(query, reason));
      }
      return;
    }
    if (generation !== this.generation) return;

    if (created.state === "failed") {
      let reason = "query could not be resolved";
      try {
        const metadata = await this.api.getSession(created.id);
        if (metadata.failure) reason = metadata.failure;
      } catch {
        this.diagnostic(`could not fetch failure reason for ${created.id}`);
      }
      if (generation === this.generation) {
        this.publish(failedView(query, reason));
      }
      return;
    }

    this.publish(startingView(created.id, query, created.state));
    await this.pollOnce(generation, created.id);
  }

  private async pollOnce(generation: number, sessionId: string): Promise<void> {
    let payload: unknown;
    try {
      payload = await this.api.getResults(sessionId, this.limit);
    } catch (error) {
      if (generation !== this.generation) return;
      const reason = error instanceof ApiError ? error.message : "poll failed";
      this.diagnostic(`results poll failed: ${reason}`);
      this.scheduleNext(generation, sessionId);
      return;
    }
    if (generation !== this.generation) return;

    const outcome = applyResults(this.view, payload);
    if (!outcome.accepted) {
      this.diagnostic("ignored stale or malformed results payload");
    } else {
      this.publish(outcome.view);
    }

    if (LIVE_STATES.has(this.view.state)) {
      this.scheduleNext(generation, sessionId);
    }
  }

  private scheduleNext(generation: number, sessionId: string): void {
    if (generation !== this.generation) return;
    this.timer = this.scheduler.set(() => {
      this.timer = null;
      void this.pollOnce(generation, sessionId);
    }, this.pollMs);
  }

  /** Stop polling and ask the service to halt the current session. */
  async stop(): Promise<void> {
    this.generation += 1;
    this.cancelTimer();
    const sessionId = this.view.sessionId;
    if (sessionId === null) return;
    try {
      const stats = await this.api.stopSession(sessionId);
      this.publish({
        ...this.view,
        state: stats.state,
        positivesFed: stats.positives_fed,
        modelVersion: Math.max(this.view.modelVersion, stats.model_version),
      });
    } catch {
      this.diagnostic(`could not stop session ${sessionId}`);
    }
  }

  dispose(): void {
    this.generation += 1;
    this.cancelTimer();
  }
}
