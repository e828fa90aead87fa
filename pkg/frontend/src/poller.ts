// The long-poll loop: re-issues immediately after each response, backs off
// exponentially on network failure, and re-joins on session loss.

import { ApiClient, ApiError } from "./api.js";
import { backoffDelayMs } from "./backoff.js";
import type { ClientState } from "./state.js";

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export interface PollerOptions {
  waitMs?: number;
  utcOffsetMin?: number;
  sleep?: (ms: number) => Promise<void>;
  onUpdate?: () => void;
  onRejoin?: () => void;
}

export class PollLoop {
  private failures = 0;
  private running = false;
  private waitMs: number;
  private utcOffsetMin: number;
  private sleep: (ms: number) => Promise<void>;

  constructor(
    private api: ApiClient,
    private state: ClientState,
    private opts: PollerOptions = {},
  ) {
    this.waitMs = opts.waitMs ?? 25_000;
    this.utcOffsetMin = opts.utcOffsetMin ?? 0;
    this.sleep = opts.sleep ?? defaultSleep;
  }

  stop(): void {
    this.running = false;
  }

  async run(): Promise<void> {
    this.running = true;
    while (this.running) {
      await this.runOnce();
    }
  }

  /** One poll iteration; exposed for scripted sessions. */
  async runOnce(): Promise<void> {
    try {
      const res = await this.api.poll(
        this.state.token,
        this.state.cursor,
        this.waitMs,
        this.utcOffsetMin,
      );
      this.state.ingest(res);
      this.failures = 0;
      this.opts.onUpdate?.();
    } catch (err) {
      await this.recover(err);
    }
  }

  private async recover(err: unknown): Promise<void> {
    if (err instanceof ApiError) {
      if (err.status === 410 || err.status === 401) {
        // expired (or a restarted server): adopt a fresh identity, then pin
        // the cursor to the current max; per-tab dedupe absorbs the replay
        const joined = await this.api.join();
        this.state.adoptSession(joined.token, joined.handle);
        const res = await this.api.poll(this.state.token, 0, 0, this.utcOffsetMin);
        this.state.ingest(res);
        this.opts.onRejoin?.();
        this.opts.onUpdate?.();
        return;
      }
      if (err.status === 409) {
        // cursor ran ahead of the server; resync from the origin
        this.state.cursor = 0;
        return;
      }
      // other rejections: pause briefly rather than hot-loop
      await this.sleep(backoffDelayMs(0));
      return;
    }
    this.failures += 1;
    await this.sleep(backoffDelayMs(this.failures - 1));
  }
}
