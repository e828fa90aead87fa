// Reconnect pacing after network errors: 1s, 2s, 4s, ... capped at 10s.

export const BACKOFF_BASE_MS = 1000;
export const BACKOFF_CAP_MS = 10_000;

export function backoffDelayMs(attempt: number): number {
  return Math.min(BACKOFF_BASE_MS * 2 ** Math.max(0, attempt), BACKOFF_CAP_MS);
}
