// Wire types and shared constants; mirrors the server's JSON contracts.

export const MAX_MESSAGE_CHARS = 255;

// Must match the server's fixed table.
export const SHORTCODES: ReadonlyArray<[code: string, emoji: string]> = [
  [":)", "\u{1F642}"],
  [":(", "\u{1F641}"],
  [":D", "\u{1F600}"],
  [";)", "\u{1F609}"],
  ["<3", "❤"],
  [":P", "\u{1F61B}"],
];

export type ScopeSpec =
  | { kind: "public" }
  | { kind: "group"; id: string }
  | { kind: "private"; to: string }
  | { kind: "private"; pair: [string, string] };

export interface WireScope {
  kind: "public" | "group" | "private";
  id?: string;
  pair?: [string, string];
}

export interface WireMessage {
  seq: number;
  ts: number;
  from: string;
  scope: WireScope;
  raw: string;
  expanded: string;
  time: string;
}

export interface UserEntry {
  handle: string;
  display_name: string | null;
  active: boolean;
}

export interface PollResponse {
  messages: WireMessage[];
  cursor: number;
  users: UserEntry[];
}

export interface GroupEntry {
  group_id: string;
  name: string;
  members: string[];
}

/** Unicode scalar values, not UTF-16 units: the server's counting rule. */
export function countScalars(text: string): number {
  let n = 0;
  for (const _ of text) n++;
  return n;
}

/** Stable tab key for a message's scope; one key per conversation. */
export function scopeKey(scope: WireScope): string {
  if (scope.kind === "public") return "public";
  if (scope.kind === "group") return `group:${scope.id}`;
  const pair = scope.pair ?? ["?", "?"];
  return `private:${pair[0]}|${pair[1]}`;
}

/** Canonical private tab key for (self, peer), matching the server's order. */
export function privateKey(self: string, peer: string): string {
  const [lo, hi] = self < peer ? [self, peer] : [peer, self];
  return `private:${lo}|${hi}`;
}
