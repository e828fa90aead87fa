// Client-side session state: tabs, routing, cursor, presence, draft budget.
// Pure logic, no DOM and no network, so scripted sessions can drive it.

import {
  MAX_MESSAGE_CHARS,
  countScalars,
  privateKey,
  scopeKey,
} from "./protocol.js";
import type {
  PollResponse,
  ScopeSpec,
  UserEntry,
  WireMessage,
  WireScope,
} from "./protocol.js";

export interface Tab {
  key: string;
  label: string;
  scope: ScopeSpec;
  messages: WireMessage[];
  unread: number;
  /** seqs already routed here; replays after a re-join must not duplicate */
  seen: Set<number>;
  notice: string;
}

export class ClientState {
  token = "";
  handle = "";
  cursor = 0;
  users: UserEntry[] = [];
  tabs = new Map<string, Tab>();
  activeKey = "public";
  draft = "";

  constructor() {
    this.ensureTab({ kind: "public" }, "Public");
  }

  // -- identity ------------------------------------------------------------

  adoptSession(token: string, handle: string): void {
    this.token = token;
    this.handle = handle;
  }

  // -- tabs ----------------------------------------------------------------

  ensureTab(scope: ScopeSpec, label?: string): Tab {
    const key = this.keyFor(scope);
    let tab = this.tabs.get(key);
    if (!tab) {
      tab = {
        key,
        label: label ?? this.defaultLabel(key),
        scope,
        messages: [],
        unread: 0,
        seen: new Set(),
        notice: "",
      };
      this.tabs.set(key, tab);
    }
    return tab;
  }

  openPrivateTab(peer: string, label?: string): Tab {
    const tab = this.ensureTab({ kind: "private", to: peer }, label ?? peer);
    return tab;
  }

  activate(key: string): void {
    const tab = this.tabs.get(key);
    if (tab) {
      this.activeKey = key;
      tab.unread = 0;
    }
  }

  activeTab(): Tab {
    return this.tabs.get(this.activeKey) ?? this.ensureTab({ kind: "public" });
  }

  clearTab(key: string): void {
    const tab = this.tabs.get(key);
    if (tab) {
      tab.messages = [];
      // seqs stay in `seen`: hidden history must not resurface on re-poll
    }
  }

  private keyFor(scope: ScopeSpec): string {
    if (scope.kind === "private") {
      if ("to" in scope) return privateKey(this.handle, scope.to);
      return `private:${[...scope.pair].sort().join("|")}`;
    }
    return scopeKey(scope as WireScope);
  }

  private defaultLabel(key: string): string {
    if (key === "public") return "Public";
    if (key.startsWith("group:")) return key.slice("group:".length);
    const pair = key.slice("private:".length).split("|");
    return pair.find((h) => h !== this.handle) ?? key;
  }

  // -- polling -------------------------------------------------------------

  /** Apply one poll response. Cursor never moves backwards; every message
   * lands in exactly one tab; duplicates (same seq) are dropped. */
  ingest(response: PollResponse): void {
    this.cursor = Math.max(this.cursor, response.cursor);
    this.users = response.users;
    for (const msg of response.messages) {
      this.routeMessage(msg);
    }
  }

  /** Returns the tab key the message landed in, or null if dropped. */
  routeMessage(msg: WireMessage): string | null {
    if (msg.scope.kind === "private") {
      const pair: string[] = msg.scope.pair ?? [];
      // traffic for pairs we are not part of must never render
      if (!pair.includes(this.handle)) return null;
    }
    const key = scopeKey(msg.scope);
    const tab =
      this.tabs.get(key) ??
      this.ensureTab(this.scopeSpecFor(msg.scope), this.labelFor(msg));
    if (tab.seen.has(msg.seq)) return null;
    tab.seen.add(msg.seq);
    tab.messages.push(msg);
    if (key !== this.activeKey) tab.unread += 1;
    return key;
  }

  private scopeSpecFor(scope: WireScope): ScopeSpec {
    if (scope.kind === "public") return { kind: "public" };
    if (scope.kind === "group") return { kind: "group", id: scope.id ?? "" };
    const pair = scope.pair ?? ["?", "?"];
    const peer = pair.find((h) => h !== this.handle) ?? pair[0];
    return { kind: "private", to: peer };
  }

  private labelFor(msg: WireMessage): string {
    if (msg.scope.kind === "private") {
      const pair: string[] = msg.scope.pair ?? [];
      return pair.find((h) => h !== this.handle) ?? "private";
    }
    return this.defaultLabel(scopeKey(msg.scope));
  }

  // -- compose -------------------------------------------------------------

  draftLength(): number {
    return countScalars(this.draft);
  }

  /** Characters remaining out of the budget; negative when over. */
  counter(): number {
    return MAX_MESSAGE_CHARS - this.draftLength();
  }

  canSend(): boolean {
    const n = this.draftLength();
    return n > 0 && n <= MAX_MESSAGE_CHARS;
  }

  insertShortcode(code: string, caret?: number): number {
    const at = caret ?? this.draft.length;
    this.draft = this.draft.slice(0, at) + code + this.draft.slice(at);
    return at + code.length;
  }
}
