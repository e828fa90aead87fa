// An in-memory double of the chat protocol, good enough for scripted
// client sessions: join, send, poll (no parking), delete-conversation.

import type { FetchLike } from "../src/api.js";
import {
  MAX_MESSAGE_CHARS,
  SHORTCODES,
  countScalars,
} from "../src/protocol.js";
import type { WireMessage, WireScope } from "../src/protocol.js";

interface Stored {
  seq: number;
  ts: number;
  from: string;
  scope: WireScope;
  raw: string;
  expanded: string;
}

function expand(raw: string): string {
  let out = raw;
  for (const [code, emoji] of SHORTCODES) {
    out = out.split(code).join(emoji);
  }
  return out;
}

export class FakeServer {
  seq = 0;
  messages: Stored[] = [];
  sessions = new Map<string, string>(); // token -> handle
  expired = new Set<string>();
  tombstones = new Map<string, number>(); // `${handle}/${scopeKey}` -> upto
  requests: { method: string; path: string; params: URLSearchParams; body: any }[] =
    [];
  private nextId = 0;

  join(): { token: string; handle: string } {
    const handle = `guest-${this.nextId.toString(16).padStart(6, "0")}`;
    const token = `token-${this.nextId++}`;
    this.sessions.set(token, handle);
    return { token, handle };
  }

  expire(token: string): void {
    this.sessions.delete(token);
    this.expired.add(token);
  }

  send(from: string, scope: WireScope, raw: string): Stored {
    const msg: Stored = {
      seq: ++this.seq,
      ts: 1_620_000_000_000 + this.seq,
      from,
      scope,
      raw,
      expanded: expand(raw),
    };
    this.messages.push(msg);
    return msg;
  }

  sendPrivate(from: string, to: string, raw: string): Stored {
    const pair = [from, to].sort() as [string, string];
    return this.send(from, { kind: "private", pair }, raw);
  }

  private visible(msg: Stored, handle: string): boolean {
    if (msg.scope.kind === "private" && !(msg.scope.pair ?? []).includes(handle)) {
      return false;
    }
    const key =
      msg.scope.kind === "public"
        ? "public"
        : msg.scope.kind === "group"
          ? `group:${msg.scope.id}`
          : `private:${(msg.scope.pair ?? []).join("|")}`;
    const upto = this.tombstones.get(`${handle}/${key}`) ?? 0;
    return msg.seq > upto;
  }

  private wire(msg: Stored): WireMessage {
    return { ...msg, scope: { ...msg.scope }, time: "12:00 am" };
  }

  /** Drop-in for fetch, recording every request for assertions. */
  fetchLike: FetchLike = async (input, init) => {
    const url = new URL(input, "http://fake");
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : {};
    this.requests.push({
      method,
      path: url.pathname,
      params: url.searchParams,
      body,
    });

    const reply = (status: number, payload: unknown) =>
      new Response(JSON.stringify(payload), {
        status,
        headers: { "content-type": "application/json" },
      });

    const auth = (token: string | null) => {
      if (token && this.expired.has(token)) {
        return { error: reply(410, { error: "SessionExpired", detail: "" }) };
      }
      const handle = token ? this.sessions.get(token) : undefined;
      if (!handle) {
        return { error: reply(401, { error: "BadToken", detail: "" }) };
      }
      return { handle };
    };

    if (url.pathname === "/api/join") {
      return reply(200, this.join());
    }

    if (url.pathname === "/api/send") {
      const who = auth(body.token);
      if ("error" in who) return who.error;
      const n = countScalars(body.text ?? "");
      if (n === 0) return reply(400, { error: "EmptyMessage", detail: "" });
      if (n > MAX_MESSAGE_CHARS) {
        return reply(400, { error: "MessageTooLong", detail: "" });
      }
      let scope: WireScope = body.scope;
      if (scope.kind === "private" && "to" in body.scope) {
        scope = {
          kind: "private",
          pair: [who.handle, body.scope.to].sort() as [string, string],
        };
      }
      const msg = this.send(who.handle, scope, body.text);
      return reply(200, { seq: msg.seq, ts: msg.ts });
    }

    if (url.pathname === "/api/poll") {
      const who = auth(url.searchParams.get("token"));
      if ("error" in who) return who.error;
      const cursor = Number(url.searchParams.get("cursor") ?? "0");
      if (cursor > this.seq) {
        return reply(409, { error: "CursorAhead", detail: "" });
      }
      const visible = this.messages
        .filter((m) => m.seq > cursor && this.visible(m, who.handle))
        .map((m) => this.wire(m));
      const users = [...this.sessions.values()].map((handle) => ({
        handle,
        display_name: null,
        active: true,
      }));
      return reply(200, { messages: visible, cursor: this.seq, users });
    }

    if (url.pathname === "/api/conversations/delete") {
      const who = auth(body.token);
      if ("error" in who) return who.error;
      let key: string;
      const scope = body.scope;
      if (scope.kind === "public") key = "public";
      else if (scope.kind === "group") key = `group:${scope.id}`;
      else {
        const pair =
          "pair" in scope ? scope.pair : [who.handle, scope.to].sort();
        key = `private:${pair.join("|")}`;
      }
      this.tombstones.set(`${who.handle}/${key}`, this.seq);
      return reply(200, { upto_seq: this.seq });
    }

    if (url.pathname === "/api/groups" && method === "GET") {
      const who = auth(url.searchParams.get("token"));
      if ("error" in who) return who.error;
      return reply(200, { groups: [] });
    }

    return reply(404, { error: "NotFound", detail: url.pathname });
  };
}

export const instantSleep = () => Promise.resolve();
