import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { PollLoop } from "../src/poller.js";
import { ClientState } from "../src/state.js";
import { FakeServer, instantSleep } from "./helpers.js";

function makeClient(server: FakeServer) {
  const api = new ApiClient("http://fake", server.fetchLike);
  const state = new ClientState();
  return { api, state };
}

describe("poll loop", () => {
  it("delivers new messages into tabs and advances the cursor", async () => {
    const server = new FakeServer();
    const { api, state } = makeClient(server);
    const me = server.join();
    state.adoptSession(me.token, me.handle);

    const other = server.join();
    server.send(other.handle, { kind: "public" }, "hello");

    const loop = new PollLoop(api, state, { waitMs: 0, sleep: instantSleep });
    await loop.runOnce();
    expect(state.cursor).toBe(1);
    expect(state.tabs.get("public")!.messages.map((m) => m.raw)).toEqual(["hello"]);
  });

  it("backs off 1s, 2s, 4s on repeated network failure", async () => {
    const delays: number[] = [];
    let calls = 0;
    const failingFetch = async () => {
      calls++;
      throw new TypeError("network down");
    };
    const api = new ApiClient("http://fake", failingFetch);
    const state = new ClientState();
    state.adoptSession("t", "guest-me0000");
    const loop = new PollLoop(api, state, {
      waitMs: 0,
      sleep: async (ms) => {
        delays.push(ms);
      },
    });
    await loop.runOnce();
    await loop.runOnce();
    await loop.runOnce();
    expect(calls).toBe(3);
    expect(delays).toEqual([1000, 2000, 4000]);
  });

  it("resets the backoff after a success", async () => {
    const server = new FakeServer();
    const me = server.join();
    const delays: number[] = [];
    let fail = true;
    const flakyFetch: typeof server.fetchLike = async (input, init) => {
      if (fail) throw new TypeError("hiccup");
      return server.fetchLike(input, init);
    };
    const api = new ApiClient("http://fake", flakyFetch);
    const state = new ClientState();
    state.adoptSession(me.token, me.handle);
    const loop = new PollLoop(api, state, {
      waitMs: 0,
      sleep: async (ms) => {
        delays.push(ms);
      },
    });
    await loop.runOnce(); // fails -> 1s
    fail = false;
    await loop.runOnce(); // succeeds
    fail = true;
    await loop.runOnce(); // fails again -> back to 1s
    expect(delays).toEqual([1000, 1000]);
  });

  it("re-joins on 410 and keeps polling without duplicating history", async () => {
    const server = new FakeServer();
    const { api, state } = makeClient(server);
    const me = server.join();
    state.adoptSession(me.token, me.handle);

    const other = server.join();
    server.send(other.handle, { kind: "public" }, "before");
    const loop = new PollLoop(api, state, { waitMs: 0, sleep: instantSleep });
    await loop.runOnce();
    expect(state.tabs.get("public")!.messages).toHaveLength(1);

    server.expire(me.token);
    server.send(other.handle, { kind: "public" }, "while away");
    const oldToken = state.token;
    await loop.runOnce(); // hits 410, re-joins, resyncs
    expect(state.token).not.toBe(oldToken);
    expect(server.sessions.has(state.token)).toBe(true);
    expect(state.tabs.get("public")!.messages.map((m) => m.raw)).toEqual([
      "before",
      "while away",
    ]);
    expect(state.cursor).toBe(2);

    server.send(other.handle, { kind: "public" }, "after");
    await loop.runOnce();
    expect(state.tabs.get("public")!.messages.map((m) => m.raw)).toEqual([
      "before",
      "while away",
      "after",
    ]);
  });

  it("resyncs from the origin on 409 without rendering duplicates", async () => {
    const server = new FakeServer();
    const { api, state } = makeClient(server);
    const me = server.join();
    state.adoptSession(me.token, me.handle);
    server.send(me.handle, { kind: "public" }, "one");
    const loop = new PollLoop(api, state, { waitMs: 0, sleep: instantSleep });
    await loop.runOnce();

    state.cursor = 99; // desync
    await loop.runOnce(); // 409 -> cursor reset
    expect(state.cursor).toBe(0);
    await loop.runOnce(); // replay absorbed by dedupe
    expect(state.tabs.get("public")!.messages).toHaveLength(1);
  });
});
