// Thin typed client over the JSON endpoints. The fetch function is
// injectable so scripted sessions can run against a fake server.

import type {
  GroupEntry,
  PollResponse,
  ScopeSpec,
  UserEntry,
  WireMessage,
} from "./protocol.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    public detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

async function decode(response: Response): Promise<any> {
  const body = await response.json().catch(() => ({}));
  if (!response.ok) {
    throw new ApiError(
      response.status,
      body.error ?? `HTTP${response.status}`,
      body.detail ?? "",
    );
  }
  return body;
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private post(path: string, payload: unknown): Promise<any> {
    return this.fetchFn(this.base + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    }).then(decode);
  }

  private get(path: string, params: Record<string, string>): Promise<any> {
    const query = new URLSearchParams(params).toString();
    return this.fetchFn(`${this.base}${path}?${query}`).then(decode);
  }

  join(displayName?: string): Promise<{ token: string; handle: string }> {
    return this.post("/api/join", displayName ? { display_name: displayName } : {});
  }

  send(
    token: string,
    scope: ScopeSpec,
    text: string,
  ): Promise<{ seq: number; ts: number }> {
    return this.post("/api/send", { token, scope, text });
  }

  poll(
    token: string,
    cursor: number,
    waitMs: number,
    utcOffsetMin = 0,
  ): Promise<PollResponse> {
    return this.get("/api/poll", {
      token,
      cursor: String(cursor),
      wait_ms: String(waitMs),
      utc_offset_min: String(utcOffsetMin),
    });
  }

  users(token: string): Promise<{ users: UserEntry[] }> {
    return this.get("/api/users", { token });
  }

  createGroup(token: string, name: string): Promise<{ group_id: string }> {
    return this.post("/api/groups", { token, name });
  }

  joinGroup(
    token: string,
    groupId: string,
  ): Promise<{ group_id: string; members: string[] }> {
    return this.post("/api/groups/join", { token, group_id: groupId });
  }

  listGroups(token: string): Promise<{ groups: GroupEntry[] }> {
    return this.get("/api/groups", { token });
  }

  history(
    token: string,
    scope: ScopeSpec,
    limit = 50,
    utcOffsetMin = 0,
  ): Promise<{ messages: WireMessage[] }> {
    return this.get("/api/history", {
      token,
      scope: JSON.stringify(scope),
      limit: String(limit),
      utc_offset_min: String(utcOffsetMin),
    });
  }

  deleteConversation(token: string, scope: ScopeSpec): Promise<{ upto_seq: number }> {
    return this.post("/api/conversations/delete", { token, scope });
  }

  profile(token: string, displayName?: string, status?: string): Promise<{}> {
    const payload: Record<string, unknown> = { token };
    if (displayName !== undefined) payload.display_name = displayName;
    if (status !== undefined) payload.status = status;
    return this.post("/api/profile", payload);
  }
}
