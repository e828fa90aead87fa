// DOM wiring: join on load, render tabs/messages/people, compose with the
// live character budget, smiley palette, groups, delete-conversation.

import { ApiClient, ApiError } from "./api.js";
import { sendDraft } from "./compose.js";
import { PollLoop } from "./poller.js";
import { SHORTCODES } from "./protocol.js";
import { ClientState } from "./state.js";

const api = new ApiClient();
const state = new ClientState();
const utcOffsetMin = -new Date().getTimezoneOffset();

const el = {
  identity: document.getElementById("identity") as HTMLSpanElement,
  nameInput: document.getElementById("name-input") as HTMLInputElement,
  nameSet: document.getElementById("name-set") as HTMLButtonElement,
  users: document.getElementById("users") as HTMLUListElement,
  groups: document.getElementById("groups") as HTMLUListElement,
  groupName: document.getElementById("group-name") as HTMLInputElement,
  groupCreate: document.getElementById("group-create") as HTMLButtonElement,
  tabs: document.getElementById("tabs") as HTMLElement,
  messages: document.getElementById("messages") as HTMLUListElement,
  notice: document.getElementById("notice") as HTMLDivElement,
  palette: document.getElementById("palette") as HTMLDivElement,
  draft: document.getElementById("draft") as HTMLTextAreaElement,
  counter: document.getElementById("counter") as HTMLSpanElement,
  send: document.getElementById("send") as HTMLButtonElement,
  del: document.getElementById("delete") as HTMLButtonElement,
};

function nameOf(handle: string): string {
  const entry = state.users.find((u) => u.handle === handle);
  return entry?.display_name || handle;
}

function render(): void {
  el.identity.textContent = state.handle ? `you are ${state.handle}` : "joining…";

  // tabs
  el.tabs.replaceChildren();
  for (const tab of state.tabs.values()) {
    const btn = document.createElement("button");
    btn.className = tab.key === state.activeKey ? "tab active" : "tab";
    btn.textContent = tab.label;
    if (tab.unread > 0) {
      const badge = document.createElement("span");
      badge.className = "badge";
      badge.textContent = String(tab.unread);
      btn.append(badge);
    }
    btn.onclick = () => {
      state.activate(tab.key);
      render();
    };
    el.tabs.append(btn);
  }

  // messages of the active tab
  const active = state.activeTab();
  el.messages.replaceChildren();
  for (const msg of active.messages) {
    const li = document.createElement("li");
    const meta = document.createElement("span");
    meta.className = "meta";
    meta.textContent = `${msg.time} ${nameOf(msg.from)}`;
    const body = document.createElement("span");
    body.className = msg.from === state.handle ? "body mine" : "body";
    body.textContent = msg.expanded;
    li.append(meta, body);
    el.messages.append(li);
  }
  el.messages.scrollTop = el.messages.scrollHeight;
  el.notice.textContent = active.notice;

  // presence
  el.users.replaceChildren();
  for (const user of state.users) {
    if (user.handle === state.handle) continue;
    const li = document.createElement("li");
    const dot = document.createElement("span");
    dot.className = user.active ? "dot on" : "dot";
    li.append(dot, ` ${user.display_name ?? user.handle}`);
    li.title = user.handle;
    li.onclick = () => {
      state.openPrivateTab(user.handle, user.display_name ?? user.handle);
      state.activate(`private:${[state.handle, user.handle].sort().join("|")}`);
      render();
    };
    el.users.append(li);
  }

  updateComposer();
}

function updateComposer(): void {
  state.draft = el.draft.value;
  el.counter.textContent = String(state.counter());
  el.counter.className = state.counter() < 0 ? "counter over" : "counter";
  el.send.disabled = !state.canSend();
}

async function refreshGroups(): Promise<void> {
  try {
    const { groups } = await api.listGroups(state.token);
    el.groups.replaceChildren();
    for (const g of groups) {
      const li = document.createElement("li");
      li.textContent = `${g.name} (${g.members.length}) `;
      const join = document.createElement("button");
      const member = g.members.includes(state.handle);
      join.textContent = member ? "open" : "join";
      join.onclick = async () => {
        if (!member) await api.joinGroup(state.token, g.group_id);
        const tab = state.ensureTab({ kind: "group", id: g.group_id }, g.name);
        state.activate(tab.key);
        await refreshGroups();
        render();
      };
      li.append(join);
      el.groups.append(li);
    }
  } catch {
    // sidebar refresh is best-effort; the poll loop owns connectivity
  }
}

async function submitDraft(): Promise<void> {
  state.draft = el.draft.value;
  const outcome = await sendDraft(api, state);
  if (outcome === "sent") {
    el.draft.value = "";
    updateComposer();
  } else if (outcome === "rejected") {
    render();
  }
}

function wireEvents(): void {
  el.draft.addEventListener("input", updateComposer);
  el.draft.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter" && !ev.shiftKey) {
      ev.preventDefault();
      void submitDraft();
    }
  });
  el.send.onclick = () => void submitDraft();

  for (const [code, emoji] of SHORTCODES) {
    const btn = document.createElement("button");
    btn.textContent = emoji;
    btn.title = code;
    btn.onclick = () => {
      const caret = el.draft.selectionStart ?? el.draft.value.length;
      el.draft.value =
        el.draft.value.slice(0, caret) + code + el.draft.value.slice(caret);
      el.draft.focus();
      el.draft.selectionStart = el.draft.selectionEnd = caret + code.length;
      updateComposer();
    };
    el.palette.append(btn);
  }

  el.del.onclick = async () => {
    const tab = state.activeTab();
    if (!confirm(`Hide all current messages in "${tab.label}" for you?`)) return;
    try {
      await api.deleteConversation(state.token, tab.scope);
      state.clearTab(tab.key);
      render();
    } catch (err) {
      tab.notice = err instanceof ApiError ? `${err.code}: ${err.detail}` : String(err);
      render();
    }
  };

  el.nameSet.onclick = async () => {
    const name = el.nameInput.value.trim();
    if (!name) return;
    try {
      await api.profile(state.token, name);
      el.nameInput.value = "";
    } catch (err) {
      state.activeTab().notice =
        err instanceof ApiError ? `${err.code}: ${err.detail}` : String(err);
      render();
    }
  };

  el.groupCreate.onclick = async () => {
    const name = el.groupName.value.trim();
    if (!name) return;
    try {
      const { group_id } = await api.createGroup(state.token, name);
      el.groupName.value = "";
      const tab = state.ensureTab({ kind: "group", id: group_id }, name);
      state.activate(tab.key);
      await refreshGroups();
      render();
    } catch (err) {
      state.activeTab().notice =
        err instanceof ApiError ? `${err.code}: ${err.detail}` : String(err);
      render();
    }
  };
}

async function start(): Promise<void> {
  wireEvents();
  const joined = await api.join();
  state.adoptSession(joined.token, joined.handle);
  render();
  void refreshGroups();
  const loop = new PollLoop(api, state, {
    utcOffsetMin,
    onUpdate: render,
    onRejoin: () => void refreshGroups(),
  });
  void loop.run();
  setInterval(() => void refreshGroups(), 30_000);
}

void start();
