// Draft submission with the character-budget guard. The guard runs before
// any network call: an over-budget or empty draft can never be dispatched.

import { ApiClient, ApiError } from "./api.js";
import type { ClientState, Tab } from "./state.js";

export type SendOutcome = "sent" | "blocked" | "rejected";

export async function sendDraft(
  api: ApiClient,
  state: ClientState,
  tab?: Tab,
): Promise<SendOutcome> {
  const target = tab ?? state.activeTab();
  if (!state.canSend()) {
    return "blocked";
  }
  try {
    await api.send(state.token, target.scope, state.draft);
    state.draft = "";
    target.notice = "";
    return "sent";
  } catch (err) {
    target.notice =
      err instanceof ApiError ? `${err.code}: ${err.detail}` : String(err);
    return "rejected";
  }
}
