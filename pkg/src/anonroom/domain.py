"""Pure chat-room domain logic: handles, scopes, message validation, smiley
expansion, the visibility predicate, and display timestamps.

No I/O here. Persistence lives in `store`, transport in `server`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Collection, Iterable

from .errors import (
    EmptyMessage,
    HandleSpaceExhausted,
    InvalidDisplayName,
    InvalidRequest,
    InvalidStatus,
    InvalidText,
    MessageTooLong,
    SelfScope,
)

HANDLE_RE = re.compile(r"^guest-[0-9a-f]{6}$")
GROUP_ID_RE = re.compile(r"^g-[0-9a-f]{6}$")

MAX_MESSAGE_CHARS = 255
MAX_NAME_CHARS = 32
MAX_STATUS_CHARS = 64

# Fixed, versioned shortcode table; the frontend palette mirrors it.
# No produced emoji is itself a shortcode prefix, so expansion is idempotent.
SHORTCODES = {
    ":)": "\U0001F642",
    ":(": "\U0001F641",
    ":D": "\U0001F600",
    ";)": "\U0001F609",
    "<3": "❤",
    ":P": "\U0001F61B",
}

_CODES_LONGEST_FIRST = sorted(SHORTCODES, key=len, reverse=True)


# -- text -----------------------------------------------------------------------


@dataclass(frozen=True)
class MessageText:
    raw: str
    expanded: str


def _require_scalar_values(text: str, error_cls=InvalidText) -> None:
    # JSON transports can smuggle unpaired surrogates, which are not Unicode
    # scalar values and cannot be written to the UTF-8 logs.
    try:
        text.encode("utf-8")
    except UnicodeEncodeError:
        raise error_cls("text is not a sequence of Unicode scalar values") from None


def expand_shortcodes(raw: str) -> str:
    """Expand smiley shortcodes in one left-to-right pass.

    Longest code wins at each index; produced emoji are never re-scanned.
    """
    out: list[str] = []
    i = 0
    n = len(raw)
    while i < n:
        for code in _CODES_LONGEST_FIRST:
            if raw.startswith(code, i):
                out.append(SHORTCODES[code])
                i += len(code)
                break
        else:
            out.append(raw[i])
            i += 1
    return "".join(out)


def validate_message_text(raw: str) -> MessageText:
    """Check the 255-scalar-value budget and attach the expanded form.

    Whitespace-only text is allowed; only the truly empty string is rejected.
    """
    if not isinstance(raw, str):
        raise InvalidRequest("text must be a string")
    _require_scalar_values(raw)
    if len(raw) == 0:
        raise EmptyMessage("message text is empty")
    if len(raw) > MAX_MESSAGE_CHARS:
        raise MessageTooLong(
            f"message is {len(raw)} characters; limit is {MAX_MESSAGE_CHARS}"
        )
    return MessageText(raw=raw, expanded=expand_shortcodes(raw))


def validate_display_name(name: str) -> str:
    if not isinstance(name, str):
        raise InvalidDisplayName("display name must be a string")
    _require_scalar_values(name, InvalidDisplayName)
    if not 1 <= len(name) <= MAX_NAME_CHARS:
        raise InvalidDisplayName(
            f"display name must be 1..{MAX_NAME_CHARS} characters"
        )
    if any(ord(ch) < 0x20 for ch in name):
        raise InvalidDisplayName("display name must not contain control characters")
    return name


def validate_status(status: str) -> str:
    if not isinstance(status, str):
        raise InvalidStatus("status must be a string")
    _require_scalar_values(status, InvalidStatus)
    if len(status) > MAX_STATUS_CHARS:
        raise InvalidStatus(f"status must be at most {MAX_STATUS_CHARS} characters")
    return status


# -- scopes ---------------------------------------------------------------------


@dataclass(frozen=True)
class Scope:
    """Message addressing: public, group(id), or a canonical private pair."""

    kind: str
    group_id: str | None = None
    pair: tuple[str, str] | None = None

    @staticmethod
    def public() -> "Scope":
        return Scope(kind="public")

    @staticmethod
    def group(group_id: str) -> "Scope":
        return Scope(kind="group", group_id=group_id)

    def key(self) -> str:
        """Stable string key for tombstone maps and client tabs."""
        if self.kind == "public":
            return "public"
        if self.kind == "group":
            return f"group:{self.group_id}"
        return f"private:{self.pair[0]}|{self.pair[1]}"

    def to_wire(self) -> dict:
        if self.kind == "public":
            return {"kind": "public"}
        if self.kind == "group":
            return {"kind": "group", "id": self.group_id}
        return {"kind": "private", "pair": list(self.pair)}


def canonical_private_scope(a: str, b: str) -> Scope:
    """Private scope for two distinct handles, pair sorted ascending."""
    if a == b:
        raise SelfScope("a private conversation needs two distinct handles")
    lo, hi = (a, b) if a < b else (b, a)
    return Scope(kind="private", pair=(lo, hi))


def scope_from_wire(obj: dict) -> Scope:
    """Parse the stored/wire scope object. Raises InvalidRequest on bad shape."""
    if not isinstance(obj, dict):
        raise InvalidRequest("scope must be an object")
    kind = obj.get("kind")
    if kind == "public":
        return Scope.public()
    if kind == "group":
        group_id = obj.get("id")
        if not isinstance(group_id, str) or not group_id:
            raise InvalidRequest("group scope needs an id")
        return Scope.group(group_id)
    if kind == "private":
        pair = obj.get("pair")
        if (
            not isinstance(pair, (list, tuple))
            or len(pair) != 2
            or not all(isinstance(h, str) for h in pair)
        ):
            raise InvalidRequest("private scope needs a pair of two handles")
        return canonical_private_scope(pair[0], pair[1])
    raise InvalidRequest(f"unknown scope kind: {kind!r}")


# -- messages -------------------------------------------------------------------


@dataclass(frozen=True)
class Message:
    seq: int
    ts_ms: int
    sender: str
    scope: Scope
    text: MessageText


@dataclass
class Group:
    group_id: str
    name: str
    created_ts_ms: int
    members: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class Tombstone:
    """Per-(owner, scope) high-water mark hiding messages with seq <= upto_seq,
    for the owner only."""

    owner: str
    scope: Scope
    upto_seq: int


def visible_to(
    msg: Message,
    viewer: str,
    memberships: Collection[str],
    tombstones: Iterable[Tombstone],
) -> bool:
    """Whether `viewer` may see `msg`, given the viewer's group memberships
    and the viewer's own tombstones."""
    if not scope_admits(msg.scope, viewer, memberships):
        return False
    for t in tombstones:
        if t.owner == viewer and t.scope == msg.scope and t.upto_seq >= msg.seq:
            return False
    return True


def scope_admits(scope: Scope, viewer: str, memberships: Collection[str]) -> bool:
    """The scope half of visibility: broadcast, member, or private party."""
    if scope.kind == "public":
        return True
    if scope.kind == "group":
        return scope.group_id in memberships
    return viewer in scope.pair


# -- handles -------------------------------------------------------------------


def handle_from_entropy(entropy: bytes) -> str:
    if len(entropy) != 3:
        raise ValueError("handle entropy must be exactly 3 bytes")
    return "guest-" + entropy.hex()


def new_handle(
    registry: Collection[str],
    entropy_source: Callable[[], bytes],
    max_attempts: int = 100,
) -> str:
    """Mint an unused pseudonymous handle, retrying on collision."""
    for _ in range(max_attempts):
        handle = handle_from_entropy(entropy_source())
        if handle not in registry:
            return handle
    raise HandleSpaceExhausted(
        f"{max_attempts} consecutive handle collisions; registry too full"
    )


def new_group_id(
    registry: Collection[str],
    entropy_source: Callable[[], bytes],
    max_attempts: int = 100,
) -> str:
    for _ in range(max_attempts):
        entropy = entropy_source()
        if len(entropy) != 3:
            raise ValueError("group id entropy must be exactly 3 bytes")
        group_id = "g-" + entropy.hex()
        if group_id not in registry:
            return group_id
    raise HandleSpaceExhausted(
        f"{max_attempts} consecutive group id collisions; registry too full"
    )


# -- timestamps ------------------------------------------------------------------


def format_timestamp(ts_ms: int, utc_offset_min: int = 0) -> str:
    """Render epoch milliseconds as local 12-hour wall-clock time.

    Hour without leading zero, two-digit minute, lowercase am/pm:
    "2:05 pm", "12:30 am", "9:07 am".
    """
    minutes_of_day = (ts_ms // 60_000 + utc_offset_min) % (24 * 60)
    hour24, minute = divmod(minutes_of_day, 60)
    hour12 = (hour24 + 11) % 12 + 1
    half = "am" if hour24 < 12 else "pm"
    return f"{hour12}:{minute:02d} {half}"
