"""Durable chat store: an append-only log with global sequencing.

Three line-delimited JSON files live in the data directory:

  messages.log    one record per message, seq gap-free from 1
  tombstones.log  per-(owner, scope) delete-conversation high-water marks
  meta.log        groups, group members, profiles

On startup the files are replayed in that order. A truncated final line is
a crash artifact: it is discarded with a warning and the file is trimmed so
new appends never glue onto it. Any other malformed line refuses startup.

Writes are flushed to the OS on every append; a full fsync happens every
SYNC_EVERY_RECORDS records or SYNC_EVERY_SECONDS, whichever comes first.

Concurrency: all mutations serialize through one lock (single-writer), so
sequence assignment order equals log-write order. Reads take the same lock
briefly and see a consistent prefix.
"""

from __future__ import annotations

import json
import logging
import os
import secrets
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .domain import (
    Group,
    Message,
    MessageText,
    Scope,
    Tombstone,
    new_group_id,
    scope_admits,
    scope_from_wire,
    visible_to,
)
from .errors import (
    ChatError,
    CorruptLog,
    CursorAhead,
    InvalidRequest,
    NotAuthorized,
    StorageFailure,
    UnknownGroup,
    UnknownHandle,
)

logger = logging.getLogger("anonroom.store")

SYNC_EVERY_RECORDS = 100
SYNC_EVERY_SECONDS = 1.0

MESSAGES_LOG = "messages.log"
TOMBSTONES_LOG = "tombstones.log"
META_LOG = "meta.log"


@dataclass
class Profile:
    handle: str
    name: str | None
    status: str


def _read_log(path: Path) -> tuple[list[dict], int]:
    """Parse a JSONL file; returns (records, byte length of the valid prefix).

    An unterminated tail is discarded with a warning; a malformed terminated
    line raises CorruptLog.
    """
    if not path.exists():
        return [], 0
    data = path.read_bytes()
    records: list[dict] = []
    pos = 0
    while pos < len(data):
        nl = data.find(b"\n", pos)
        if nl == -1:
            logger.warning(
                "%s: discarding truncated final line (%d bytes)",
                path.name,
                len(data) - pos,
            )
            break
        line = data[pos:nl]
        try:
            obj = json.loads(line.decode("utf-8"))
            if not isinstance(obj, dict):
                raise ValueError("record is not a JSON object")
        except (ValueError, UnicodeDecodeError) as exc:
            raise CorruptLog(
                f"{path.name}: malformed line at byte {pos}: {exc}"
            ) from None
        records.append(obj)
        pos = nl + 1
    return records, pos


class _AppendFile:
    """One append-only log file with flush-per-record and periodic fsync."""

    def __init__(self, path: Path, valid_len: int):
        # trim any crash artifact so new records never glue onto it
        if path.exists() and path.stat().st_size > valid_len:
            with open(path, "r+b") as f:
                f.truncate(valid_len)
        self._path = path
        self._f = open(path, "ab")
        self._since_sync = 0
        self._last_sync = time.monotonic()

    def append(self, record: dict) -> None:
        data = (json.dumps(record, ensure_ascii=False, separators=(",", ":")) + "\n").encode("utf-8")
        start = self._f.tell()
        try:
            self._f.write(data)
            self._f.flush()
        except OSError as exc:
            try:
                self._f.truncate(start)
            except OSError:
                pass
            raise StorageFailure(f"write to {self._path.name} failed: {exc}") from exc
        self._since_sync += 1
        now = time.monotonic()
        if (
            self._since_sync >= SYNC_EVERY_RECORDS
            or now - self._last_sync >= SYNC_EVERY_SECONDS
        ):
            try:
                os.fsync(self._f.fileno())
            except OSError as exc:
                raise StorageFailure(
                    f"fsync of {self._path.name} failed: {exc}"
                ) from exc
            self._since_sync = 0
            self._last_sync = now

    def close(self) -> None:
        try:
            self._f.flush()
            os.fsync(self._f.fileno())
        except (OSError, ValueError):
            pass
        self._f.close()


def _message_record(msg: Message) -> dict:
    return {
        "seq": msg.seq,
        "ts": msg.ts_ms,
        "from": msg.sender,
        "scope": msg.scope.to_wire(),
        "raw": msg.text.raw,
        "expanded": msg.text.expanded,
    }


def _require(record: dict, key: str, kind, context: str):
    value = record.get(key)
    if not isinstance(value, kind):
        raise CorruptLog(f"{context}: field {key!r} missing or mistyped")
    return value


class LogStore:
    """Append-only message log plus tombstones, groups, and profiles.

    Constructing a LogStore replays the data directory; an empty or missing
    directory yields an empty store with next_seq = 1.
    """

    def __init__(self, data_dir: str | Path):
        self._dir = Path(data_dir)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()

        self._messages: list[Message] = []
        self._tombstones: dict[tuple[str, str], Tombstone] = {}
        self._groups: dict[str, Group] = {}
        self._profiles: dict[str, Profile] = {}
        self._memberships: dict[str, set[str]] = {}
        self._known_handles: set[str] = set()
        self._next_seq = 1
        self._last_ts = 0

        msg_valid = self._replay_messages()
        tomb_valid = self._replay_tombstones()
        meta_valid = self._replay_meta()

        self._messages_file = _AppendFile(self._dir / MESSAGES_LOG, msg_valid)
        self._tombstones_file = _AppendFile(self._dir / TOMBSTONES_LOG, tomb_valid)
        self._meta_file = _AppendFile(self._dir / META_LOG, meta_valid)

    # -- replay ------------------------------------------------------------

    def _replay_messages(self) -> int:
        records, valid_len = _read_log(self._dir / MESSAGES_LOG)
        for i, rec in enumerate(records):
            context = f"{MESSAGES_LOG} line {i + 1}"
            seq = _require(rec, "seq", int, context)
            if seq != i + 1:
                raise CorruptLog(f"{context}: expected seq {i + 1}, found {seq}")
            ts = _require(rec, "ts", int, context)
            if ts < self._last_ts:
                raise CorruptLog(f"{context}: timestamp went backwards")
            sender = _require(rec, "from", str, context)
            raw = _require(rec, "raw", str, context)
            expanded = _require(rec, "expanded", str, context)
            try:
                scope = scope_from_wire(_require(rec, "scope", dict, context))
            except ChatError as exc:
                raise CorruptLog(f"{context}: bad scope: {exc.detail}") from None
            msg = Message(seq, ts, sender, scope, MessageText(raw, expanded))
            self._messages.append(msg)
            self._last_ts = ts
            self._note_handles_of(msg)
        self._next_seq = len(self._messages) + 1
        return valid_len

    def _replay_tombstones(self) -> int:
        records, valid_len = _read_log(self._dir / TOMBSTONES_LOG)
        for i, rec in enumerate(records):
            context = f"{TOMBSTONES_LOG} line {i + 1}"
            owner = _require(rec, "owner", str, context)
            upto = _require(rec, "upto", int, context)
            if upto < 1:
                raise CorruptLog(f"{context}: upto must be positive")
            try:
                scope = scope_from_wire(_require(rec, "scope", dict, context))
            except ChatError as exc:
                raise CorruptLog(f"{context}: bad scope: {exc.detail}") from None
            key = (owner, scope.key())
            existing = self._tombstones.get(key)
            if existing is None or upto > existing.upto_seq:
                self._tombstones[key] = Tombstone(owner, scope, upto)
            self._known_handles.add(owner)
        return valid_len

    def _replay_meta(self) -> int:
        records, valid_len = _read_log(self._dir / META_LOG)
        for i, rec in enumerate(records):
            context = f"{META_LOG} line {i + 1}"
            kind = _require(rec, "type", str, context)
            if kind == "group":
                group_id = _require(rec, "id", str, context)
                name = _require(rec, "name", str, context)
                creator = _require(rec, "creator", str, context)
                ts = _require(rec, "ts", int, context)
                self._groups[group_id] = Group(group_id, name, ts, {creator})
                self._memberships.setdefault(creator, set()).add(group_id)
                self._known_handles.add(creator)
            elif kind == "member":
                group_id = _require(rec, "group", str, context)
                handle = _require(rec, "handle", str, context)
                group = self._groups.get(group_id)
                if group is None:
                    raise CorruptLog(f"{context}: member of unknown group {group_id}")
                group.members.add(handle)
                self._memberships.setdefault(handle, set()).add(group_id)
                self._known_handles.add(handle)
            elif kind == "profile":
                handle = _require(rec, "handle", str, context)
                name = rec.get("name")
                if name is not None and not isinstance(name, str):
                    raise CorruptLog(f"{context}: field 'name' mistyped")
                status = _require(rec, "status", str, context)
                self._profiles[handle] = Profile(handle, name, status)
                self._known_handles.add(handle)
            else:
                # written by a newer version; skip rather than refuse to start
                logger.warning("%s: skipping unknown record type %r", context, kind)
        return valid_len

    def _note_handles_of(self, msg: Message) -> None:
        self._known_handles.add(msg.sender)
        if msg.scope.kind == "private":
            self._known_handles.update(msg.scope.pair)

    # -- mutations (single writer) -------------------------------------------

    def register_handle(self, handle: str) -> None:
        """Reserve a freshly minted handle. Volatile: not persisted until the
        handle leaves a trace (message, profile, group, tombstone)."""
        with self._lock:
            self._known_handles.add(handle)

    def append(
        self, sender: str, scope: Scope, text: MessageText, now_ms: int
    ) -> Message:
        with self._lock:
            seq = self._next_seq
            ts = max(int(now_ms), self._last_ts)
            msg = Message(seq, ts, sender, scope, text)
            self._messages_file.append(_message_record(msg))
            self._messages.append(msg)
            self._next_seq = seq + 1
            self._last_ts = ts
            self._note_handles_of(msg)
            return msg

    def record_tombstone(
        self, owner: str, scope: Scope, now_max_seq: int, now_ms: int
    ) -> Tombstone:
        if now_max_seq < 1:
            raise InvalidRequest("tombstone high-water mark must be positive")
        with self._lock:
            key = (owner, scope.key())
            existing = self._tombstones.get(key)
            upto = max(existing.upto_seq if existing else 0, now_max_seq)
            if existing is None or upto > existing.upto_seq:
                self._tombstones_file.append(
                    {
                        "owner": owner,
                        "scope": scope.to_wire(),
                        "upto": upto,
                        "ts": int(now_ms),
                    }
                )
                self._tombstones[key] = Tombstone(owner, scope, upto)
                self._known_handles.add(owner)
            return self._tombstones[key]

    def create_group(
        self,
        name: str,
        creator: str,
        now_ms: int,
        entropy_source: Callable[[], bytes] | None = None,
    ) -> Group:
        source = entropy_source or (lambda: secrets.token_bytes(3))
        with self._lock:
            group_id = new_group_id(self._groups, source)
            self._meta_file.append(
                {
                    "type": "group",
                    "id": group_id,
                    "name": name,
                    "creator": creator,
                    "ts": int(now_ms),
                }
            )
            group = Group(group_id, name, int(now_ms), {creator})
            self._groups[group_id] = group
            self._memberships.setdefault(creator, set()).add(group_id)
            self._known_handles.add(creator)
            return group

    def join_group(self, group_id: str, member: str) -> Group:
        with self._lock:
            group = self._groups.get(group_id)
            if group is None:
                raise UnknownGroup(f"no such group: {group_id}")
            if member not in group.members:
                self._meta_file.append(
                    {"type": "member", "group": group_id, "handle": member}
                )
                group.members.add(member)
                self._memberships.setdefault(member, set()).add(group_id)
                self._known_handles.add(member)
            return group

    def upsert_profile(self, handle: str, name: str | None, status: str) -> Profile:
        with self._lock:
            if handle not in self._known_handles:
                raise UnknownHandle(f"no such handle: {handle}")
            self._meta_file.append(
                {"type": "profile", "handle": handle, "name": name, "status": status}
            )
            profile = Profile(handle, name, status)
            self._profiles[handle] = profile
            return profile

    # -- reads ----------------------------------------------------------------

    @property
    def max_seq(self) -> int:
        with self._lock:
            return self._next_seq - 1

    def read_since(
        self, cursor: int, viewer: str, memberships: set[str] | None = None
    ) -> tuple[list[Message], int]:
        """All messages with seq > cursor visible to viewer, plus the global
        max seq to use as the next cursor."""
        with self._lock:
            if cursor < 0:
                raise InvalidRequest("cursor must be non-negative")
            max_seq = self._next_seq - 1
            if cursor > max_seq:
                raise CursorAhead(
                    f"cursor {cursor} is ahead of the log (max seq {max_seq})"
                )
            if memberships is None:
                memberships = self.memberships_of(viewer)
            tombs = self._viewer_tombstones(viewer)
            visible = [
                m
                for m in self._messages[cursor:]
                if visible_to(m, viewer, memberships, tombs)
            ]
            return visible, max_seq

    def history(
        self,
        scope: Scope,
        viewer: str,
        before_seq: int | None = None,
        limit: int = 50,
    ) -> list[Message]:
        """Up to `limit` messages in scope older than before_seq, visible to
        viewer, newest first."""
        if not 1 <= limit <= 200:
            raise InvalidRequest("limit must be between 1 and 200")
        with self._lock:
            memberships = self.memberships_of(viewer)
            if not scope_admits(scope, viewer, memberships):
                raise NotAuthorized(f"not authorized for scope {scope.key()}")
            tombs = self._viewer_tombstones(viewer)
            tomb = self._tombstones.get((viewer, scope.key()))
            floor = tomb.upto_seq if tomb else 0
            bound = before_seq if before_seq is not None else self._next_seq
            out: list[Message] = []
            for msg in reversed(self._messages):
                if msg.seq >= bound or msg.scope != scope:
                    continue
                if msg.seq <= floor:
                    break  # everything older in this scope is tombstoned
                if visible_to(msg, viewer, memberships, tombs):
                    out.append(msg)
                    if len(out) == limit:
                        break
            return out

    def memberships_of(self, handle: str) -> set[str]:
        with self._lock:
            return set(self._memberships.get(handle, ()))

    def groups(self) -> list[Group]:
        with self._lock:
            return sorted(self._groups.values(), key=lambda g: (g.created_ts_ms, g.group_id))

    def get_group(self, group_id: str) -> Group | None:
        with self._lock:
            return self._groups.get(group_id)

    def profile_of(self, handle: str) -> Profile | None:
        with self._lock:
            return self._profiles.get(handle)

    def known_handles(self) -> set[str]:
        with self._lock:
            return set(self._known_handles)

    def is_known_handle(self, handle: str) -> bool:
        with self._lock:
            return handle in self._known_handles

    def tombstones_of(self, viewer: str) -> list[Tombstone]:
        with self._lock:
            return self._viewer_tombstones(viewer)

    def dump_messages(self) -> list[Message]:
        with self._lock:
            return list(self._messages)

    def _viewer_tombstones(self, viewer: str) -> list[Tombstone]:
        return [t for (owner, _), t in self._tombstones.items() if owner == viewer]

    # -- lifecycle ---------------------------------------------------------------

    def close(self) -> None:
        with self._lock:
            self._messages_file.close()
            self._tombstones_file.close()
            self._meta_file.close()

    def __enter__(self) -> "LogStore":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
