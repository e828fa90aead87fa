"""HTTP/JSON service surface: no-login join, send, long-poll delivery,
presence, groups, profiles, history, and delete-conversation.

Transport notes:
  - bearer token travels in the JSON body for mutations and in the query
    string for reads;
  - scope objects on the wire are {"kind":"public"},
    {"kind":"group","id":...}, or {"kind":"private","to":...} /
    {"kind":"private","pair":[a,b]} (the "to" form is relative to the
    caller; "pair" must include the caller);
  - errors render as {"error": CODE, "detail": ...}.

Long-polls park on an asyncio event that every append trips; a woken poller
re-reads the store, so wake-ups and visibility are causally ordered.
"""

from __future__ import annotations

import asyncio
import json
import logging
import secrets
import time
from contextlib import asynccontextmanager, suppress
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .domain import (
    Message,
    Scope,
    canonical_private_scope,
    format_timestamp,
    new_handle,
    validate_display_name,
    validate_message_text,
    validate_status,
)
from .errors import (
    BadToken,
    ChatError,
    InvalidRequest,
    NotAuthorized,
    NotGroupMember,
    UnknownGroup,
    UnknownRecipient,
)
from .sessions import SessionRegistry
from .store import LogStore

logger = logging.getLogger("anonroom.server")


def now_ms() -> int:
    return time.time_ns() // 1_000_000


@dataclass
class ServerConfig:
    data_dir: str = "./data"
    session_timeout_s: float = 120.0
    presence_timeout_s: float = 30.0
    max_wait_ms: int = 30_000
    static_dir: str | None = None
    clock: Callable[[], int] = field(default=now_ms)
    sweep_interval_s: float = 10.0


class AppendNotifier:
    """Wakes every parked long-poll when the log grows."""

    def __init__(self) -> None:
        self._event = asyncio.Event()

    @property
    def gate(self) -> asyncio.Event:
        """Grab before checking the store, wait after; an append between the
        check and the wait leaves the grabbed event already set."""
        return self._event

    def notify(self) -> None:
        event, self._event = self._event, asyncio.Event()
        event.set()


def wire_message(msg: Message, utc_offset_min: int = 0) -> dict:
    return {
        "seq": msg.seq,
        "ts": msg.ts_ms,
        "from": msg.sender,
        "scope": msg.scope.to_wire(),
        "raw": msg.text.raw,
        "expanded": msg.text.expanded,
        "time": format_timestamp(msg.ts_ms, utc_offset_min),
    }


async def _json_body(request: Request) -> dict:
    body = await request.body()
    if not body:
        return {}
    try:
        obj = json.loads(body)
    except ValueError:
        raise InvalidRequest("request body must be valid JSON") from None
    if not isinstance(obj, dict):
        raise InvalidRequest("request body must be a JSON object")
    return obj


def _int_param(raw, name: str, default: int, lo: int, hi: int) -> int:
    if raw is None:
        return default
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise InvalidRequest(f"{name} must be an integer") from None
    if not lo <= value <= hi:
        raise InvalidRequest(f"{name} must be between {lo} and {hi}")
    return value


def create_app(config: ServerConfig | None = None) -> FastAPI:
    config = config or ServerConfig()
    store = LogStore(config.data_dir)
    sessions = SessionRegistry(int(config.session_timeout_s * 1000), config.clock)
    notifier = AppendNotifier()
    presence_timeout_ms = int(config.presence_timeout_s * 1000)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        sweeper = asyncio.create_task(_sweep_loop())
        try:
            yield
        finally:
            sweeper.cancel()
            with suppress(asyncio.CancelledError):
                await sweeper
            store.close()

    async def _sweep_loop():
        interval = max(1.0, min(config.session_timeout_s / 4, config.sweep_interval_s))
        while True:
            await asyncio.sleep(interval)
            swept = sessions.sweep()
            if swept:
                logger.info("swept %d expired session(s)", swept)

    app = FastAPI(
        title="anonroom",
        lifespan=lifespan,
        docs_url=None,
        redoc_url=None,
        openapi_url=None,
    )
    app.state.store = store
    app.state.sessions = sessions
    app.state.config = config

    @app.exception_handler(ChatError)
    async def chat_error(request: Request, exc: ChatError):
        return JSONResponse(
            {"error": exc.code, "detail": exc.detail}, status_code=exc.http_status
        )

    # -- scope resolution -------------------------------------------------

    def parse_scope_spec(spec, requester: str) -> Scope:
        """Wire scope -> domain Scope. Checks shape and group existence;
        authorization is per-operation."""
        if not isinstance(spec, dict):
            raise InvalidRequest("scope must be an object")
        kind = spec.get("kind")
        if kind == "public":
            return Scope.public()
        if kind == "group":
            group_id = spec.get("id")
            if not isinstance(group_id, str) or not group_id:
                raise InvalidRequest("group scope needs an id")
            if store.get_group(group_id) is None:
                raise UnknownGroup(f"no such group: {group_id}")
            return Scope.group(group_id)
        if kind == "private":
            to = spec.get("to")
            if to is not None:
                if not isinstance(to, str):
                    raise InvalidRequest("private scope 'to' must be a handle")
                return canonical_private_scope(requester, to)
            pair = spec.get("pair")
            if (
                isinstance(pair, list)
                and len(pair) == 2
                and all(isinstance(h, str) for h in pair)
            ):
                return canonical_private_scope(pair[0], pair[1])
            raise InvalidRequest("private scope needs 'to' or 'pair'")
        raise InvalidRequest(f"unknown scope kind: {kind!r}")

    def check_send_scope(scope: Scope, sender: str) -> None:
        if scope.kind == "group":
            if sender not in store.get_group(scope.group_id).members:
                raise NotGroupMember(f"join {scope.group_id} before sending to it")
        elif scope.kind == "private":
            if sender not in scope.pair:
                raise NotAuthorized("cannot send into someone else's conversation")
            other = scope.pair[0] if scope.pair[1] == sender else scope.pair[1]
            if not store.is_known_handle(other):
                raise UnknownRecipient(f"no such handle: {other}")

    def check_view_scope(scope: Scope, viewer: str) -> None:
        if scope.kind == "group":
            if scope.group_id not in store.memberships_of(viewer):
                raise NotAuthorized(f"not a member of {scope.group_id}")
        elif scope.kind == "private":
            if viewer not in scope.pair:
                raise NotAuthorized("not a party to this conversation")

    # -- presence ----------------------------------------------------------

    def users_payload() -> list[dict]:
        now = config.clock()
        last_seen = sessions.last_seen_by_handle()
        users = []
        for handle in sorted(store.known_handles()):
            profile = store.profile_of(handle)
            seen = last_seen.get(handle)
            users.append(
                {
                    "handle": handle,
                    "display_name": profile.name if profile else None,
                    "active": seen is not None and now - seen <= presence_timeout_ms,
                }
            )
        return users

    # -- endpoints -----------------------------------------------------------

    @app.post("/api/join")
    async def join(request: Request):
        body = await _json_body(request)
        display_name = body.get("display_name")
        if display_name is not None:
            display_name = validate_display_name(display_name)
        handle = new_handle(store.known_handles(), lambda: secrets.token_bytes(3))
        store.register_handle(handle)
        session = sessions.create(handle)
        if display_name is not None:
            store.upsert_profile(handle, display_name, "")
        return {"token": session.token, "handle": handle}

    @app.post("/api/send")
    async def send(request: Request):
        body = await _json_body(request)
        session = sessions.authenticate(body.get("token"))
        scope = parse_scope_spec(body.get("scope"), session.handle)
        check_send_scope(scope, session.handle)
        text = validate_message_text(body.get("text"))
        msg = store.append(session.handle, scope, text, config.clock())
        notifier.notify()
        return {"seq": msg.seq, "ts": msg.ts_ms}

    @app.get("/api/poll")
    async def poll(request: Request):
        params = request.query_params
        session = sessions.authenticate(params.get("token"))
        cursor = _int_param(params.get("cursor"), "cursor", 0, 0, 2**62)
        wait_ms = _int_param(params.get("wait_ms"), "wait_ms", 0, 0, 2**31)
        wait_ms = min(wait_ms, config.max_wait_ms)
        offset = _int_param(params.get("utc_offset_min"), "utc_offset_min", 0, -840, 840)

        loop = asyncio.get_running_loop()
        deadline = loop.time() + wait_ms / 1000.0
        while True:
            gate = notifier.gate
            visible, new_cursor = store.read_since(
                cursor, session.handle, store.memberships_of(session.handle)
            )
            if visible:
                break
            remaining = deadline - loop.time()
            if remaining <= 0:
                break
            with suppress(asyncio.TimeoutError):
                await asyncio.wait_for(gate.wait(), remaining)
        sessions.touch(session.token)
        # hot path: serialize directly, skipping the framework's deep encoder
        return JSONResponse(
            {
                "messages": [wire_message(m, offset) for m in visible],
                "cursor": new_cursor,
                "users": users_payload(),
            }
        )

    @app.get("/api/users")
    async def users(request: Request):
        sessions.authenticate(request.query_params.get("token"))
        return JSONResponse({"users": users_payload()})

    @app.post("/api/groups")
    async def group_create(request: Request):
        body = await _json_body(request)
        session = sessions.authenticate(body.get("token"))
        name = validate_display_name(body.get("name"))
        group = store.create_group(name, session.handle, config.clock())
        return {"group_id": group.group_id}

    @app.post("/api/groups/join")
    async def group_join(request: Request):
        body = await _json_body(request)
        session = sessions.authenticate(body.get("token"))
        group_id = body.get("group_id")
        if not isinstance(group_id, str) or not group_id:
            raise InvalidRequest("group_id must be a string")
        group = store.join_group(group_id, session.handle)
        return {"group_id": group.group_id, "members": sorted(group.members)}

    @app.get("/api/groups")
    async def group_list(request: Request):
        sessions.authenticate(request.query_params.get("token"))
        return {
            "groups": [
                {
                    "group_id": g.group_id,
                    "name": g.name,
                    "members": sorted(g.members),
                }
                for g in store.groups()
            ]
        }

    @app.get("/api/history")
    async def history(request: Request):
        params = request.query_params
        session = sessions.authenticate(params.get("token"))
        raw_scope = params.get("scope")
        if raw_scope is None:
            raise InvalidRequest("scope query parameter is required")
        try:
            spec = json.loads(raw_scope)
        except ValueError:
            raise InvalidRequest("scope must be URL-encoded JSON") from None
        scope = parse_scope_spec(spec, session.handle)
        check_view_scope(scope, session.handle)
        before = params.get("before")
        before_seq = None if before is None else _int_param(before, "before", 0, 1, 2**62)
        limit = _int_param(params.get("limit"), "limit", 50, 1, 200)
        offset = _int_param(params.get("utc_offset_min"), "utc_offset_min", 0, -840, 840)
        page = store.history(scope, session.handle, before_seq, limit)
        return {"messages": [wire_message(m, offset) for m in page]}

    @app.post("/api/conversations/delete")
    async def delete_conversation(request: Request):
        body = await _json_body(request)
        session = sessions.authenticate(body.get("token"))
        scope = parse_scope_spec(body.get("scope"), session.handle)
        check_view_scope(scope, session.handle)
        upto = store.max_seq
        if upto >= 1:
            tomb = store.record_tombstone(session.handle, scope, upto, config.clock())
            upto = tomb.upto_seq
        return {"upto_seq": upto}

    @app.post("/api/profile")
    async def profile(request: Request):
        body = await _json_body(request)
        session = sessions.authenticate(body.get("token"))
        current = store.profile_of(session.handle)
        name = current.name if current else None
        status = current.status if current else ""
        if "display_name" in body:
            name = validate_display_name(body.get("display_name"))
        if "status" in body:
            status = validate_status(body.get("status"))
        store.upsert_profile(session.handle, name, status)
        return {}

    static_dir = config.static_dir
    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="static")
    else:

        @app.get("/")
        async def index():
            return {
                "service": "anonroom",
                "join": "POST /api/join",
                "poll": "GET /api/poll?token=&cursor=&wait_ms=",
            }

    return app
