"""Wire-protocol conformance and load scenarios.

Each scenario drives a running server purely through HTTP, collects one
transcript per scripted client, then grades the transcripts against the
send ledger. A scenario passes only when duplicates, gaps, and leaks are
all zero and its specific checks hold.

Message payloads embed `(tag, sender, index, send-time)` so transcripts can
be matched back to the ledger and delivery latency measured. Quiescence is
three consecutive empty polls per client.
"""

from __future__ import annotations

import asyncio
import hashlib
import json
import random
import socket
import subprocess
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import aiohttp

DEFAULT_DEADLINE_S = 55.0
JOIN_PARALLELISM = 50

_TRANSPORT_ERRORS = (aiohttp.ClientError, asyncio.TimeoutError)


class ScenarioError(Exception):
    pass


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


def _pct(samples: list[float], q: float) -> float:
    if not samples:
        return 0.0
    ordered = sorted(samples)
    idx = min(len(ordered) - 1, round(q / 100.0 * (len(ordered) - 1)))
    return float(ordered[idx])


def _scope_key(scope: dict) -> str:
    kind = scope.get("kind")
    if kind == "public":
        return "public"
    if kind == "group":
        return f"group:{scope.get('id')}"
    pair = scope.get("pair") or ["?", "?"]
    return f"private:{pair[0]}|{pair[1]}"


@dataclass
class Report:
    scenario: str
    passed: bool
    counters: dict
    latency_ms: dict
    details: dict = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "pass": self.passed,
            "counters": self.counters,
            "latency_ms": self.latency_ms,
            "details": self.details,
            "failures": self.failures,
        }


def _grade(
    scenario: str,
    counters: dict,
    latencies: list[float],
    details: dict,
    failures: list[str],
) -> Report:
    clean = (
        counters.get("duplicates", 0) == 0
        and counters.get("gaps", 0) == 0
        and counters.get("leaks", 0) == 0
    )
    return Report(
        scenario=scenario,
        passed=clean and not failures,
        counters=counters,
        latency_ms={"p50": _pct(latencies, 50), "p99": _pct(latencies, 99)},
        details=details,
        failures=failures,
    )


def _unreachable(scenario: str, exc: Exception) -> Report:
    return _grade(
        scenario,
        {"sent": 0, "delivered": 0, "duplicates": 0, "gaps": 0, "leaks": 0},
        [],
        {},
        [f"ServerUnreachable: {exc!r}"],
    )


async def _gather_limited(coros, limit: int):
    sem = asyncio.Semaphore(limit)

    async def bounded(coro):
        async with sem:
            return await coro

    return await asyncio.gather(*(bounded(c) for c in coros))


def _http_session(n_clients: int, wait_ms: int) -> aiohttp.ClientSession:
    return aiohttp.ClientSession(
        connector=aiohttp.TCPConnector(limit=n_clients + 20),
        timeout=aiohttp.ClientTimeout(
            total=None, connect=30.0, sock_read=wait_ms / 1000.0 + 20.0
        ),
    )


@dataclass
class _Participant:
    http: aiohttp.ClientSession
    url: str
    token: str = ""
    handle: str = ""
    cursor: int = 0
    transcript: list = field(default_factory=list)  # (seq, scope_key, raw, recv_ms)
    empty_streak: int = 0
    five_xx: int = 0
    transport_retries: int = 0
    failures: list = field(default_factory=list)

    async def join(self) -> None:
        async with self.http.post(f"{self.url}/api/join", json={}) as r:
            if r.status != 200:
                raise ScenarioError(f"join rejected: HTTP {r.status}")
            body = await r.json()
        self.token = body["token"]
        self.handle = body["handle"]

    async def poll_once(self, wait_ms: int, tag: str) -> None:
        try:
            async with self.http.get(
                f"{self.url}/api/poll",
                params={
                    "token": self.token,
                    "cursor": str(self.cursor),
                    "wait_ms": str(wait_ms),
                },
            ) as r:
                if r.status >= 500:
                    self.five_xx += 1
                    return
                if r.status != 200:
                    self.failures.append(f"poll -> HTTP {r.status}")
                    return
                body = await r.json()
        except _TRANSPORT_ERRORS:
            # dropped keep-alive or read hiccup; re-poll on a fresh connection
            self.transport_retries += 1
            await asyncio.sleep(0.05)
            return
        self.cursor = body["cursor"]
        recv_ms = _now_ms()
        for m in body["messages"]:
            if m["raw"].startswith(tag):
                self.transcript.append(
                    (m["seq"], _scope_key(m["scope"]), m["raw"], recv_ms)
                )
        self.empty_streak = 0 if body["messages"] else self.empty_streak + 1

    async def send(self, text: str, scope: dict) -> bool | None:
        """True: confirmed. False: rejected. None: transport error, outcome
        unknown (never retried; a blind resend could duplicate delivery)."""
        try:
            async with self.http.post(
                f"{self.url}/api/send",
                json={"token": self.token, "scope": scope, "text": text},
            ) as r:
                if r.status >= 500:
                    self.five_xx += 1
                    return False
                if r.status != 200:
                    self.failures.append(f"send -> HTTP {r.status}")
                    return False
                return True
        except _TRANSPORT_ERRORS:
            self.transport_retries += 1
            return None


# -- broadcast -----------------------------------------------------------------


async def run_broadcast_check(
    url: str,
    n_clients: int,
    m_per_client: int,
    seed: int = 42,
    wait_ms: int = 300,
    deadline_s: float = DEFAULT_DEADLINE_S,
) -> Report:
    """Every public message must reach every client exactly once, in the
    same global order."""
    if n_clients < 1:
        raise ValueError("broadcast needs at least one client")
    rng = random.Random(seed)
    tag = f"bb:{rng.randrange(16 ** 8):08x}:"
    started = time.monotonic()
    deadline = started + deadline_s
    total = n_clients * m_per_client

    async with _http_session(n_clients, wait_ms) as http:
        clients = [_Participant(http, url) for _ in range(n_clients)]
        try:
            await _gather_limited([c.join() for c in clients], JOIN_PARALLELISM)
        except (ScenarioError, *_TRANSPORT_ERRORS) as exc:
            return _unreachable("broadcast", exc)

        sent_ok = 0

        async def client_loop(c: _Participant) -> bool:
            nonlocal sent_ok
            sent = 0
            while time.monotonic() < deadline:
                await c.poll_once(wait_ms, tag)
                if sent < m_per_client:
                    text = f"{tag}{c.handle}:{sent}:{_now_ms()}"
                    if await c.send(text, {"kind": "public"}) is True:
                        sent_ok += 1
                    sent += 1
                    c.empty_streak = 0
                elif len(c.transcript) >= total and c.empty_streak >= 3:
                    return True
            return False

        finished = await asyncio.gather(*(client_loop(c) for c in clients))

    failures: list[str] = []
    if not all(finished):
        failures.append(
            f"{finished.count(False)} client(s) timed out before quiescence"
        )
    expected = {(c.handle, i) for c in clients for i in range(m_per_client)}
    duplicates = gaps = delivered = 0
    latencies: list[float] = []
    orders: list[list[int]] = []
    for c in clients:
        counts: Counter = Counter()
        for seq, _key, raw, recv_ms in c.transcript:
            _, _, sender, idx, sent_ms = raw.split(":")
            counts[(sender, int(idx))] += 1
            latencies.append(recv_ms - int(sent_ms))
            delivered += 1
        duplicates += sum(n - 1 for n in counts.values() if n > 1)
        unknown = set(counts) - expected
        if unknown:
            failures.append(f"{c.handle} received {len(unknown)} unexpected messages")
        missing = expected - set(counts)
        gaps += len(missing)
        orders.append([seq for seq, *_ in c.transcript])
        failures.extend(c.failures)
    identical_order = bool(orders) and all(order == orders[0] for order in orders)
    if orders and not identical_order:
        failures.append("transcripts disagree on global sequence order")
    five_xx = sum(c.five_xx for c in clients)
    if five_xx:
        failures.append(f"{five_xx} responses were 5xx")
    if sent_ok != total:
        failures.append(f"only {sent_ok}/{total} sends succeeded")

    return _grade(
        "broadcast",
        {
            "sent": sent_ok,
            "delivered": delivered,
            "duplicates": duplicates,
            "gaps": gaps,
            "leaks": 0,
        },
        latencies,
        {
            "clients": n_clients,
            "messages_per_client": m_per_client,
            "elapsed_s": round(time.monotonic() - started, 3),
            "identical_order": identical_order,
            "transport_retries": sum(c.transport_retries for c in clients),
        },
        failures,
    )


# -- privacy ---------------------------------------------------------------------


async def run_privacy_check(
    url: str,
    n_clients: int,
    m_messages: int,
    seed: int = 42,
    wait_ms: int = 300,
    deadline_s: float = DEFAULT_DEADLINE_S,
) -> Report:
    """Random private traffic between random pairs must reach exactly the two
    parties and nobody else."""
    if n_clients < 3:
        raise ValueError("privacy needs at least three clients")
    rng = random.Random(seed)
    tag = f"pp:{rng.randrange(16 ** 8):08x}:"
    assignments = [tuple(rng.sample(range(n_clients), 2)) for _ in range(m_messages)]
    started = time.monotonic()
    deadline = started + deadline_s

    async with _http_session(n_clients, wait_ms) as http:
        clients = [_Participant(http, url) for _ in range(n_clients)]
        try:
            await _gather_limited([c.join() for c in clients], JOIN_PARALLELISM)
        except (ScenarioError, *_TRANSPORT_ERRORS) as exc:
            return _unreachable("privacy", exc)

        parties = {
            idx: (clients[s].handle, clients[r].handle)
            for idx, (s, r) in enumerate(assignments)
        }
        queues: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n_clients)}
        for idx, (s, r) in enumerate(assignments):
            queues[s].append((idx, r))
        expected_count = [
            sum(1 for s, r in assignments if ci in (s, r)) for ci in range(n_clients)
        ]

        sent_ok = 0

        async def client_loop(ci: int) -> bool:
            nonlocal sent_ok
            c = clients[ci]
            queue = queues[ci]
            sent = 0
            while time.monotonic() < deadline:
                await c.poll_once(wait_ms, tag)
                if sent < len(queue):
                    idx, recipient = queue[sent]
                    text = f"{tag}{idx}:{c.handle}:{_now_ms()}"
                    scope = {"kind": "private", "to": clients[recipient].handle}
                    if await c.send(text, scope) is True:
                        sent_ok += 1
                    sent += 1
                    c.empty_streak = 0
                elif len(c.transcript) >= expected_count[ci] and c.empty_streak >= 3:
                    return True
            return False

        finished = await asyncio.gather(*(client_loop(i) for i in range(n_clients)))

    failures: list[str] = []
    if not all(finished):
        failures.append(
            f"{finished.count(False)} client(s) timed out before quiescence"
        )
    duplicates = gaps = leaks = delivered = 0
    latencies: list[float] = []
    for ci, c in enumerate(clients):
        counts: Counter = Counter()
        for seq, _key, raw, recv_ms in c.transcript:
            _, _, idx, _sender, sent_ms = raw.split(":")
            idx = int(idx)
            if c.handle not in parties[idx]:
                leaks += 1
                continue
            counts[idx] += 1
            latencies.append(recv_ms - int(sent_ms))
            delivered += 1
        duplicates += sum(n - 1 for n in counts.values() if n > 1)
        expected = {idx for idx, pair in parties.items() if c.handle in pair}
        gaps += len(expected - set(counts))
        failures.extend(c.failures)
    five_xx = sum(c.five_xx for c in clients)
    if five_xx:
        failures.append(f"{five_xx} responses were 5xx")
    if sent_ok != m_messages:
        failures.append(f"only {sent_ok}/{m_messages} sends succeeded")

    return _grade(
        "privacy",
        {
            "sent": sent_ok,
            "delivered": delivered,
            "duplicates": duplicates,
            "gaps": gaps,
            "leaks": leaks,
        },
        latencies,
        {
            "clients": n_clients,
            "messages": m_messages,
            "elapsed_s": round(time.monotonic() - started, 3),
            "transport_retries": sum(c.transport_retries for c in clients),
            # seed-determined pair choices, digestible for reproducibility checks
            "assignments_digest": hashlib.sha256(
                json.dumps(assignments).encode()
            ).hexdigest()[:16],
        },
        failures,
    )


# -- capacity --------------------------------------------------------------------


async def run_capacity_check(
    url: str,
    n_clients: int,
    duration_s: float,
    seed: int = 42,
    wait_ms: int = 8000,
    tick_interval_s: float = 3.0,
) -> Report:
    """Hold n concurrent polling sessions; joins must never be rejected and
    no response may be 5xx. A heartbeat sender exercises fan-out so delivery
    latency percentiles mean something."""
    if n_clients < 1:
        raise ValueError("capacity needs at least one client")
    rng = random.Random(seed)
    tag = f"cap:{rng.randrange(16 ** 8):08x}:"
    started = time.monotonic()
    hold_deadline = started + duration_s

    async with _http_session(n_clients, wait_ms) as http:
        clients = [_Participant(http, url) for _ in range(n_clients)]
        rejections = 0

        async def try_join(c: _Participant):
            nonlocal rejections
            try:
                await c.join()
            except (ScenarioError, *_TRANSPORT_ERRORS):
                rejections += 1

        await _gather_limited([try_join(c) for c in clients], JOIN_PARALLELISM)
        joined = [c for c in clients if c.token]
        if not joined:
            return _unreachable("capacity", ScenarioError("no client could join"))

        confirmed_ticks: set[int] = set()

        async def ticker():
            # stop early enough for the last tick to drain within the hold
            stop = hold_deadline - max(wait_ms / 1000.0, tick_interval_s) - 1.0
            k = 0
            while time.monotonic() < stop:
                sent = await joined[0].send(f"{tag}{k}:{_now_ms()}", {"kind": "public"})
                if sent is True:
                    confirmed_ticks.add(k)
                k += 1
                await asyncio.sleep(tick_interval_s)

        async def poller(c: _Participant):
            while time.monotonic() < hold_deadline:
                await c.poll_once(wait_ms, tag)
            await c.poll_once(0, tag)  # final drain

        await asyncio.gather(ticker(), *(poller(c) for c in joined))

    failures: list[str] = []
    if rejections:
        failures.append(f"{rejections} join(s) rejected")
    five_xx = sum(c.five_xx for c in clients)
    if five_xx:
        failures.append(f"{five_xx} responses were 5xx")
    duplicates = gaps = delivered = 0
    latencies: list[float] = []
    for c in joined:
        counts: Counter = Counter()
        for _seq, _key, raw, recv_ms in c.transcript:
            _, _, k, sent_ms = raw.split(":")
            counts[int(k)] += 1
            latencies.append(recv_ms - int(sent_ms))
            delivered += 1
        duplicates += sum(n - 1 for n in counts.values() if n > 1)
        gaps += len(confirmed_ticks - set(counts))
        failures.extend(c.failures)

    return _grade(
        "capacity",
        {
            "sent": len(confirmed_ticks),
            "delivered": delivered,
            "duplicates": duplicates,
            "gaps": gaps,
            "leaks": 0,
        },
        latencies,
        {
            "clients": n_clients,
            "joined": len(joined),
            "duration_s": duration_s,
            "transport_retries": sum(c.transport_retries for c in clients),
            "elapsed_s": round(time.monotonic() - started, 3),
        },
        failures,
    )


# -- durability -------------------------------------------------------------------


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class _ServerProc:
    """A serve process under harness control, logs captured to a file."""

    def __init__(self, serve_cmd: list[str], data_dir: Path, port: int, log_path: Path):
        self.log_path = log_path
        self._log = open(log_path, "ab")
        self.proc = subprocess.Popen(
            [*serve_cmd, "--port", str(port), "--data-dir", str(data_dir)],
            stdout=self._log,
            stderr=subprocess.STDOUT,
        )

    async def wait_ready(self, url: str, timeout_s: float = 15.0) -> None:
        deadline = time.monotonic() + timeout_s
        async with aiohttp.ClientSession(
            timeout=aiohttp.ClientTimeout(total=2.0)
        ) as http:
            while time.monotonic() < deadline:
                if self.proc.poll() is not None:
                    raise ScenarioError(
                        f"server exited early rc={self.proc.returncode}"
                    )
                try:
                    async with http.get(url + "/"):
                        return
                except _TRANSPORT_ERRORS:
                    await asyncio.sleep(0.05)
        raise ScenarioError("server did not become ready")

    def kill9(self) -> None:
        self.proc.kill()
        self.proc.wait(timeout=15)
        self._close_log()

    def stop(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait(timeout=10)
        self._close_log()

    def read_log(self) -> str:
        if not self._log.closed:
            self._log.flush()
        return self.log_path.read_text(errors="replace")

    def _close_log(self) -> None:
        if not self._log.closed:
            self._log.close()


async def run_durability_check(
    serve_cmd: list[str],
    data_dir: str,
    port: int | None = None,
    seed: int = 42,
) -> Report:
    """Traffic, kill -9, restart: recorded history must survive intact, old
    sessions must not, and a truncated final log line must be tolerated.

    Old identities cannot re-authenticate after a restart (sessions are
    deliberately volatile), so public and group scopes are re-read over the
    wire while private-scope and tombstone durability are checked through
    byte-stable data files across the restart.
    """
    data_path = Path(data_dir)
    data_path.mkdir(parents=True, exist_ok=True)
    port = port or _free_port()
    url = f"http://127.0.0.1:{port}"
    log_path = data_path.parent / f"anonroom-durability-{port}.log"
    failures: list[str] = []
    latencies: list[float] = []
    sent = 0
    started = time.monotonic()

    def check(cond: bool, what: str) -> None:
        if not cond:
            failures.append(what)

    async def fetch_history(http, token, scope_json, label) -> bytes:
        t0 = time.monotonic()
        async with http.get(
            url + "/api/history",
            params={"token": token, "scope": scope_json, "limit": "200"},
        ) as r:
            latencies.append((time.monotonic() - t0) * 1000.0)
            check(r.status == 200, f"{label}: history -> HTTP {r.status}")
            return await r.read()

    server = _ServerProc(serve_cmd, data_path, port, log_path)
    try:
        await server.wait_ready(url)
        async with aiohttp.ClientSession(
            timeout=aiohttp.ClientTimeout(total=15.0)
        ) as http:
            a = _Participant(http, url)
            b = _Participant(http, url)
            c = _Participant(http, url)
            await a.join()
            await b.join()
            await c.join()

            async with http.post(
                url + "/api/groups", json={"token": a.token, "name": "durables"}
            ) as r:
                gid = (await r.json())["group_id"]
            for tok in (b.token, c.token):
                async with http.post(
                    url + "/api/groups/join", json={"token": tok, "group_id": gid}
                ):
                    pass

            for i in range(3):
                sent += await a.send(f"pub:{i}", {"kind": "public"}) is True
            for i in range(2):
                sent += await b.send(f"pub-b:{i}", {"kind": "public"}) is True
            for i in range(3):
                sent += (
                    await a.send(f"priv:{i}", {"kind": "private", "to": b.handle})
                    is True
                )
            for i in range(2):
                sent += await a.send(f"grp:{i}", {"kind": "group", "id": gid}) is True
            async with http.post(
                url + "/api/profile", json={"token": b.token, "display_name": "Bee"}
            ):
                pass

            # b hides the private conversation; a's copy must be unaffected
            pair_json = '{"kind":"private","pair":["%s","%s"]}' % tuple(
                sorted((a.handle, b.handle))
            )
            async with http.post(
                url + "/api/conversations/delete",
                json={"token": b.token, "scope": {"kind": "private", "to": a.handle}},
            ) as r:
                check(r.status == 200, "delete-conversation failed")

            group_json = '{"kind":"group","id":"%s"}' % gid
            pre_public = await fetch_history(http, c.token, '{"kind":"public"}', "pre")
            pre_group = await fetch_history(http, c.token, group_json, "pre")
            pre_priv_a = await fetch_history(http, a.token, pair_json, "pre")
            pre_priv_b = await fetch_history(http, b.token, pair_json, "pre")
            check(
                pre_priv_b == b'{"messages":[]}',
                "pre-kill: delete-conversation did not hide b's view",
            )
            check(b"priv:2" in pre_priv_a, "pre-kill: a's private view is missing data")
            old_tokens = [a.token, b.token, c.token]

        files_before = {
            p.name: p.read_bytes() for p in sorted(data_path.glob("*.log"))
        }
        server.kill9()

        # restart on the same directory
        server = _ServerProc(serve_cmd, data_path, port, log_path)
        await server.wait_ready(url)
        async with aiohttp.ClientSession(
            timeout=aiohttp.ClientTimeout(total=15.0)
        ) as http:
            files_after = {
                p.name: p.read_bytes() for p in sorted(data_path.glob("*.log"))
            }
            check(files_before == files_after, "restart altered the data files")
            for tok in old_tokens:
                async with http.get(
                    url + "/api/poll", params={"token": tok, "cursor": "0"}
                ) as r:
                    check(
                        r.status in (401, 410),
                        f"stale token survived restart: HTTP {r.status}",
                    )
            d = _Participant(http, url)
            await d.join()
            async with http.post(
                url + "/api/groups/join", json={"token": d.token, "group_id": gid}
            ):
                pass
            post_public = await fetch_history(http, d.token, '{"kind":"public"}', "post")
            post_group = await fetch_history(http, d.token, group_json, "post")
            check(post_public == pre_public, "public history changed across restart")
            check(post_group == pre_group, "group history changed across restart")

        server.kill9()

        # a deliberately truncated final line must be tolerated with a warning
        messages_log = data_path / "messages.log"
        intact = messages_log.read_bytes()
        messages_log.write_bytes(intact[:-9])
        log_mark = len(server.read_log())
        server = _ServerProc(serve_cmd, data_path, port, log_path)
        await server.wait_ready(url)
        async with aiohttp.ClientSession(
            timeout=aiohttp.ClientTimeout(total=15.0)
        ) as http:
            warning = server.read_log()[log_mark:]
            check("truncated" in warning, "no truncation warning was logged")
            e = _Participant(http, url)
            await e.join()
            async with http.get(
                url + "/api/history",
                params={"token": e.token, "scope": '{"kind":"public"}', "limit": "200"},
            ) as r:
                check(r.status == 200, "history unavailable after truncation repair")
                body = await r.read()
            check(b"pub-b:1" in body, "intact records lost during truncation repair")
    except (ScenarioError, *_TRANSPORT_ERRORS) as exc:
        failures.append(f"ProcessControlFailure: {exc!r}")
    finally:
        server.stop()

    return _grade(
        "durability",
        {
            "sent": sent,
            "delivered": sent if not failures else 0,
            "duplicates": 0,
            "gaps": 0,
            "leaks": 0,
        },
        latencies,
        {"data_dir": str(data_path), "elapsed_s": round(time.monotonic() - started, 3)},
        failures,
    )
