"""Shared test helpers: fake clock, in-process API harness, and a managed
server subprocess for wire-level and crash tests."""

import socket
import subprocess
import sys
import time
from pathlib import Path

import httpx
import pytest

from anonroom.server import ServerConfig, create_app

T0 = 1_620_000_000_000  # 2021-05-03 00:00:00 UTC


class FakeClock:
    """Injectable millisecond clock."""

    def __init__(self, start_ms: int = T0):
        self.ms = start_ms

    def __call__(self) -> int:
        return self.ms

    def advance(self, delta_ms: int) -> None:
        self.ms += delta_ms


class ApiHarness:
    """An in-process app plus an ASGI-backed httpx client."""

    def __init__(self, data_dir, clock: FakeClock | None = None, **overrides):
        self.clock = clock or FakeClock()
        self.config = ServerConfig(
            data_dir=str(data_dir), clock=self.clock, **overrides
        )
        self.app = create_app(self.config)
        self.store = self.app.state.store
        self.sessions = self.app.state.sessions
        self.client = httpx.AsyncClient(
            transport=httpx.ASGITransport(app=self.app),
            base_url="http://testserver",
            timeout=60.0,
        )

    async def __aenter__(self):
        return self

    async def __aexit__(self, *exc_info):
        await self.client.aclose()
        self.store.close()

    async def join(self, display_name=None) -> dict:
        body = {} if display_name is None else {"display_name": display_name}
        r = await self.client.post("/api/join", json=body)
        assert r.status_code == 200, r.text
        return r.json()

    async def send(self, token, text, scope=None) -> httpx.Response:
        return await self.client.post(
            "/api/send",
            json={"token": token, "scope": scope or {"kind": "public"}, "text": text},
        )

    async def poll(self, token, cursor=0, wait_ms=0, **params) -> httpx.Response:
        return await self.client.get(
            "/api/poll",
            params={"token": token, "cursor": cursor, "wait_ms": wait_ms, **params},
        )


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


class ServerProcess:
    """`anonroom serve` in a child process, with log capture on disk."""

    def __init__(self, data_dir, port: int | None = None, extra_args=(), env=None):
        self.port = port or free_port()
        self.data_dir = Path(data_dir)
        self.log_path = self.data_dir.parent / f"server-{self.port}.log"
        self._log_file = open(self.log_path, "ab")
        self.proc = subprocess.Popen(
            [
                sys.executable,
                "-m",
                "anonroom",
                "serve",
                "--port",
                str(self.port),
                "--data-dir",
                str(self.data_dir),
                *extra_args,
            ],
            stdout=self._log_file,
            stderr=subprocess.STDOUT,
            env=env,
        )

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def wait_ready(self, timeout_s: float = 15.0) -> None:
        deadline = time.monotonic() + timeout_s
        last_error = None
        while time.monotonic() < deadline:
            if self.proc.poll() is not None:
                raise RuntimeError(
                    f"server exited early (rc={self.proc.returncode}): {self.read_log()}"
                )
            try:
                httpx.get(self.url + "/", timeout=1.0)
                return
            except httpx.HTTPError as exc:
                last_error = exc
                time.sleep(0.05)
        raise TimeoutError(f"server not ready after {timeout_s}s: {last_error}")

    def read_log(self) -> str:
        self._log_file.flush()
        return self.log_path.read_text(errors="replace")

    def kill9(self) -> None:
        self.proc.kill()
        self.proc.wait(timeout=10)

    def stop(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait(timeout=10)
        self._log_file.close()


@pytest.fixture
def live_server(tmp_path):
    server = ServerProcess(tmp_path / "data")
    try:
        server.wait_ready()
        yield server
    finally:
        server.stop()
