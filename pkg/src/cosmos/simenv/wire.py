"""JSON-RPC 2.0 wire client and the loopback server that exposes a SimEnvironment.

Framing is one JSON object per line over stdio, or a single JSON body per
HTTP POST. Methods follow MCP naming: ``initialize``, ``tools/list`` and
``tools/call``. The loopback server also answers ``cosmos/counters``.
"""

from __future__ import annotations

import json
import logging
import queue
import shlex
import subprocess
import sys
import threading
import time
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import IO, Any, Sequence

from cosmos.errors import EnvironmentUnavailable, ProtocolError
from cosmos.simenv.env import SimEnvironment, charge_tokens
from cosmos.simenv.spec import ToolSpec
from cosmos.types import Observation, ToolCall, canonical_json

log = logging.getLogger(__name__)

PROTOCOL_VERSION = "2024-11-05"
SERVER_NAME = "cosmos-sim"


# ── server side ──────────────────────────────────────────────────────────


def _tool_to_wire(server_id: str, tool: ToolSpec) -> dict[str, Any]:
    return {
        "name": tool.name,
        "description": tool.description,
        "inputSchema": tool.param_schema,
        "outputSchema": tool.output_schema,
        "_meta": {
            "server": server_id,
            "behavior": tool.behavior,
            "reference": tool.reference,
            "latency_ms": tool.latency_ms,
        },
    }


def _tool_from_wire(d: dict[str, Any]) -> tuple[str, ToolSpec]:
    meta = d.get("_meta") or {}
    return meta.get("server", ""), ToolSpec(
        name=d["name"],
        description=d.get("description", ""),
        param_schema=d.get("inputSchema") or {"type": "object"},
        output_schema=d.get("outputSchema") or {},
        behavior=meta.get("behavior"),
        reference=meta.get("reference"),
        latency_ms=float(meta.get("latency_ms", 1.0)),
    )


class LoopbackServer:
    """Serves a SimEnvironment over JSON-RPC."""

    def __init__(self, env: SimEnvironment):
        self.env = env

    def handle(self, message: Any) -> dict[str, Any] | None:
        if not isinstance(message, dict) or message.get("jsonrpc") != "2.0" or "method" not in message:
            return _error(message.get("id") if isinstance(message, dict) else None, -32600, "invalid request")
        rid = message.get("id")
        method = message["method"]
        params = message.get("params") or {}
        if rid is None:
            return None  # notification
        try:
            if method == "initialize":
                result = {
                    "protocolVersion": PROTOCOL_VERSION,
                    "serverInfo": {"name": SERVER_NAME, "version": "1"},
                    "capabilities": {"tools": {}},
                }
            elif method == "tools/list":
                result = {"tools": [_tool_to_wire(sid, t) for sid, t in self.env.list_tools()]}
            elif method == "tools/call":
                result = self._call(params)
            elif method == "cosmos/counters":
                result = self.env.counters()
            else:
                return _error(rid, -32601, f"method not found: {method}")
        except (KeyError, TypeError, ValueError) as exc:
            return _error(rid, -32602, f"invalid params: {exc}")
        return {"jsonrpc": "2.0", "id": rid, "result": result}

    def _call(self, params: dict[str, Any]) -> dict[str, Any]:
        meta = params.get("_meta") or {}
        name = params["name"]
        server = meta.get("server")
        if server is None:
            owners = [sid for sid, t in self.env.list_tools() if t.name == name]
            server = owners[0] if len(owners) == 1 else ""
        call = ToolCall(meta.get("call_id") or "wire", server, name, dict(params.get("arguments") or {}))
        obs = self.env.call_tool(call)
        text = obs.payload if not obs.ok else canonical_json(obs.payload)
        return {
            "content": [{"type": "text", "text": text}],
            "isError": not obs.ok,
            "_meta": {"latency_ms": obs.latency_ms},
        }

    def handle_line(self, line: str) -> str | None:
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            return canonical_json(_error(None, -32700, "parse error"))
        response = self.handle(message)
        return None if response is None else canonical_json(response)


def _error(rid: Any, code: int, message: str) -> dict[str, Any]:
    return {"jsonrpc": "2.0", "id": rid, "error": {"code": code, "message": message}}


def serve_stdio(env: SimEnvironment, infile: IO[str] | None = None, outfile: IO[str] | None = None) -> None:
    infile = infile or sys.stdin
    outfile = outfile or sys.stdout
    server = LoopbackServer(env)
    for line in infile:
        if not line.strip():
            continue
        reply = server.handle_line(line)
        if reply is not None:
            outfile.write(reply + "\n")
            outfile.flush()


def make_http_server(env: SimEnvironment, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    server = LoopbackServer(env)

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = self.rfile.read(int(self.headers.get("Content-Length", 0))).decode("utf-8")
            reply = server.handle_line(body)
            data = (reply or "").encode("utf-8")
            self.send_response(200 if reply else 204)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def log_message(self, *args):
            pass

    return ThreadingHTTPServer((host, port), Handler)


# ── client side ──────────────────────────────────────────────────────────


class StdioTransport:
    """Newline-delimited JSON over a child process's stdin/stdout."""

    def __init__(self, command: Sequence[str] | str):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise EnvironmentUnavailable(f"cannot launch {argv}: {exc}") from None
        self._lines: queue.Queue[str | None] = queue.Queue()
        threading.Thread(target=self._pump, daemon=True).start()

    def _pump(self) -> None:
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def send(self, text: str) -> None:
        self.proc.stdin.write(text + "\n")
        self.proc.stdin.flush()

    def recv(self, timeout: float | None) -> str | None:
        """Next line, or None on EOF. Raises queue.Empty on timeout."""
        return self._lines.get(timeout=timeout)

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()


class HttpTransport:
    """One JSON-RPC message per POST; the reply body is the response."""

    def __init__(self, url: str):
        self.url = url
        self._pending: str | None = None
        self._timeout: float | None = None

    def send(self, text: str) -> None:
        self._pending = text

    def recv(self, timeout: float | None) -> str | None:
        body, self._pending = self._pending, None
        req = urllib.request.Request(
            self.url, data=body.encode("utf-8"), headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                return resp.read().decode("utf-8")
        except TimeoutError:
            raise queue.Empty from None
        except (urllib.error.URLError, ConnectionError):
            return None

    def close(self) -> None:
        pass


class WireEnvironment:
    """Environment backed by a remote tool server over JSON-RPC.

    Not shareable: one client talks to one server process.
    """

    shareable = False

    def __init__(self, transport, timeout_s: float = 30.0):
        self.transport = transport
        self.timeout_s = timeout_s
        self.healthy = True
        self._next_id = 0
        self._lock = threading.Lock()
        self._tools: list[tuple[str, ToolSpec]] | None = None
        self._stats: dict[str, dict[str, int]] = {}
        self.server_info = self._handshake()

    def _handshake(self) -> dict[str, Any]:
        try:
            result = self.request(
                "initialize",
                {"protocolVersion": PROTOCOL_VERSION, "clientInfo": {"name": "cosmos"}, "capabilities": {}},
            )
        except (EOFError, queue.Empty) as exc:
            raise EnvironmentUnavailable(f"handshake failed: {exc!r}") from None
        if not isinstance(result, dict) or "protocolVersion" not in result:
            raise ProtocolError("handshake reply lacks protocolVersion", raw=result)
        self.notify("notifications/initialized")
        return result

    def notify(self, method: str, params: dict[str, Any] | None = None) -> None:
        with self._lock:
            self.transport.send(canonical_json({"jsonrpc": "2.0", "method": method, "params": params or {}}))
            if isinstance(self.transport, HttpTransport):
                self.transport.recv(self.timeout_s)

    def request(self, method: str, params: dict[str, Any] | None = None, timeout: float | None = None) -> Any:
        """Send one request and wait for its response. Raises EOFError if the peer went away."""
        with self._lock:
            self._next_id += 1
            rid = self._next_id
            try:
                self.transport.send(
                    canonical_json({"jsonrpc": "2.0", "id": rid, "method": method, "params": params or {}})
                )
            except (BrokenPipeError, OSError) as exc:
                self.healthy = False
                raise EOFError(str(exc)) from None
            raw = self.transport.recv(self.timeout_s if timeout is None else timeout)
        if raw is None:
            self.healthy = False
            raise EOFError("server closed the connection")
        try:
            msg = json.loads(raw)
        except json.JSONDecodeError:
            raise ProtocolError("malformed response", raw=raw) from None
        if not isinstance(msg, dict) or msg.get("jsonrpc") != "2.0":
            raise ProtocolError("response is not JSON-RPC 2.0", raw=raw)
        if msg.get("id") != rid:
            raise ProtocolError(f"response id {msg.get('id')!r} does not match request id {rid}", raw=raw)
        if "error" in msg:
            raise ProtocolError(f"server error: {msg['error']}", raw=raw)
        if "result" not in msg:
            raise ProtocolError("response has neither result nor error", raw=raw)
        return msg["result"]

    def list_tools(self) -> list[tuple[str, ToolSpec]]:
        if self._tools is None:
            result = self.request("tools/list")
            try:
                tools = [_tool_from_wire(t) for t in result["tools"]]
            except (KeyError, TypeError):
                raise ProtocolError("malformed tools/list result", raw=result) from None
            self._tools = sorted(tools, key=lambda p: (p[0], p[1].name))
        return list(self._tools)

    def call_tool(self, call: ToolCall) -> Observation:
        started = time.perf_counter()
        params = {"name": call.tool_name, "arguments": call.arguments,
                  "_meta": {"server": call.server, "call_id": call.call_id}}  # fmt: skip
        try:
            result = self.request("tools/call", params)
        except EOFError as exc:
            obs = self._failure(call, f"disconnected: {exc}", started)
        except queue.Empty:
            obs = self._failure(call, f"timeout after {self.timeout_s} s", started)
        else:
            obs = self._observation(call, result, started)
        stats = self._stats.setdefault(call.server, {"calls": 0, "failures": 0, "tokens": 0})
        stats["calls"] += 1
        stats["failures"] += 0 if obs.ok else 1
        stats["tokens"] += obs.tokens.total
        return obs

    def _observation(self, call: ToolCall, result: Any, started: float) -> Observation:
        try:
            text = result["content"][0]["text"]
            is_error = bool(result.get("isError"))
        except (KeyError, IndexError, TypeError):
            raise ProtocolError("malformed tools/call result", raw=result) from None
        # prefer the server-reported latency so runs over the wire stay reproducible
        meta = result.get("_meta") or {}
        latency = float(meta.get("latency_ms", (time.perf_counter() - started) * 1000.0))
        if is_error:
            return Observation(call.call_id, "failure", text or "error", latency, charge_tokens(text))
        try:
            payload = json.loads(text)
        except json.JSONDecodeError:
            payload = text
        return Observation(call.call_id, "success", payload, latency, charge_tokens(payload))

    @staticmethod
    def _failure(call: ToolCall, text: str, started: float) -> Observation:
        latency = (time.perf_counter() - started) * 1000.0
        return Observation(call.call_id, "failure", text, latency, charge_tokens(text))

    def counters(self) -> dict[str, dict[str, int]]:
        return {k: dict(v) for k, v in sorted(self._stats.items())}

    def close(self) -> None:
        self.transport.close()

    def __enter__(self) -> WireEnvironment:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def loopback_command(spec_refs: Sequence[str], extra: Sequence[str] = ()) -> list[str]:
    """argv that launches this package's loopback server over stdio."""
    argv = [sys.executable, "-m", "cosmos", "serve-sim"]
    for ref in spec_refs:
        argv += ["--spec", str(ref)]
    return argv + list(extra)


def wire_client_connect(target: str | Sequence[str], timeout_s: float = 30.0) -> WireEnvironment:
    """Connect to a tool server given a URL (HTTP) or a command line (stdio)."""
    if isinstance(target, str) and target.startswith(("http://", "https://")):
        return WireEnvironment(HttpTransport(target), timeout_s)
    transport = StdioTransport(target)
    try:
        return WireEnvironment(transport, timeout_s)
    except Exception:
        transport.close()
        raise
