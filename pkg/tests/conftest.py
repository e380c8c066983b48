from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from cosmos.simenv.env import SimEnvironment
from cosmos.types import Task, ToolCall

GOLDEN = Path(__file__).parent / "golden"

_acceptance: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


def pytest_runtest_logreport(report):
    marker = getattr(report, "_acceptance", None)
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number, title = marker
    verdict = "PASS" if report.passed else "FAIL"
    # several tests may share one criterion; any failure fails it
    previous = _acceptance.get(number)
    if previous is None or previous[1] == "PASS":
        _acceptance[number] = (title, verdict)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        report._acceptance = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, verdict = _acceptance[number]
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")


# ── shared fixtures ──────────────────────────────────────────────────────


@pytest.fixture
def netops_env():
    return SimEnvironment.from_refs(["netops", "monitor"])


@pytest.fixture
def netops_task():
    return Task("netops_monitor_000", "Which devices run on the first us network?", ("netops", "monitor"))


@pytest.fixture
def netops_calls():
    a = ToolCall("c1", "netops", "getNetworks", {"region": "us"})
    b = ToolCall("c2", "monitor", "getDevices", {"network_id": "$ref:c1#networks.0.id"})
    return a, b


class ChatStub:
    """Local chat-completions endpoint answering from a list of canned replies."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests: list[dict] = []
        self.headers: list[dict] = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                stub.requests.append(body)
                stub.headers.append(dict(self.headers))
                reply = stub.replies.pop(0) if stub.replies else ""
                if isinstance(reply, int):
                    self.send_response(reply)
                    self.end_headers()
                    return
                data = json.dumps(
                    {
                        "choices": [{"message": {"role": "assistant", "content": reply}}],
                        "usage": {"prompt_tokens": 10, "completion_tokens": 5},
                    }
                ).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = f"http://127.0.0.1:{self.server.server_address[1]}/v1/chat/completions"
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def chat_stub():
    stubs = []

    def make(replies):
        stub = ChatStub(replies)
        stubs.append(stub)
        return stub

    yield make
    for s in stubs:
        s.close()
