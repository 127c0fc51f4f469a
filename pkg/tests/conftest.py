"""Shared fixtures: the catalog, fixture paths, and a local mock
chat-completions server used to exercise the judge harness end to end."""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from ghaudit.catalog import load_catalog

FIXTURES = Path(__file__).parent / "fixtures"
WORKFLOWS = FIXTURES / "workflows"
PANEL_WORKFLOWS = FIXTURES / "panel"
RESPONSES = FIXTURES / "responses"


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


@pytest.fixture(scope="session")
def workflow_fixtures() -> dict[str, str]:
    return {p.stem: p.read_text(encoding="utf-8")
            for p in sorted(WORKFLOWS.glob("*.yml"))}


_NAME_RE = re.compile(r"^name:\s*(\S+)", re.MULTILINE)
_QUESTION_RE = re.compile(r"^- ([WJSP]\d+):", re.MULTILINE)


class MockJudgeServer:
    """Local chat-completions endpoint driven by an answer function.

    answer_fn(model_id, workflow_name, criterion_id) returns the raw
    answer string placed in the sectioned JSON, or None to omit that
    criterion (simulating an incomplete sheet).
    """

    def __init__(self, answer_fn, fail_times: int = 0, raw_body: str | None = None):
        self.answer_fn = answer_fn
        self.fail_times = fail_times
        self.raw_body = raw_body
        self.request_count = 0
        self.seen_user_texts: list[str] = []
        self._lock = threading.Lock()

        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # silence test output
                pass

            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length))
                with server._lock:
                    server.request_count += 1
                    count = server.request_count
                    user_text = payload["messages"][-1]["content"]
                    server.seen_user_texts.append(user_text)
                if count <= server.fail_times:
                    self.send_response(503)
                    self.end_headers()
                    return

                model_id = payload.get("model", "")
                name_match = _NAME_RE.search(user_text)
                workflow_name = name_match.group(1) if name_match else ""
                criterion_ids = _QUESTION_RE.findall(user_text)

                if server.raw_body is not None:
                    content = server.raw_body
                else:
                    answers = {}
                    for cid in criterion_ids:
                        answer = server.answer_fn(model_id, workflow_name, cid)
                        if answer is not None:
                            answers[cid] = answer
                    content = json.dumps(answers)

                body = json.dumps({
                    "choices": [{"message": {"role": "assistant", "content": content}}],
                }).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self._httpd.shutdown()
        self._httpd.server_close()
        return False


@pytest.fixture
def mock_server_factory():
    servers: list[MockJudgeServer] = []

    def start(answer_fn, **kwargs) -> MockJudgeServer:
        server = MockJudgeServer(answer_fn, **kwargs)
        server.__enter__()
        servers.append(server)
        return server

    yield start
    for server in servers:
        server.__exit__()


def fixed_clock():
    return "2026-01-01T00:00:00+00:00"
