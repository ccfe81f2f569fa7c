from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from samplevote.backends import Completion, CompletionRequest
from samplevote.core import Answer, Task


def categorical_task(gold: str = "B", labels: str = "ABCD", task_id: str = "q1") -> Task:
    return Task(task_id, "Pick one.", "categorical", tuple(labels), Answer("categorical", gold))


def numeric_task(gold: int = 42, task_id: str = "n1") -> Task:
    return Task(task_id, "Compute it.", "numeric", gold=Answer("numeric", gold))


class ScriptedBackend:
    """Answers from a fixed list indexed by sample index; records every request."""

    backend_id = "scripted"
    model_name = "scripted"

    def __init__(self, texts, fail_on=()):
        self.texts = list(texts)
        self.fail_on = set(fail_on)
        self.requests: list[CompletionRequest] = []
        self._lock = threading.Lock()

    def complete(self, req: CompletionRequest) -> Completion:
        from samplevote.backends import BackendError

        with self._lock:
            self.requests.append(req)
        if req.sample_index in self.fail_on:
            raise BackendError("scripted failure")
        text = self.texts[req.sample_index % len(self.texts)]
        return Completion(text, len(req.prompt.split()), len(text.split()))


class StubChatServer:
    """Local OpenAI-style chat-completions server.

    ``statuses`` is consumed one per POST before falling back to 200.
    """

    def __init__(self, content: str = "so the answer is (B)", usage=(11, 7), statuses=()):
        self.content = content
        self.usage = usage
        self.statuses = list(statuses)
        self.bodies: list[dict] = []
        self.paths: list[str] = []
        self.auth: list[str] = []
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                with stub._lock:
                    stub.bodies.append(body)
                    stub.paths.append(self.path)
                    stub.auth.append(self.headers.get("Authorization", ""))
                    status = stub.statuses.pop(0) if stub.statuses else 200
                if status != 200:
                    self.send_response(status)
                    self.send_header("Content-Length", "0")
                    self.end_headers()
                    return
                payload = json.dumps({
                    "choices": [{"message": {"role": "assistant", "content": stub.content}}],
                    "usage": {"prompt_tokens": stub.usage[0], "completion_tokens": stub.usage[1]},
                }).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/v1"

    def __enter__(self) -> StubChatServer:
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def api_key(monkeypatch):
    monkeypatch.setenv("OPENAI_API_KEY", "test-key")
    return "test-key"


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
