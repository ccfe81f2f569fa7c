"""Talking to an OpenAI-compatible server, and replaying responses offline.

A tiny local server stands in for the real API. Responses go through a
content-addressed cache, so the second run needs no network at all and
produces the very same record.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from samplevote import Answer, HttpBackend, HttpConfig, ReplayBackend, SamplingParams, Task, run_vanilla

calls = []


class Handler(BaseHTTPRequestHandler):
    def do_POST(self):  # noqa: N802
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        calls.append(body)
        answer = ["41", "42", "42"][len(calls) % 3]
        payload = json.dumps({
            "choices": [{"message": {"content": f"Step by step... \\boxed{{{answer}}}"}}],
            "usage": {"prompt_tokens": 12, "completion_tokens": 6},
        }).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
threading.Thread(target=server.serve_forever, daemon=True).start()
os.environ.setdefault("OPENAI_API_KEY", "demo-key")

task = Task("mult", "What is 6*7?", "numeric", gold=Answer("numeric", 42))
http = HttpBackend(HttpConfig(f"http://127.0.0.1:{server.server_address[1]}/v1", "gpt-3.5-turbo"))
params = SamplingParams(n=9, temperature=0.7, top_p=0.95, seed=3)

with tempfile.TemporaryDirectory() as cache:
    first = run_vanilla(ReplayBackend(http, cache), task, params)[1]
    print(f"first run: {len(calls)} POSTs, correct={first.correct_at_full}")
    print("one request body:", calls[0])
    replay = ReplayBackend(http, cache)
    second = run_vanilla(replay, task, params)[1]
    print(f"second run: cache hits={replay.hits}, misses={replay.misses}, total POSTs still {len(calls)}")
    print("records identical:", first.to_json() == second.to_json())

server.shutdown()
