from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor

import httpx
import pytest

from samplevote.backends import (
    BackendConfig,
    BackendError,
    CompletionRequest,
    HttpBackend,
    HttpConfig,
    ReplayBackend,
    SimAgentModel,
    SimulatedBackend,
    backoff_delay,
    complete,
    replay_key,
    sim_respond,
    synthetic_p_eff,
)
from samplevote.core import SamplingParams, ValidationError
from samplevote.ensemble import sample_phase
from samplevote.extract import extract_answer
from samplevote.rng import SplitMix64
from samplevote.synth import SyntheticSpec, generate

from conftest import ScriptedBackend, StubChatServer, categorical_task


def req(task, i=0, seed=0, temperature=1.0, top_p=1.0):
    return CompletionRequest(task.prompt, temperature, top_p, i, seed, task.id, task)


def test_perfect_and_hopeless_agents():
    task = categorical_task("B")
    cfg = BackendConfig("sim", "simulated", simulated=SimAgentModel(p_correct=1.0))
    assert "(B)" in complete(cfg, req(task)).raw_text
    bad = SimulatedBackend(SimAgentModel(p_correct=0.0, k_wrong=3))
    seen = {extract_answer(bad.complete(req(task, i)).raw_text, task).value for i in range(50)}
    assert seen == {"A", "C", "D"}


def _seed_with_first_draw(pred):
    seed = 0
    while not pred(SplitMix64(seed).random()):
        seed += 1
    return seed


def test_first_uniform_draw_decides():
    task = categorical_task("B", labels="AB")
    model = SimAgentModel(p_correct=0.6, k_wrong=1)
    low = _seed_with_first_draw(lambda u: abs(u - 0.31) < 0.01)
    high = _seed_with_first_draw(lambda u: abs(u - 0.88) < 0.01)
    assert "(B)" in sim_respond(model, task, low)
    assert "(A)" in sim_respond(model, task, high)


def test_flat_calibration():
    task = categorical_task()
    p, M = 0.37, 20_000
    model = SimAgentModel(p_correct=p)
    hits = sum("(B)" in sim_respond(model, task, s) for s in range(M))
    assert abs(hits / M - p) <= 4 * math.sqrt(p * (1 - p) / M)


def test_synthetic_aware_calibration():
    model = SimAgentModel(mode="synthetic-aware", base_skill=3.0)
    st = generate(SyntheticSpec(100, 4, 4, seed=1))
    task = st.to_task()
    p = synthetic_p_eff(model, 100, 4, 4)
    assert p == pytest.approx(3.0 / (3.0 + math.log(101) + 1.0))
    M = 10_000
    hits = sum(st.labels[st.correct_interval] == extract_answer(sim_respond(model, task, s), task).value for s in range(M))
    assert abs(hits / M - p) < 0.02


def test_p_eff_shape():
    model = SimAgentModel(mode="synthetic-aware", base_skill=2.0)
    assert synthetic_p_eff(model, 10, 4, 4) > synthetic_p_eff(model, 100, 4, 4) > synthetic_p_eff(model, 400, 4, 4)
    assert synthetic_p_eff(model, 10, 1, 4) > synthetic_p_eff(model, 10, 8, 4)
    assert synthetic_p_eff(model, 10**9, 8, 4) == 0.25
    assert synthetic_p_eff(model, 10, 4, 4, temperature=2.0) == pytest.approx(0.25)
    assert synthetic_p_eff(model, 10, 4, 4, temperature=5.0) == pytest.approx(0.25)
    strong = SimAgentModel(mode="synthetic-aware", base_skill=20.0)
    prior = SimAgentModel(mode="synthetic-aware", base_skill=20.0, prior_weight=1.0)
    assert synthetic_p_eff(prior, 10, 4, 8) == pytest.approx(synthetic_p_eff(strong, 10, 4, 8) / 4)


def test_sim_determinism_across_threads():
    task = categorical_task()
    backend = SimulatedBackend(SimAgentModel(p_correct=0.3))
    serial = [backend.complete(req(task, i, seed=7)).raw_text for i in range(64)]
    with ThreadPoolExecutor(8) as pool:
        threaded = list(pool.map(lambda i: backend.complete(req(task, i, seed=7)).raw_text, reversed(range(64))))
    assert serial == threaded[::-1]


def test_model_validation():
    for bad in (dict(p_correct=1.5), dict(k_wrong=0), dict(mode="oracle"), dict(base_skill=0)):
        with pytest.raises(ValidationError):
            SimAgentModel(**bad)
    with pytest.raises(ValidationError):
        BackendConfig("x", "http")
    with pytest.raises(ValidationError):
        HttpConfig("http://x", "m", timeout_ms=0)


def test_replay_keys():
    task = categorical_task()
    base = req(task)
    assert replay_key("sim", base) == replay_key("sim", req(task))
    assert replay_key("sim", base) != replay_key("sim", req(task, i=1))
    assert replay_key("sim", base) != replay_key("sim", req(task, top_p=0.9))
    assert replay_key("sim", base) != replay_key("sim", req(task, temperature=0.5))
    assert replay_key("sim", base) != replay_key("openai", base)
    other = categorical_task(task_id="q2")
    assert replay_key("sim", base) != replay_key("sim", req(other))


def test_replay_soundness(tmp_path):
    task = categorical_task()
    inner = ScriptedBackend(["(A)", "(B)", "(C)"])
    replay = ReplayBackend(inner, tmp_path)
    params = SamplingParams(n=12, seed=2)
    first = sample_phase(replay, task, params)
    assert len(inner.requests) == 12 and replay.misses == 12
    again = ReplayBackend(inner, tmp_path)
    second = sample_phase(again, task, params)
    assert len(inner.requests) == 12 and again.hits == 12
    assert [s.raw_text for s in first.samples] == [s.raw_text for s in second.samples]
    files = sorted(tmp_path.glob("*/*.json"))
    assert len(files) == 12 and all(f.parent.name == f.stem[:2] for f in files)


def test_backoff_full_jitter():
    assert backoff_delay(0, 500, lambda: 1.0) == 0.5
    assert backoff_delay(3, 500, lambda: 0.5) == 2.0
    assert backoff_delay(2, 500, lambda: 0.0) == 0.0


def _http(stub, max_retries=3):
    return HttpBackend(HttpConfig(stub.base_url, "gpt-test", max_retries=max_retries), sleep=lambda s: None)


def test_http_wire_shape(api_key):
    task = categorical_task()
    with StubChatServer("(B) it is", usage=(12, 5)) as stub:
        c = _http(stub).complete(req(task, temperature=0.7, top_p=0.9))
    assert (c.raw_text, c.prompt_tokens, c.completion_tokens) == ("(B) it is", 12, 5)
    assert stub.paths == ["/v1/chat/completions"]
    assert stub.auth == ["Bearer test-key"]
    assert stub.bodies == [{
        "model": "gpt-test",
        "messages": [{"role": "user", "content": task.prompt}],
        "temperature": 0.7,
        "top_p": 0.9,
        "n": 1,
    }]


def test_http_retries_then_succeeds(api_key):
    with StubChatServer(statuses=[429, 503]) as stub:
        c = _http(stub).complete(req(categorical_task()))
    assert c.raw_text and len(stub.bodies) == 3


def test_http_retry_bound(api_key):
    with StubChatServer(statuses=[500] * 10) as stub:
        with pytest.raises(BackendError, match="3 attempts"):
            _http(stub, max_retries=2).complete(req(categorical_task()))
    assert len(stub.bodies) == 3


def test_http_client_error_not_retried(api_key):
    with StubChatServer(statuses=[400]) as stub:
        with pytest.raises(BackendError, match="HTTP 400"):
            _http(stub).complete(req(categorical_task()))
    assert len(stub.bodies) == 1


def test_http_missing_key(monkeypatch):
    monkeypatch.delenv("MY_KEY", raising=False)
    backend = HttpBackend(HttpConfig("http://127.0.0.1:9", "m", api_key_env="MY_KEY"))
    with pytest.raises(BackendError, match="MY_KEY"):
        backend.complete(req(categorical_task()))


def test_http_malformed_and_network_errors(api_key):
    transport = httpx.MockTransport(lambda r: httpx.Response(200, json={"nope": 1}))
    backend = HttpBackend(HttpConfig("http://stub", "m"), client=httpx.Client(transport=transport))
    with pytest.raises(BackendError, match="malformed"):
        backend.complete(req(categorical_task()))

    calls = []

    def refuse(r):
        calls.append(json.loads(r.content))
        raise httpx.ConnectError("refused")

    flaky = HttpBackend(HttpConfig("http://stub", "m", max_retries=1), client=httpx.Client(transport=httpx.MockTransport(refuse)), sleep=lambda s: None)
    with pytest.raises(BackendError, match="network"):
        flaky.complete(req(categorical_task()))
    assert len(calls) == 2
