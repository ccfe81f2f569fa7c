"""Agent backends: OpenAI-compatible HTTP, a seeded simulated agent, and a replay cache.

Every backend exposes ``backend_id`` and ``complete(request) -> Completion``.
Anything with that shape (a test stub, a debate driver) can stand in.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import random
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol

import httpx

from .core import Answer, Task, ValidationError
from .rng import SplitMix64, derive_seed


class BackendError(RuntimeError):
    """A backend call failed for good (after any retries)."""


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    temperature: float
    top_p: float
    sample_index: int
    run_seed: int
    task_id: str
    # the simulated agent needs the gold answer; never part of the cache key
    task: Task | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValidationError("top_p must be in (0, 1]")

    @property
    def seed(self) -> int:
        return derive_seed(self.run_seed, self.task_id, self.sample_index)


@dataclass(frozen=True)
class Completion:
    raw_text: str
    prompt_tokens: int
    completion_tokens: int
    latency_ms: int = 0


class Backend(Protocol):
    backend_id: str

    def complete(self, req: CompletionRequest) -> Completion: ...


# --------------------------------------------------------------------------- simulated


@dataclass(frozen=True)
class SimAgentModel:
    """Parameters of the simulated agent.

    ``flat`` answers correctly with ``p_correct``. ``synthetic-aware`` reads the
    difficulty of a synthetic interval task from ``task.meta`` and uses

        p_eff = clamp(base_skill / (base_skill + alpha*ln(1+I) + beta*S) * (2/K)**prior_weight, 1/K, 1)
        p_T   = (1 - min(T,2)/2) * p_eff + min(T,2)/2 * (1/K)

    where K is the number of options offered. ``prior_weight=0`` leaves K
    out except through the clamp; ``prior_weight=1`` makes the hit rate
    proportional to the prior 1/K. ``stepwise`` answers one step
    correctly with ``per_step_p_correct``; a task that bundles several steps
    (``meta["steps"]``) is answered correctly with that probability to the
    power of the step count. Wrong answers are uniform over ``k_wrong``
    alternatives.
    """

    mode: str = "flat"
    p_correct: float = 0.5
    k_wrong: int = 3
    base_skill: float = 1.0
    alpha: float = 1.0
    beta: float = 0.25
    prior_weight: float = 0.0
    per_step_p_correct: float = 0.5

    def __post_init__(self) -> None:
        if self.mode not in ("flat", "synthetic-aware", "stepwise"):
            raise ValidationError(f"unknown simulated mode {self.mode!r}")
        for name in ("p_correct", "per_step_p_correct"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValidationError(f"{name} must be in [0, 1]")
        if self.k_wrong < 1:
            raise ValidationError("k_wrong must be >= 1")
        if self.base_skill <= 0:
            raise ValidationError("base_skill must be > 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def synthetic_p_eff(model: SimAgentModel, I: int, S: int, K: int, temperature: float = 0.0) -> float:
    hardness = model.alpha * math.log1p(I) + model.beta * S
    p = model.base_skill / (model.base_skill + hardness) * (2.0 / K) ** model.prior_weight
    p = min(1.0, max(1.0 / K, p))
    t = min(temperature, 2.0) / 2.0
    return (1 - t) * p + t / K


def p_correct_for(model: SimAgentModel, task: Task, temperature: float = 0.0) -> float:
    if model.mode == "flat":
        return model.p_correct
    if model.mode == "stepwise":
        return model.per_step_p_correct ** int(task.meta.get("steps", 1))
    K = len(task.option_labels or ()) or int(task.meta["K"])
    return synthetic_p_eff(model, int(task.meta["I"]), int(task.meta["S"]), K, temperature)


def _wrong_alternatives(model: SimAgentModel, task: Task) -> list[Answer]:
    gold = task.gold
    assert gold is not None
    if task.kind == "categorical":
        others = [lab for lab in task.option_labels or () if lab != gold.value]
        if model.mode != "synthetic-aware":
            others = others[: model.k_wrong]
        return [Answer("categorical", lab) for lab in others]
    if task.kind == "numeric":
        if not gold.is_rational:
            return [Answer("numeric", f"{gold.value}+{j}") for j in range(1, model.k_wrong + 1)]
        return [Answer("numeric", gold.value + j) for j in range(1, model.k_wrong + 1)]
    return [Answer("text", f"{gold.value}\n# variant {j}") for j in range(1, model.k_wrong + 1)]


def render_answer(answer: Answer) -> str:
    """A response in the surface form the extractor expects for this kind."""
    if answer.kind == "categorical":
        return f"Having weighed the options, my answer is ({answer.value})."
    if answer.kind == "numeric":
        return f"Working it through, the result is \\boxed{{{answer.value}}}."
    return f"Here is my solution:\n```python\n{answer.value}\n```"


def sim_respond(model: SimAgentModel, task: Task, seed: int, temperature: float = 0.0) -> str:
    if task.gold is None:
        raise ValidationError(f"simulated agent needs a gold answer (task {task.id!r})")
    rng = SplitMix64(seed)
    u = rng.random()
    if u < p_correct_for(model, task, temperature):
        return render_answer(task.gold)
    wrong = _wrong_alternatives(model, task)
    if not wrong:
        return render_answer(task.gold)
    return render_answer(wrong[rng.randbelow(len(wrong))])


class SimulatedBackend:
    def __init__(self, model: SimAgentModel, backend_id: str = "sim") -> None:
        self.model = model
        self.backend_id = backend_id

    @property
    def model_name(self) -> str:
        return json.dumps(self.model.to_dict(), sort_keys=True)

    def complete(self, req: CompletionRequest) -> Completion:
        if req.task is None:
            raise BackendError("simulated backend needs the task on the request")
        text = sim_respond(self.model, req.task, req.seed, req.temperature)
        return Completion(text, len(req.prompt.split()), len(text.split()), 0)


# --------------------------------------------------------------------------- http


@dataclass(frozen=True)
class HttpConfig:
    base_url: str
    model: str
    api_key_env: str = "OPENAI_API_KEY"
    timeout_ms: int = 60_000
    max_retries: int = 3
    backoff_base_ms: int = 500

    def __post_init__(self) -> None:
        if self.timeout_ms <= 0:
            raise ValidationError("timeout_ms must be > 0")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be >= 0")


def backoff_delay(attempt: int, base_ms: int, rand: Callable[[], float] = random.random) -> float:
    """Full-jitter exponential backoff in seconds for retry number ``attempt`` (0-based)."""
    return rand() * base_ms * (2**attempt) / 1000.0


class HttpBackend:
    """OpenAI-compatible ``/chat/completions`` client, one sample per request."""

    def __init__(
        self,
        config: HttpConfig,
        backend_id: str = "openai",
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.config = config
        self.backend_id = backend_id
        self.model_name = config.model
        self._client = client or httpx.Client(timeout=config.timeout_ms / 1000.0)
        self._sleep = sleep

    def api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env)
        if not key:
            raise BackendError(f"API key env var {self.config.api_key_env} is not set")
        return key

    def complete(self, req: CompletionRequest) -> Completion:
        key = self.api_key()
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        body = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "top_p": req.top_p,
            "n": 1,
        }
        headers = {"Authorization": f"Bearer {key}"}
        last_error = "no attempt made"
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(backoff_delay(attempt - 1, self.config.backoff_base_ms))
            start = time.monotonic()
            try:
                resp = self._client.post(url, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                last_error = f"timeout: {exc}"
                continue
            except httpx.TransportError as exc:
                last_error = f"network error: {exc}"
                continue
            latency = int((time.monotonic() - start) * 1000)
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                data = resp.json()
                text = data["choices"][0]["message"]["content"] or ""
                usage = data.get("usage") or {}
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"malformed chat-completions response: {exc}") from None
            return Completion(
                text, int(usage.get("prompt_tokens", 0)), int(usage.get("completion_tokens", 0)), latency
            )
        raise BackendError(f"giving up after {self.config.max_retries + 1} attempts ({last_error})")


# --------------------------------------------------------------------------- replay


def replay_key(inner_id: str, req: CompletionRequest, model: str = "") -> str:
    payload = json.dumps(
        {
            "inner_id": inner_id,
            "model": model,
            "task_id": req.task_id,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "top_p": req.top_p,
            "sample_index": req.sample_index,
            "run_seed": req.run_seed,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ReplayBackend:
    """Content-addressed response cache in front of another backend.

    Layout: ``<cache_dir>/<key[:2]>/<key>.json``.
    """

    def __init__(self, inner: Backend, cache_dir: str | Path, backend_id: str | None = None) -> None:
        self.inner = inner
        self.cache_dir = Path(cache_dir)
        self.backend_id = backend_id or f"replay:{inner.backend_id}"
        self.model_name = getattr(inner, "model_name", "")
        self.hits = 0
        self.misses = 0

    def path_for(self, key: str) -> Path:
        return self.cache_dir / key[:2] / f"{key}.json"

    def complete(self, req: CompletionRequest) -> Completion:
        key = replay_key(self.inner.backend_id, req, getattr(self.inner, "model_name", ""))
        path = self.path_for(key)
        if path.exists():
            self.hits += 1
            d = json.loads(path.read_text(encoding="utf-8"))
            return Completion(d["raw_text"], d["prompt_tokens"], d["completion_tokens"], d["latency_ms"])
        self.misses += 1
        result = self.inner.complete(req)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(asdict(result), fh, sort_keys=True)
        os.replace(tmp, path)
        return result


# --------------------------------------------------------------------------- config


@dataclass(frozen=True)
class BackendConfig:
    backend_id: str
    variant: str
    http: HttpConfig | None = None
    simulated: SimAgentModel | None = None
    cache_dir: str | None = None
    inner: BackendConfig | None = None

    def __post_init__(self) -> None:
        populated = {
            "http": self.http is not None,
            "simulated": self.simulated is not None,
            "replay": self.cache_dir is not None and self.inner is not None,
        }
        if self.variant not in populated:
            raise ValidationError(f"unknown backend variant {self.variant!r}")
        if not populated[self.variant] or sum(populated.values()) != 1:
            raise ValidationError(f"backend config must populate exactly the {self.variant} payload")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> BackendConfig:
        variant = d["variant"]
        inner = cls.from_dict(d["inner"]) if d.get("inner") else None
        return cls(
            backend_id=d.get("backend_id", variant),
            variant=variant,
            http=HttpConfig(**d["http"]) if d.get("http") else None,
            simulated=SimAgentModel(**d["simulated"]) if d.get("simulated") else None,
            cache_dir=d.get("cache_dir"),
            inner=inner,
        )


def build_backend(config: BackendConfig) -> Backend:
    if config.variant == "http":
        assert config.http is not None
        return HttpBackend(config.http, config.backend_id)
    if config.variant == "simulated":
        assert config.simulated is not None
        return SimulatedBackend(config.simulated, config.backend_id)
    assert config.inner is not None and config.cache_dir is not None
    return ReplayBackend(build_backend(config.inner), config.cache_dir, config.backend_id)


def complete(config: BackendConfig | Backend, req: CompletionRequest) -> Completion:
    backend = build_backend(config) if isinstance(config, BackendConfig) else config
    return backend.complete(req)
