"""Domain types shared across the package.

Every type here is an immutable value with ``to_dict``/``from_dict`` helpers
that define the JSONL wire format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

KINDS = ("categorical", "numeric", "text")


class ValidationError(ValueError):
    """An invariant of a domain value does not hold."""


@dataclass(frozen=True)
class Answer:
    """One extracted answer.

    ``value`` is a label string for categorical answers, a ``Fraction`` for
    numeric answers (or, for boxed expressions that are not plain numbers,
    the stripped expression string), and the payload string for text.
    """

    kind: str
    value: Fraction | str

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown answer kind {self.kind!r}")
        if self.kind == "numeric":
            if isinstance(self.value, int) and not isinstance(self.value, bool):
                object.__setattr__(self, "value", Fraction(self.value))
            if not isinstance(self.value, (Fraction, str)):
                raise ValidationError("numeric answer needs a Fraction payload")
            if isinstance(self.value, str) and not self.value:
                raise ValidationError("empty numeric expression")
        elif not isinstance(self.value, str):
            raise ValidationError(f"{self.kind} answer needs a string payload")

    @property
    def is_rational(self) -> bool:
        return isinstance(self.value, Fraction)

    @property
    def numerator(self) -> int:
        assert isinstance(self.value, Fraction)
        return self.value.numerator

    @property
    def denominator(self) -> int:
        assert isinstance(self.value, Fraction)
        return self.value.denominator

    def summary(self) -> str:
        """Compact string form used in records and reports."""
        return str(self.value)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "value": str(self.value)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Answer:
        kind = d["kind"]
        if kind == "numeric":
            return parse_numeric(str(d["value"]))
        return cls(kind, str(d["value"]))


def canonical_rational(numerator: int, denominator: int) -> Answer:
    """Numeric answer in lowest terms with a positive denominator."""
    if denominator == 0:
        raise ValidationError("zero denominator")
    return Answer("numeric", Fraction(int(numerator), int(denominator)))


def parse_number(text: str) -> Fraction | None:
    """Parse an integer, decimal, or ``p/q`` string; ``None`` if it is not one."""
    s = text.strip().replace(",", "").replace(" ", "")
    s = s.strip("$")
    if s.startswith("+"):
        s = s[1:]
    if not s:
        return None
    try:
        value = Fraction(s)
    except (ValueError, ZeroDivisionError):
        return None
    return value


def parse_numeric(text: str) -> Answer:
    """Numeric answer from text; non-numeric expressions keep their string form."""
    value = parse_number(text)
    if value is not None:
        return Answer("numeric", value)
    expr = "".join(text.split())
    if not expr:
        raise ValidationError("empty numeric expression")
    return Answer("numeric", expr)


@dataclass(frozen=True)
class Task:
    id: str
    prompt: str
    kind: str
    option_labels: tuple[str, ...] | None = None
    gold: Answer | None = None
    steps: tuple[Any, ...] = ()
    stages: tuple[int, ...] = ()
    meta: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"id": self.id, "prompt": self.prompt, "kind": self.kind}
        if self.option_labels is not None:
            d["options"] = list(self.option_labels)
        if self.gold is not None:
            d["gold"] = self.gold.summary()
        if self.steps:
            d["steps"] = [s if isinstance(s, str) else dict(s) for s in self.steps]
        if self.stages:
            d["stages"] = list(self.stages)
        if self.meta:
            d["meta"] = dict(self.meta)
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Task:
        try:
            kind = d["kind"]
            task_id = d["id"]
            prompt = d["prompt"]
        except KeyError as exc:
            raise ValidationError(f"task missing field {exc.args[0]!r}") from None
        if kind not in KINDS:
            raise ValidationError(f"unknown task kind {kind!r}")
        options = d.get("options")
        gold = d.get("gold")
        if isinstance(gold, Mapping):
            gold_answer = Answer.from_dict(gold)
        elif gold is None:
            gold_answer = None
        elif kind == "numeric":
            gold_answer = parse_numeric(str(gold))
        else:
            gold_answer = Answer(kind, str(gold))
        steps = tuple(s if isinstance(s, str) else dict(s) for s in d.get("steps", ()))
        return cls(
            id=str(task_id),
            prompt=str(prompt),
            kind=kind,
            option_labels=tuple(str(o) for o in options) if options is not None else None,
            gold=gold_answer,
            steps=steps,
            stages=tuple(int(k) for k in d.get("stages", ())),
            meta=dict(d.get("meta", {})),
        )


def validate_task(task: Task) -> None:
    """Raise ``ValidationError`` naming the first violated invariant."""
    if not task.id:
        raise ValidationError("task id must be non-empty")
    if task.kind not in KINDS:
        raise ValidationError(f"unknown task kind {task.kind!r}")
    if task.kind == "categorical":
        if not task.option_labels:
            raise ValidationError("options required for categorical task")
        if len(set(task.option_labels)) != len(task.option_labels):
            raise ValidationError("duplicate option labels")
    if task.gold is not None:
        if task.gold.kind != task.kind:
            raise ValidationError("gold kind mismatch")
        if task.kind == "categorical" and task.gold.value not in task.option_labels:
            raise ValidationError("gold label not among options")


def validate_task_set(tasks: Iterable[Task]) -> None:
    seen: set[str] = set()
    for task in tasks:
        validate_task(task)
        if task.id in seen:
            raise ValidationError(f"duplicate task id {task.id!r}")
        seen.add(task.id)


def load_tasks(path: str | Path) -> list[Task]:
    """Read and validate a task JSONL file."""
    tasks = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                task = Task.from_dict(json.loads(line))
                validate_task(task)
            except (json.JSONDecodeError, KeyError, TypeError, ValidationError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            if task.id in seen:
                raise ValidationError(f"{path}:{lineno}: duplicate task id {task.id!r}")
            seen.add(task.id)
            tasks.append(task)
    return tasks


def write_tasks(tasks: Iterable[Task], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for task in tasks:
            fh.write(json.dumps(task.to_dict(), ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class SamplingParams:
    n: int = 40
    temperature: float = 1.0
    top_p: float = 1.0
    max_in_flight: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValidationError("n must be >= 1")
        if self.max_in_flight < 1:
            raise ValidationError("max_in_flight must be >= 1")
        if not 0 < self.top_p <= 1:
            raise ValidationError("top_p must be in (0, 1]")
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_in_flight": self.max_in_flight,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SamplingParams:
        return cls(
            n=int(d["n"]),
            temperature=float(d["temperature"]),
            top_p=float(d["top_p"]),
            max_in_flight=int(d["max_in_flight"]),
            seed=int(d["seed"]),
        )


@dataclass(frozen=True)
class Sample:
    index: int
    raw_text: str
    answer: Answer | None
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: int = 0
    backend_id: str = ""

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "raw_text": self.raw_text,
            "answer": self.answer.to_dict() if self.answer is not None else None,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "latency_ms": self.latency_ms,
            "backend_id": self.backend_id,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Sample:
        ans = d.get("answer")
        return cls(
            index=int(d["index"]),
            raw_text=d["raw_text"],
            answer=Answer.from_dict(ans) if ans is not None else None,
            prompt_tokens=int(d["prompt_tokens"]),
            completion_tokens=int(d["completion_tokens"]),
            latency_ms=int(d["latency_ms"]),
            backend_id=d["backend_id"],
        )


@dataclass(frozen=True)
class SampleSet:
    task_id: str
    samples: tuple[Sample, ...]
    params: SamplingParams

    def __post_init__(self) -> None:
        if len(self.samples) > self.params.n:
            raise ValidationError("more samples than params.n")
        for i, s in enumerate(self.samples):
            if s.index != i:
                raise ValidationError("sample indices must be 0..len-1 without gaps")

    def prefix(self, m: int) -> SampleSet:
        return SampleSet(self.task_id, self.samples[:m], self.params)

    def to_dict(self) -> dict[str, Any]:
        return {
            "task_id": self.task_id,
            "samples": [s.to_dict() for s in self.samples],
            "params": self.params.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SampleSet:
        return cls(
            task_id=d["task_id"],
            samples=tuple(Sample.from_dict(s) for s in d["samples"]),
            params=SamplingParams.from_dict(d["params"]),
        )


@dataclass(frozen=True)
class VoteResult:
    winner: Answer | None
    winner_index: int | None
    scores: tuple[tuple[int, float], ...]
    tie: bool
    n_extracted: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "winner": self.winner.to_dict() if self.winner is not None else None,
            "winner_index": self.winner_index,
            "scores": [[i, s] for i, s in self.scores],
            "tie": self.tie,
            "n_extracted": self.n_extracted,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> VoteResult:
        w = d.get("winner")
        return cls(
            winner=Answer.from_dict(w) if w is not None else None,
            winner_index=d.get("winner_index"),
            scores=tuple((int(i), float(s)) for i, s in d["scores"]),
            tie=bool(d["tie"]),
            n_extracted=int(d["n_extracted"]),
        )


@dataclass(frozen=True)
class SampleSummary:
    answer: str | None
    prompt_tokens: int
    completion_tokens: int


@dataclass(frozen=True)
class CurveEntry:
    m: int
    answer: str | None
    correct: bool | None


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one ensemble run on one task.

    ``wall_ms`` is kept on the object but left out of the JSONL line by
    default so record files stay byte-reproducible.
    """

    run_id: str
    task_id: str
    params: SamplingParams
    per_sample: tuple[SampleSummary, ...]
    vote_curve: tuple[CurveEntry, ...]
    correct_at_full: bool | None
    wall_ms: int = 0

    def __post_init__(self) -> None:
        ms = [e.m for e in self.vote_curve]
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValidationError("vote_curve sizes must be strictly increasing")
        if ms and ms[-1] > self.params.n:
            raise ValidationError("vote_curve size exceeds params.n")

    def correct_at(self, m: int) -> bool | None:
        for entry in self.vote_curve:
            if entry.m == m:
                return entry.correct
        raise KeyError(m)

    def to_dict(self, include_wall: bool = False) -> dict[str, Any]:
        d: dict[str, Any] = {
            "run_id": self.run_id,
            "task_id": self.task_id,
            "params": self.params.to_dict(),
            "per_sample": [
                {"answer": s.answer, "prompt_tokens": s.prompt_tokens, "completion_tokens": s.completion_tokens}
                for s in self.per_sample
            ],
            "vote_curve": [{"m": e.m, "answer": e.answer, "correct": e.correct} for e in self.vote_curve],
            "correct_at_full": self.correct_at_full,
        }
        if include_wall:
            d["wall_ms"] = self.wall_ms
        return d

    def to_json(self, include_wall: bool = False) -> str:
        return json.dumps(self.to_dict(include_wall), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> RunRecord:
        return cls(
            run_id=str(d["run_id"]),
            task_id=str(d["task_id"]),
            params=SamplingParams.from_dict(d["params"]),
            per_sample=tuple(
                SampleSummary(s["answer"], int(s["prompt_tokens"]), int(s["completion_tokens"]))
                for s in d["per_sample"]
            ),
            vote_curve=tuple(CurveEntry(int(e["m"]), e["answer"], e["correct"]) for e in d["vote_curve"]),
            correct_at_full=d["correct_at_full"],
            wall_ms=int(d.get("wall_ms", 0)),
        )


def write_records(records: Iterable[RunRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def iter_records(path: str | Path) -> Iterator[RunRecord]:
    """Yield records from a JSONL file; malformed lines raise naming the line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield RunRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{path}:{lineno}: malformed record ({exc})") from None


def answers_equal(a: Answer | None, b: Answer | None) -> bool:
    """Equivalence used for voting and grading: rational equality for numbers."""
    if a is None or b is None:
        return False
    return a.kind == b.kind and a.value == b.value

