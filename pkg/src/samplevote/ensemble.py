"""Sampling and cumulative-similarity voting.

``sample_phase`` queries a backend ``n`` times for one task; ``vote`` scores
each sample by the sum of its similarity to every other sample and returns
the argmax. ``run_vanilla`` composes the two and records a prefix-vote curve.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .backends import Backend, BackendError, Completion, CompletionRequest
from .bleu import BleuParams, bleu_tokens, tokenize
from .core import (
    Answer,
    CurveEntry,
    RunRecord,
    Sample,
    SampleSet,
    SampleSummary,
    SamplingParams,
    Task,
    ValidationError,
    VoteResult,
    answers_equal,
    validate_task,
)
from .extract import extract_answer
from .rng import derive_seed

# (backend, task, request) -> completion; replaces the single backend call
CallHook = Callable[[Backend, Task, CompletionRequest], Completion]


@dataclass(frozen=True)
class SimilarityKind:
    variant: str

    def __post_init__(self) -> None:
        if self.variant not in ("frequency", "bleu"):
            raise ValidationError(f"unknown similarity {self.variant!r}")

    @classmethod
    def for_task(cls, task: Task) -> SimilarityKind:
        return cls("bleu" if task.kind == "text" else "frequency")


FREQUENCY = SimilarityKind("frequency")
BLEU = SimilarityKind("bleu")


def _default_call(backend: Backend, task: Task, req: CompletionRequest) -> Completion:
    return backend.complete(req)


def sample_phase(
    backend: Backend,
    task: Task,
    params: SamplingParams,
    call: CallHook | None = None,
) -> SampleSet:
    """Collect ``params.n`` samples, placed by index whatever the completion order.

    A call that fails for good becomes an answer-less sample whose
    ``raw_text`` carries the error; only total failure raises.
    """
    validate_task(task)
    call = call or _default_call

    def one(i: int) -> Sample:
        req = CompletionRequest(task.prompt, params.temperature, params.top_p, i, params.seed, task.id, task)
        try:
            c = call(backend, task, req)
        except (BackendError, ValidationError) as exc:
            return Sample(i, f"[error] {exc}", None, 0, 0, 0, backend.backend_id)
        return Sample(
            i, c.raw_text, extract_answer(c.raw_text, task),
            c.prompt_tokens, c.completion_tokens, c.latency_ms, backend.backend_id,
        )

    if params.max_in_flight == 1 or params.n == 1:
        samples = [one(i) for i in range(params.n)]
    else:
        with ThreadPoolExecutor(max_workers=min(params.max_in_flight, params.n)) as pool:
            samples = list(pool.map(one, range(params.n)))
    if all(s.raw_text.startswith("[error]") and s.answer is None for s in samples):
        raise BackendError(f"all {params.n} calls failed for task {task.id!r}: {samples[0].raw_text}")
    return SampleSet(task.id, tuple(samples), params)


def similarity_matrix(
    samples: Sequence[Sample], kind: SimilarityKind, bleu: BleuParams = BleuParams()
) -> np.ndarray:
    """Pairwise ``sim(s_i, s_j)``; rows are the candidate, diagonal is zero."""
    n = len(samples)
    sim = np.zeros((n, n))
    if kind.variant == "frequency":
        codes: dict[Answer, int] = {}
        # answer-less samples get unique negative codes so they match nothing
        ids = np.array([codes.setdefault(s.answer, len(codes)) if s.answer is not None else -1 - k
                        for k, s in enumerate(samples)])
        sim = (ids[:, None] == ids[None, :]).astype(float)
        np.fill_diagonal(sim, 0.0)
        return sim
    toks = [tokenize(str(s.answer.value)) if s.answer is not None else [] for s in samples]
    for i in range(n):
        for j in range(n):
            if i != j and toks[i] and toks[j]:
                sim[i, j] = bleu_tokens(toks[i], toks[j], bleu)
    return sim


def vote_from_matrix(samples: Sequence[Sample], sim: np.ndarray) -> VoteResult:
    if not samples:
        raise ValidationError("cannot vote over an empty sample set")
    usable = [i for i, s in enumerate(samples) if s.answer is not None]
    if not usable:
        return VoteResult(None, None, (), False, 0)
    sub = sim[np.ix_(usable, usable)]
    totals = sub.sum(axis=1)
    scores = tuple((samples[i].index, float(t)) for i, t in zip(usable, totals))
    best = max(t for _, t in scores)
    # exact float ties: every row is summed in the same fixed order
    top = [k for k, (_, t) in enumerate(scores) if t == best]
    winner_pos = usable[top[0]]
    distinct: list[Answer] = []
    for k in top:
        a = samples[usable[k]].answer
        if not any(answers_equal(a, d) for d in distinct):
            distinct.append(a)
    return VoteResult(samples[winner_pos].answer, samples[winner_pos].index, scores, len(distinct) > 1, len(usable))


def vote(samples: SampleSet | Sequence[Sample], kind: SimilarityKind = FREQUENCY, bleu: BleuParams = BleuParams()) -> VoteResult:
    seq = samples.samples if isinstance(samples, SampleSet) else tuple(samples)
    if not seq:
        raise ValidationError("cannot vote over an empty sample set")
    return vote_from_matrix(seq, similarity_matrix(seq, kind, bleu))


def is_correct(winner: Answer | None, task: Task) -> bool | None:
    """Grade a voted answer; ``None`` when the task has no gold."""
    if task.gold is None:
        return None
    return answers_equal(winner, task.gold)


def prefix_curve(
    sset: SampleSet, task: Task, kind: SimilarityKind, bleu: BleuParams = BleuParams()
) -> tuple[list[CurveEntry], list[VoteResult]]:
    """Vote over the first ``m`` samples for every ``m`` in ``1..len``."""
    samples = sset.samples
    sim = similarity_matrix(samples, kind, bleu)
    entries, results = [], []
    for m in range(1, len(samples) + 1):
        res = vote_from_matrix(samples[:m], sim[:m, :m])
        entries.append(CurveEntry(m, res.winner.summary() if res.winner else None, is_correct(res.winner, task)))
        results.append(res)
    return entries, results


def build_record(run_id: str, task: Task, sset: SampleSet, curve: list[CurveEntry], final: VoteResult, wall_ms: int) -> RunRecord:
    return RunRecord(
        run_id=run_id,
        task_id=task.id,
        params=sset.params,
        per_sample=tuple(
            SampleSummary(s.answer.summary() if s.answer else None, s.prompt_tokens, s.completion_tokens)
            for s in sset.samples
        ),
        vote_curve=tuple(curve),
        correct_at_full=is_correct(final.winner, task),
        wall_ms=wall_ms,
    )


def run_vanilla(
    backend: Backend,
    task: Task,
    params: SamplingParams,
    kind: SimilarityKind | None = None,
    run_id: str = "0",
    bleu: BleuParams = BleuParams(),
    fresh_sizes: Sequence[int] | None = None,
    call: CallHook | None = None,
) -> tuple[VoteResult, RunRecord]:
    """Sample then vote.

    By default the curve reuses the first ``m`` of the ``n`` samples. Passing
    ``fresh_sizes`` instead draws an independent sample set for each listed
    size (seeded by ``params.seed`` and the size), which costs far more calls.
    """
    kind = kind or SimilarityKind.for_task(task)
    start = time.monotonic()
    if fresh_sizes is None:
        sset = sample_phase(backend, task, params, call)
        curve, results = prefix_curve(sset, task, kind, bleu)
        final = results[-1]
    else:
        curve = []
        final = None
        sset = None
        for m in sorted(set(fresh_sizes)):
            if not 1 <= m <= params.n:
                raise ValidationError(f"curve size {m} outside 1..{params.n}")
            p = SamplingParams(m, params.temperature, params.top_p, params.max_in_flight, derive_seed(params.seed, "fresh", m))
            sset = sample_phase(backend, task, p, call)
            res = vote(sset, kind, bleu)
            curve.append(CurveEntry(m, res.winner.summary() if res.winner else None, is_correct(res.winner, task)))
            final = res
        assert final is not None and sset is not None
        sset = SampleSet(sset.task_id, sset.samples, params)
    wall = int((time.monotonic() - start) * 1000)
    return final, build_record(run_id, task, sset, curve, final, wall)
