"""Ensembles built on top of plain sampling-and-voting.

* ``run_composed`` wraps any prompting or multi-agent method as a black box
  and votes over its ``n`` executions.
* ``run_stepwise`` votes each step of a decomposed task separately, feeding
  the voted result of one step into the next.
* ``run_hierarchical`` answers a ``K``-way interval question coarse-to-fine,
  voting first over merged intervals and then among the children of the
  winner, optionally with a different backend per stage.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .backends import Backend
from .bleu import BleuParams
from .core import Answer, RunRecord, SamplingParams, Task, ValidationError, VoteResult, answers_equal
from .ensemble import CallHook, SimilarityKind, build_record, prefix_curve, run_vanilla, sample_phase, vote
from .synth import SyntheticTask, interval_label, render_prompt

DEBATE_CAP = 10


class StepFailure(RuntimeError):
    """A step or stage vote produced no winner."""

    def __init__(self, index: int, what: str = "step") -> None:
        super().__init__(f"{what} {index} produced no vote winner")
        self.index = index


# --------------------------------------------------------------------------- composed


@dataclass(frozen=True)
class ComposedMethod:
    """A method treated as an opaque function of the task.

    ``transform`` rewrites the task before sampling (must be deterministic);
    ``driver`` replaces the single backend call, e.g. with a debate round-trip.
    ``cap`` limits the ensemble size; debate defaults to 10.
    """

    method_id: str
    transform: Callable[[Task], Task] | None = None
    driver: CallHook | None = None
    cap: int | None = None

    @property
    def effective_cap(self) -> int | None:
        if self.cap is not None:
            return self.cap
        return DEBATE_CAP if self.method_id == "debate" else None

    @classmethod
    def identity(cls) -> ComposedMethod:
        return cls("identity")

    @classmethod
    def prompt_suffix(cls, method_id: str, suffix: str) -> ComposedMethod:
        return cls(method_id, transform=lambda t: replace(t, prompt=f"{t.prompt}\n{suffix}"))


ZERO_SHOT_COT = ComposedMethod.prompt_suffix("zs-cot", "Let's think step by step.")


def run_composed(
    method: ComposedMethod,
    backend: Backend,
    task: Task,
    params: SamplingParams,
    kind: SimilarityKind | None = None,
    run_id: str = "0",
    bleu: BleuParams = BleuParams(),
) -> tuple[VoteResult, RunRecord]:
    cap = method.effective_cap
    if cap is not None and params.n > cap:
        params = replace(params, n=cap)
    work = method.transform(task) if method.transform else task
    if work.id != task.id or work.gold != task.gold:
        raise ValidationError("a transform may rewrite the prompt but not the task id or gold")
    return run_vanilla(backend, work, params, kind, run_id, bleu, call=method.driver)


# --------------------------------------------------------------------------- step-wise


@dataclass(frozen=True)
class Step:
    """One step of a plan.

    ``gold`` is either a fixed answer or a function of the answers voted for
    the earlier steps; the simulated agent needs it, real backends do not.
    """

    prompt: str
    kind: str = "numeric"
    option_labels: tuple[str, ...] | None = None
    gold: Answer | Callable[[Sequence[Answer]], Answer] | None = None

    def gold_for(self, resolved: Sequence[Answer]) -> Answer | None:
        return self.gold(resolved) if callable(self.gold) else self.gold


@dataclass
class StepPlan:
    steps: list[Step]
    current: int = 0
    context: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0 <= self.current <= len(self.steps):
            raise ValidationError("step cursor out of range")

    @property
    def done(self) -> bool:
        return self.current >= len(self.steps)

    def context_text(self) -> str:
        return "\n".join(f"Result of step {i + 1}: {r}" for i, r in enumerate(self.context))


def plan_from_task(task: Task) -> StepPlan:
    """Plan from a task's ``steps`` entries (strings or ``{"prompt", "gold"}`` objects).

    Each step inherits the task's kind and options; the last step inherits
    the task's gold unless it names its own.
    """
    if not task.steps:
        raise ValidationError(f"task {task.id!r} has no steps")
    steps = []
    for i, entry in enumerate(task.steps):
        last = i == len(task.steps) - 1
        if isinstance(entry, str):
            prompt, gold = entry, None
        else:
            prompt = entry["prompt"]
            gold = Task.from_dict({"id": "x", "prompt": "", "kind": task.kind, "gold": entry["gold"]}).gold if "gold" in entry else None
        if gold is None and last:
            gold = task.gold
        steps.append(Step(prompt, task.kind, task.option_labels, gold))
    return StepPlan(steps)


def synthetic_plan(st: SyntheticTask) -> StepPlan:
    """One multiply-and-accumulate per step; each step's correct answer
    depends on the running total voted so far, so errors carry forward."""
    steps = []
    for t, (x, y) in enumerate(zip(st.a, st.b)):
        def gold(resolved: Sequence[Answer], x: int = x, y: int = y, t: int = t) -> Answer:
            prev = resolved[t - 1].value if t else 0
            return Answer("numeric", prev + x * y) if not isinstance(prev, str) else Answer("numeric", f"{prev}+{x * y}")

        steps.append(Step(f"Add ({x})*({y}) to the running total and give the new total as boxed{{...}}.", gold=gold))
    return StepPlan(steps)


@dataclass(frozen=True)
class StepwiseResult:
    step_votes: tuple[VoteResult, ...]
    final: VoteResult
    record: RunRecord
    context: tuple[str, ...]


def run_stepwise(
    backend: Backend,
    task: Task | SyntheticTask,
    params: SamplingParams,
    kind: SimilarityKind | None = None,
    plan: StepPlan | None = None,
    step_n: int | None = None,
    run_id: str = "0",
    bleu: BleuParams = BleuParams(),
) -> StepwiseResult:
    """Vote every step in order, appending each voted result to the context.

    ``step_n`` is the ensemble size per step (default ``params.n``). The
    record's curve is the final step's prefix curve; correctness is judged
    against the last step's gold given correct earlier steps, i.e. the true
    final result.
    """
    if isinstance(task, SyntheticTask):
        plan = plan or synthetic_plan(task)
        base = task.to_task()
        true_final: Answer | None = Answer("numeric", task.total)
    else:
        plan = plan or plan_from_task(task)
        base = task
        true_final = None
    if not plan.steps:
        raise ValidationError("a step plan needs at least one step")
    step_params = replace(params, n=step_n) if step_n else params
    start = time.monotonic()
    resolved: list[Answer] = []
    votes: list[VoteResult] = []
    sset = None
    step_task = base
    while not plan.done:
        t = plan.current
        step = plan.steps[t]
        prompt = "\n".join(p for p in (base.prompt, plan.context_text(), f"Step {t + 1}: {step.prompt}") if p)
        step_task = Task(
            id=f"{base.id}/step{t + 1}",
            prompt=prompt,
            kind=step.kind,
            option_labels=step.option_labels,
            gold=step.gold_for(resolved),
            meta=dict(base.meta),
        )
        sset = sample_phase(backend, step_task, step_params)
        res = vote(sset, kind or SimilarityKind.for_task(step_task), bleu)
        if res.winner is None:
            raise StepFailure(t)
        votes.append(res)
        resolved.append(res.winner)
        plan.context.append(res.winner.summary())
        plan.current += 1
    assert sset is not None
    if true_final is None:
        # the last step's gold given correct predecessors is the task's answer
        true_final = plan.steps[-1].gold_for(_ideal_history(plan, resolved))
    graded = replace(step_task, gold=true_final)
    curve, _ = prefix_curve(sset, graded, kind or SimilarityKind.for_task(graded), bleu)
    record = build_record(run_id, base, sset, curve, votes[-1], int((time.monotonic() - start) * 1000))
    record = replace(record, correct_at_full=answers_equal(votes[-1].winner, true_final) if true_final else None)
    return StepwiseResult(tuple(votes), votes[-1], record, tuple(plan.context))


def _ideal_history(plan: StepPlan, resolved: Sequence[Answer]) -> list[Answer]:
    """Step golds assuming every earlier step was answered correctly."""
    ideal: list[Answer] = []
    for step in plan.steps[:-1]:
        g = step.gold_for(ideal)
        if g is None:
            return list(resolved[:-1])
        ideal.append(g)
    return ideal


# --------------------------------------------------------------------------- hierarchical


@dataclass(frozen=True)
class HierarchySpec:
    stages: tuple[int, ...]
    per_stage_backend: tuple[Backend, ...] = ()

    def __post_init__(self) -> None:
        if not self.stages:
            raise ValidationError("a hierarchy needs at least one stage")
        for lo, hi in zip(self.stages, self.stages[1:]):
            if hi < lo or hi % lo:
                raise ValidationError("each stage K must be a multiple of the previous one")
        if self.per_stage_backend and len(self.per_stage_backend) != len(self.stages):
            raise ValidationError("need one backend per stage")

    def backend_for(self, stage: int, default: Backend | None) -> Backend:
        if self.per_stage_backend:
            return self.per_stage_backend[stage]
        if default is None:
            raise ValidationError("no backend given for the hierarchy")
        return default


@dataclass(frozen=True)
class HierarchicalResult:
    stage_votes: tuple[VoteResult, ...]
    stage_candidates: tuple[tuple[int, ...], ...]
    final: VoteResult
    final_interval: int
    record: RunRecord


def _group_label(lo: int, hi: int) -> str:
    return interval_label(lo) if hi - lo == 1 else f"{interval_label(lo)}..{interval_label(hi - 1)}"


def _distance(block: tuple[int, int], k: int) -> int:
    lo, hi = block
    return 0 if lo <= k < hi else min(abs(k - lo), abs(k - (hi - 1)))


def run_hierarchical(
    spec: HierarchySpec,
    task: SyntheticTask,
    params: SamplingParams,
    kind: SimilarityKind | None = None,
    backend: Backend | None = None,
    run_id: str = "0",
) -> HierarchicalResult:
    """Coarse-to-fine interval search.

    Stage ``t`` with ``K_t`` intervals groups the task's ``K`` fine intervals
    into ``K_t`` equal-probability blocks of ``K / K_t`` consecutive ones.
    The first stage votes over all blocks; each later stage only offers the
    blocks inside the previous winner. When an earlier stage was wrong the
    offered blocks cannot contain the answer; the stage gold then names the
    nearest block so a simulated agent still has something to aim at, and
    the run is graded wrong regardless.
    """
    K = task.spec.K
    if spec.stages[-1] != K:
        raise ValidationError(f"last stage K={spec.stages[-1]} must equal the task's K={K}")
    kind = kind or SimilarityKind("frequency")
    start = time.monotonic()
    base = task.to_task()
    truth = task.correct_interval
    lo, hi = 0, K
    votes: list[VoteResult] = []
    candidates: list[tuple[int, ...]] = []
    for t, Kt in enumerate(spec.stages):
        width = K // Kt
        blocks = [(s, s + width) for s in range(lo, hi, width)]
        candidates.append(tuple(s for s, _ in blocks))
        if t == 0 and Kt == K:
            stage_task = base
        else:
            labels = tuple(_group_label(s, e) for s, e in blocks)
            bounds = [task.boundaries[s] for s, _ in blocks] + [task.boundaries[blocks[-1][1]]]
            nearest = min(range(len(blocks)), key=lambda i: _distance(blocks[i], truth))
            stage_task = Task(
                id=base.id if t == 0 else f"{base.id}/stage{t + 1}",
                prompt=render_prompt(task.a, task.b, bounds, labels),
                kind="categorical",
                option_labels=labels,
                gold=Answer("categorical", labels[nearest]),
                meta=dict(base.meta),
            )
        sset = sample_phase(spec.backend_for(t, backend), stage_task, params)
        res = vote(sset, kind)
        if res.winner is None:
            raise StepFailure(t, "stage")
        votes.append(res)
        lo, hi = blocks[stage_task.option_labels.index(res.winner.value)]
    # the last stage offers single fine intervals, so its labels are fine labels
    graded = replace(stage_task, gold=Answer("categorical", interval_label(truth)))
    curve, _ = prefix_curve(sset, graded, kind)
    record = build_record(run_id, base, sset, curve, votes[-1], int((time.monotonic() - start) * 1000))
    return HierarchicalResult(tuple(votes), tuple(candidates), votes[-1], lo, record)
