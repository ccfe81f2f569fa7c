from __future__ import annotations

import numpy as np
import pytest

from samplevote.backends import SimAgentModel, SimulatedBackend
from samplevote.core import Answer, SamplingParams, Task, ValidationError
from samplevote.ensemble import run_vanilla
from samplevote.pipelines import (
    ZERO_SHOT_COT,
    ComposedMethod,
    HierarchySpec,
    Step,
    StepFailure,
    StepPlan,
    run_composed,
    run_hierarchical,
    run_stepwise,
)
from samplevote.stats import plurality_oracle
from samplevote.synth import SyntheticSpec, generate

from conftest import ScriptedBackend, categorical_task, numeric_task


def test_identity_matches_vanilla_bytewise():
    backend = SimulatedBackend(SimAgentModel(p_correct=0.4))
    params = SamplingParams(n=15, seed=8)
    _, a = run_vanilla(backend, categorical_task(), params)
    _, b = run_composed(ComposedMethod.identity(), backend, categorical_task(), params)
    assert a.to_json() == b.to_json()


def test_zero_shot_cot_suffix_reaches_every_request():
    backend = ScriptedBackend(["(B)"])
    run_composed(ZERO_SHOT_COT, backend, categorical_task(), SamplingParams(n=6))
    assert len(backend.requests) == 6
    assert all(r.prompt.endswith("Let's think step by step.") for r in backend.requests)


def test_debate_caps_at_ten():
    backend = ScriptedBackend(["(B)"])
    _, rec = run_composed(ComposedMethod("debate"), backend, categorical_task(), SamplingParams(n=40))
    assert len(backend.requests) == 10 and rec.params.n == 10
    small = ScriptedBackend(["(B)"])
    run_composed(ComposedMethod("debate"), small, categorical_task(), SamplingParams(n=4))
    assert len(small.requests) == 4


def test_driver_hook_replaces_the_call():
    seen = []

    def driver(backend, task, req):
        seen.append(req.sample_index)
        return backend.complete(req)

    run_composed(ComposedMethod("reflexion", driver=driver), ScriptedBackend(["(A)"]), categorical_task(), SamplingParams(n=3))
    assert sorted(seen) == [0, 1, 2]


def test_transform_may_not_change_gold():
    bad = ComposedMethod("evil", transform=lambda t: Task(t.id, t.prompt, t.kind, t.option_labels, Answer("categorical", "A")))
    with pytest.raises(ValidationError):
        run_composed(bad, ScriptedBackend(["(A)"]), categorical_task(), SamplingParams(n=1))


def test_one_step_plan_is_vanilla_on_rewritten_prompt():
    task = numeric_task(7)
    backend = ScriptedBackend(["boxed{7}", "boxed{8}", "boxed{7}"])
    plan = StepPlan([Step("Give the result.", gold=Answer("numeric", 7))])
    res = run_stepwise(backend, task, SamplingParams(n=3), plan=plan)
    prompt = backend.requests[0].prompt
    rewritten = Task(f"{task.id}/step1", prompt, "numeric", gold=task.gold)
    vres, _ = run_vanilla(ScriptedBackend(["boxed{7}", "boxed{8}", "boxed{7}"]), rewritten, SamplingParams(n=3))
    assert res.final == vres
    assert res.record.correct_at_full


def test_step_context_grows_in_order():
    backend = ScriptedBackend(["boxed{5}"])
    plan = StepPlan([Step(f"step {i}") for i in range(3)])
    res = run_stepwise(backend, numeric_task(5), SamplingParams(n=2), plan=plan)
    assert res.context == ("5", "5", "5")
    prompts = sorted({r.prompt for r in backend.requests}, key=len)
    assert [p.count("Result of step") for p in prompts] == [0, 1, 2]


def test_step_with_no_extractable_answer_fails():
    with pytest.raises(StepFailure):
        run_stepwise(ScriptedBackend(["no idea"]), numeric_task(), SamplingParams(n=2), plan=StepPlan([Step("go")]))


def test_task_steps_from_jsonl_fields():
    task = Task("s", "Solve.", "numeric", gold=Answer("numeric", 9), steps=("first", {"prompt": "second", "gold": "9"}))
    res = run_stepwise(ScriptedBackend(["boxed{9}"]), task, SamplingParams(n=3))
    assert len(res.step_votes) == 2 and res.record.correct_at_full


def _stepwise_accuracy(per_step, k_wrong, S, n, episodes, seed):
    model = SimAgentModel(mode="stepwise", per_step_p_correct=per_step, k_wrong=k_wrong)
    backend = SimulatedBackend(model)
    hits = []
    for e in range(episodes):
        st = generate(SyntheticSpec(10, S, 4, seed=seed + e))
        res = run_stepwise(backend, st, SamplingParams(n=n, max_in_flight=1, seed=e))
        hits.append(res.record.correct_at_full)
    return np.mean(hits)


def test_stepwise_two_steps_exact():
    acc = _stepwise_accuracy(0.6, 1, 2, 3, 1500, seed=0)
    exact = plurality_oracle(0.6, 1, 3) ** 2
    assert exact == pytest.approx(0.648**2)
    assert abs(acc - exact) <= 3 * np.sqrt(exact * (1 - exact) / 1500)


def test_stepwise_beats_flat_end_to_end():
    stepwise = _stepwise_accuracy(0.8, 3, 4, 15, 300, seed=50)
    flat = SimulatedBackend(SimAgentModel(p_correct=0.8**4, k_wrong=3))
    hits = [run_vanilla(flat, categorical_task(), SamplingParams(n=15, max_in_flight=1, seed=e))[1].correct_at_full for e in range(300)]
    assert stepwise > np.mean(hits)


def test_hierarchy_spec_validation():
    with pytest.raises(ValidationError):
        HierarchySpec((8, 12))
    with pytest.raises(ValidationError):
        HierarchySpec(())
    with pytest.raises(ValidationError):
        HierarchySpec((4, 8), (SimulatedBackend(SimAgentModel()),))


MODEL = SimAgentModel(mode="synthetic-aware", base_skill=10.0, prior_weight=1.0)


def test_single_stage_equals_vanilla():
    backend = SimulatedBackend(MODEL)
    for seed in range(20):
        st = generate(SyntheticSpec(10, 4, 32, seed=seed))
        params = SamplingParams(n=9, seed=seed)
        h = run_hierarchical(HierarchySpec((32,)), st, params, backend=backend)
        v, rec = run_vanilla(backend, st.to_task(), params)
        assert h.final == v and h.record.to_json() == rec.to_json()


def _block_start(label: str) -> int:
    # "Δ_5..Δ_8" and "Δ_5" both start at fine interval 4
    return int(label.split("..")[0].split("_")[1]) - 1


def test_candidates_nest_inside_previous_winner():
    backend = SimulatedBackend(MODEL)
    stages = (4, 8, 32)
    for seed in range(30):
        st = generate(SyntheticSpec(10, 4, 32, seed=seed))
        res = run_hierarchical(HierarchySpec(stages), st, SamplingParams(n=5, seed=seed), backend=backend)
        assert res.stage_candidates[0] == (0, 8, 16, 24)
        for t in range(1, len(stages)):
            lo = _block_start(res.stage_votes[t - 1].winner.value)
            width = 32 // stages[t - 1]
            assert all(lo <= c < lo + width for c in res.stage_candidates[t])
        assert res.final_interval == _block_start(res.final.winner.value)


def test_hierarchical_beats_direct():
    backend = SimulatedBackend(MODEL)
    direct, hier = [], []
    for seed in range(200):
        st = generate(SyntheticSpec(10, 4, 32, seed=seed))
        params = SamplingParams(n=40, max_in_flight=1, seed=seed)
        direct.append(run_vanilla(backend, st.to_task(), params)[1].correct_at_full)
        hier.append(run_hierarchical(HierarchySpec((8, 32)), st, params, backend=backend).record.correct_at_full)
    assert np.mean(hier) > np.mean(direct)
