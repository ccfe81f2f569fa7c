"""Accuracy against ensemble size, with the exact plurality odds and an ANOVA.

We run the flat agent over ten tasks and ten runs, build the curve at a few
ensemble sizes, compare the small sizes with exact enumeration, and test
whether the sizes differ.
"""

from __future__ import annotations

from samplevote import Answer, SamplingParams, SimAgentModel, SimulatedBackend, Task, curve, plurality_oracle, run_vanilla
from samplevote.stats import one_way_anova, run_accuracies

q, k = 0.35, 3
agent = SimulatedBackend(SimAgentModel(p_correct=q, k_wrong=k))
tasks = [Task(f"q{i}", f"Question {i}", "categorical", tuple("ABCD"), Answer("categorical", "ABCD"[i % 4])) for i in range(10)]

records = []
for run in range(10):
    params = SamplingParams(n=40, seed=run)
    records += [run_vanilla(agent, t, params, run_id=str(run))[1] for t in tasks]

print(" m   mean    se    exact")
for p in curve(records, [1, 3, 5, 7, 10, 20, 30, 40]):
    exact = f"{plurality_oracle(q, k, p.m):.3f}" if p.m <= 12 else "  -  "
    print(f"{p.m:2d}  {p.mean_accuracy:.3f}  {p.std_error:.3f}  {exact}")

groups = [list(run_accuracies(records, m).values()) for m in (1, 10, 20, 30, 40)]
res = one_way_anova(groups)
print(f"ANOVA over sizes 1,10,20,30,40: F={res.f_stat:.2f}, p={res.p_value:.2g}")
