"""Sampling and voting on a single question.

A simulated agent answers a four-option question correctly 35% of the time
and otherwise picks one of the three wrong options at random. One sample is
a coin flip; forty samples and a plurality vote are far more reliable.
"""

from __future__ import annotations

from samplevote import Answer, SamplingParams, SimAgentModel, SimulatedBackend, Task, run_vanilla, sample_phase, vote
from samplevote.ensemble import BLEU
from samplevote.core import Sample

task = Task("demo", "Which option is right? Answer as (X).", "categorical", ("A", "B", "C", "D"), Answer("categorical", "C"))
agent = SimulatedBackend(SimAgentModel(p_correct=0.35, k_wrong=3))

samples = sample_phase(agent, task, SamplingParams(n=40, seed=1))
print("first ten raw answers:", [s.answer.value for s in samples.samples[:10]])
result = vote(samples)
print(f"vote winner: {result.winner.value} (sample #{result.winner_index}), tie={result.tie}")

# the record keeps the vote at every prefix size, so one run yields a whole curve
_, record = run_vanilla(agent, task, SamplingParams(n=40, seed=1))
print("correct at m=1, 5, 10, 40:", [record.correct_at(m) for m in (1, 5, 10, 40)])

# open-ended answers are compared with sentence BLEU instead of equality
code = ["print(sum(range(10)))", "print(sum(range(10)))", "print(sum(range(11)))", "x = 45\nprint(x)"]
res = vote([Sample(i, c, Answer("text", c)) for i, c in enumerate(code)], BLEU)
print("BLEU scores:", [round(s, 3) for _, s in res.scores], "-> winner:", repr(res.winner.value))
