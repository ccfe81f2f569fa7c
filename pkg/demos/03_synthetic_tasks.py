"""The synthetic interval task and the three difficulty properties.

A task asks which of K equal-probability intervals contains a sum of S
products of integers drawn from [-I, I]. The synthetic-aware agent gets worse
as I and S grow (and, with ``prior_weight``, as K grows), which lets us sweep
difficulty and measure the relative gain of voting.
"""

from __future__ import annotations

from samplevote import SimAgentModel, SyntheticSpec, generate, partition, sum_distribution
from samplevote.sweeps import gain_sweep

task = generate(SyntheticSpec(I=10, S=3, K=4, seed=5))
print(task.rendered_prompt)
print("truth:", task.total, "->", task.labels[task.correct_interval])
print()

_, probs = partition(sum_distribution(SyntheticSpec(100, 4, 4)), 4)
print("I=100, S=4, K=4 interval probabilities:", [round(float(p), 5) for p in probs])
print()

# ten runs of 100 episodes per cell, as in the acceptance sweeps (about a minute)
quick = dict(runs=10, tasks_per_run=100, n=40, seed=1)

gains, _ = gain_sweep([(I, 4, 4) for I in (10, 100, 400)], SimAgentModel(mode="synthetic-aware", base_skill=3.5), **quick)
print("gain over inherent difficulty I:", ", ".join(f"I={c.I}: {c.eta:.2f}" for c in gains))

gains, _ = gain_sweep([(10, S, 4) for S in (1, 2, 4, 8)], SimAgentModel(mode="synthetic-aware", base_skill=6.0), **quick)
print("gain over number of steps S:   ", ", ".join(f"S={c.S}: {c.eta:.2f}" for c in gains))

gains, _ = gain_sweep([(10, 4, K) for K in (4, 8, 16, 32)],
                      SimAgentModel(mode="synthetic-aware", base_skill=10.0, prior_weight=1.0), **quick)
print("ensemble accuracy over K:      ", ", ".join(f"K={c.K}: {c.P_m:.2f}" for c in gains))
