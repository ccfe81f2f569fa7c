"""Voting per reasoning step, and coarse-to-fine interval search.

Step-wise voting fixes errors step by step instead of hoping one long chain
is right. Hierarchical voting first picks one of 8 coarse intervals and then
one of the 4 fine intervals inside it, which suits an agent whose hit rate
depends on how many options it faces.
"""

from __future__ import annotations

import numpy as np

from samplevote import Answer, SamplingParams, SimAgentModel, SimulatedBackend, Task, run_vanilla
from samplevote.sweeps import hierarchical_episodes, stepwise_episodes

episodes = 300

step = stepwise_episodes(10, 4, 4, SimAgentModel(mode="stepwise", per_step_p_correct=0.8), episodes, n=15)
flat = SimulatedBackend(SimAgentModel(p_correct=0.8**4))
task = Task("t", "q", "categorical", tuple("ABCD"), Answer("categorical", "A"))
one_shot = [run_vanilla(flat, task, SamplingParams(n=15, seed=e))[1].correct_at_full for e in range(episodes)]
print(f"4 steps, 15 samples: step-wise voting {np.mean(step):.2f} vs voting whole answers {np.mean(one_shot):.2f}")

strong = SimAgentModel(mode="synthetic-aware", base_skill=10.0, prior_weight=1.0)
cheap = SimAgentModel(mode="synthetic-aware", base_skill=6.0, prior_weight=1.0)
direct = hierarchical_episodes(10, 4, [32], [strong], episodes, n=40)
coarse_fine = hierarchical_episodes(10, 4, [8, 32], [strong, strong], episodes, n=40)
mixed = hierarchical_episodes(10, 4, [8, 32], [cheap, strong], episodes, n=40)
print(f"K=32 directly {np.mean(direct):.2f}; 8 then 32 {np.mean(coarse_fine):.2f}; cheap 8 then strong 32 {np.mean(mixed):.2f}")
