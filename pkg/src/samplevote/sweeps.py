"""Seeded experiment drivers over synthetic tasks with a simulated agent.

Each episode draws a fresh synthetic task (coefficients are resampled per
episode) and runs one ensemble on it. Episodes are grouped into runs so
accuracies can be averaged per run, as in the usual 10-run protocol.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .backends import Backend, SimAgentModel, SimulatedBackend
from .core import SamplingParams
from .ensemble import run_vanilla
from .pipelines import HierarchySpec, run_hierarchical, run_stepwise
from .rng import MASK64, derive_seed
from .synth import GainCell, SyntheticSpec, gain_matrix, generate


@dataclass(frozen=True)
class CellResult:
    I: int
    S: int
    K: int
    singles: tuple[float, ...]  # per-run accuracy at m=1
    multis: tuple[float, ...]  # per-run accuracy at m=n
    episodes: tuple[tuple[bool, bool], ...]  # (single, ensemble) correctness per episode


def _episode_spec(I: int, S: int, K: int, seed: int, run: int, j: int) -> SyntheticSpec:
    return SyntheticSpec(I, S, K, derive_seed("episode", seed, run, j) & MASK64)


def simulate_cell(
    I: int,
    S: int,
    K: int,
    backend: Backend | SimAgentModel,
    runs: int = 10,
    tasks_per_run: int = 100,
    n: int = 40,
    seed: int = 0,
    temperature: float = 0.0,
) -> CellResult:
    if isinstance(backend, SimAgentModel):
        backend = SimulatedBackend(backend)
    singles, multis, episodes = [], [], []
    for r in range(runs):
        params = SamplingParams(n=n, temperature=temperature, max_in_flight=1, seed=(seed + r) & MASK64)
        hits1 = hitsn = 0
        for j in range(tasks_per_run):
            task = generate(_episode_spec(I, S, K, seed, r, j)).to_task()
            _, rec = run_vanilla(backend, task, params, run_id=str(r))
            c1, cn = bool(rec.correct_at(1)), bool(rec.correct_at(n))
            hits1 += c1
            hitsn += cn
            episodes.append((c1, cn))
        singles.append(hits1 / tasks_per_run)
        multis.append(hitsn / tasks_per_run)
    return CellResult(I, S, K, tuple(singles), tuple(multis), tuple(episodes))


def gain_sweep(
    cells: Iterable[tuple[int, int, int]],
    model: SimAgentModel,
    runs: int = 10,
    tasks_per_run: int = 100,
    n: int = 40,
    seed: int = 0,
    temperature: float = 0.0,
) -> tuple[list[GainCell], list[CellResult]]:
    results = [simulate_cell(I, S, K, model, runs, tasks_per_run, n, seed, temperature) for I, S, K in cells]
    gains = gain_matrix(((r.I, r.S, r.K), r.singles, r.multis) for r in results)
    return gains, results


def stepwise_episodes(
    I: int,
    S: int,
    K: int,
    model: SimAgentModel,
    episodes: int,
    n: int,
    seed: int = 0,
) -> list[bool]:
    """Final correctness of step-wise voting on synthetic tasks."""
    backend = SimulatedBackend(model)
    out = []
    for e in range(episodes):
        st = generate(_episode_spec(I, S, K, seed, 0, e))
        params = SamplingParams(n=n, temperature=0.0, max_in_flight=1, seed=derive_seed("stepwise", seed, e))
        out.append(bool(run_stepwise(backend, st, params).record.correct_at_full))
    return out


def hierarchical_episodes(
    I: int,
    S: int,
    stages: Sequence[int],
    backends: Sequence[Backend | SimAgentModel],
    episodes: int,
    n: int,
    seed: int = 0,
) -> list[bool]:
    """Final correctness of coarse-to-fine voting; ``stages[-1]`` is the task's K."""
    bks = tuple(SimulatedBackend(b) if isinstance(b, SimAgentModel) else b for b in backends)
    spec = HierarchySpec(tuple(stages), bks)
    out = []
    for e in range(episodes):
        st = generate(_episode_spec(I, S, stages[-1], seed, 0, e))
        params = SamplingParams(n=n, temperature=0.0, max_in_flight=1, seed=derive_seed("hier", seed, e))
        out.append(bool(run_hierarchical(spec, st, params).record.correct_at_full))
    return out
