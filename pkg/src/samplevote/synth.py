"""Controlled-difficulty interval task.

Given coefficients ``a_i, b_i`` drawn uniformly from ``[-I, I]``, find which
of ``K`` equal-probability intervals contains ``sum(a_i * b_i)`` over
``S`` terms. ``I`` sets arithmetic difficulty, ``S`` the number of steps and
``1/K`` the prior probability of guessing right.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .core import Answer, Task, ValidationError
from .rng import SplitMix64, derive_seed, uniform_block

EXACT_WORK_LIMIT = 10**8
MC_DRAWS = 1_000_000
# np.convolve is exact enough and fast below this many multiply-adds
_DIRECT_CONV_LIMIT = 5 * 10**7


class DegeneratePartition(ValidationError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    I: int
    S: int
    K: int
    seed: int = 0

    def __post_init__(self) -> None:
        if self.I < 1 or self.S < 1:
            raise ValidationError("I and S must be >= 1")
        if self.K < 2:
            raise ValidationError("K must be >= 2")


@dataclass(frozen=True)
class SumDistribution:
    """Distribution of the sum, stored as masses over integer ``support``.

    In monte-carlo mode ``draws`` holds the sorted sample and the masses are
    its empirical frequencies.
    """

    representation: str
    support: np.ndarray
    pmf: np.ndarray
    draws: np.ndarray | None = None

    @property
    def M(self) -> int:
        return 0 if self.draws is None else len(self.draws)

    def cdf_below(self, x: float) -> float:
        """P(sum < x)."""
        return float(self.pmf[: np.searchsorted(self.support, x, side="left")].sum())

    def mean(self) -> float:
        return float(np.dot(self.support, self.pmf))


def product_pmf(I: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact pmf of X*Y for X, Y independent uniform on the integers of [-I, I].

    Returns ``(support, pmf)`` with support ``-I**2 .. I**2``.
    """
    if I < 1:
        raise ValidationError("I must be >= 1")
    vals = np.arange(-I, I + 1, dtype=np.int64)
    prods = np.multiply.outer(vals, vals).ravel()
    counts = np.bincount(prods + I * I, minlength=2 * I * I + 1)
    return np.arange(-I * I, I * I + 1, dtype=np.int64), counts / float((2 * I + 1) ** 2)


def _convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) * len(b) <= _DIRECT_CONV_LIMIT:
        return np.convolve(a, b)
    out = fftconvolve(a, b)
    np.clip(out, 0.0, None, out=out)
    return out / out.sum()


def exact_work(I: int, S: int) -> int:
    return (2 * S * I * I + 1) * S


def draw_sums(I: int, S: int, seed: int, count: int, start: int = 0) -> np.ndarray:
    """``count`` seeded draws of the sum; draw ``d`` uses stream words ``2S*d .. 2S*d+2S-1``."""
    width = 2 * I + 1
    u = uniform_block(seed, start * 2 * S, count * 2 * S).reshape(count, 2 * S)
    coeffs = np.minimum((u * width).astype(np.int64), width - 1) - I
    return (coeffs[:, :S] * coeffs[:, S:]).sum(axis=1)


def sum_distribution(spec: SyntheticSpec, force: str | None = None, draws: int = MC_DRAWS) -> SumDistribution:
    mode = force or ("exact" if exact_work(spec.I, spec.S) <= EXACT_WORK_LIMIT else "monte-carlo")
    if mode == "exact":
        return _exact_distribution(spec.I, spec.S)
    sample = np.sort(draw_sums(spec.I, spec.S, derive_seed("sum-distribution", spec.seed), draws))
    support, counts = np.unique(sample, return_counts=True)
    return SumDistribution("monte-carlo", support, counts / float(draws), sample)


@lru_cache(maxsize=32)
def _exact_distribution(I: int, S: int) -> SumDistribution:
    _, base = product_pmf(I)
    pmf = base
    for _ in range(S - 1):
        pmf = _convolve(pmf, base)
    half = S * I * I
    support = np.arange(-half, half + 1, dtype=np.int64)
    pmf = np.asarray(pmf, dtype=np.float64)
    pmf.setflags(write=False)
    support.setflags(write=False)
    return SumDistribution("exact", support, pmf)


def partition(dist: SumDistribution, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Split the support into ``K`` intervals of (as nearly as possible) equal mass.

    Boundaries sit halfway between adjacent support atoms, at the gap whose
    cumulative mass is nearest ``j/K`` (the lower gap on a tie). Returns
    ``(boundaries, interval_probs)``; interval ``k`` is ``[b_k, b_{k+1})``.
    """
    if K < 2:
        raise ValidationError("K must be >= 2")
    support, pmf = dist.support, dist.pmf
    nz = pmf > 0
    atoms, masses = support[nz], pmf[nz]
    if len(atoms) < K:
        raise DegeneratePartition(f"support has {len(atoms)} atoms, fewer than K={K}")
    cum = np.cumsum(masses)
    cum = cum / cum[-1]
    # gap g lies between atoms[g] and atoms[g+1]; mass below it is cum[g]
    gaps = cum[:-1]
    bounds = [float(atoms[0]) - 0.5]
    for j in range(1, K):
        q = j / K
        g = int(np.searchsorted(gaps, q))
        candidates = [c for c in (g - 1, g) if 0 <= c < len(gaps)]
        best = min(candidates, key=lambda c: (abs(gaps[c] - q), c))
        bounds.append((float(atoms[best]) + float(atoms[best + 1])) / 2.0)
    bounds.append(float(atoms[-1]) + 0.5)
    boundaries = np.array(bounds)
    if np.any(np.diff(boundaries) <= 0):
        raise DegeneratePartition(f"cannot place {K} distinct boundaries; an atom carries too much mass")
    edges = np.searchsorted(atoms, boundaries)
    csum = np.concatenate([[0.0], np.cumsum(masses)])
    probs = np.diff(csum[edges])
    return boundaries, probs / probs.sum()


def locate(value: float, boundaries: Sequence[float]) -> int:
    """Index of the interval containing ``value``; the last interval is closed."""
    b = np.asarray(boundaries)
    if value < b[0] or value > b[-1]:
        raise ValueError(f"{value} outside [{b[0]}, {b[-1]}]")
    return min(int(np.searchsorted(b, value, side="right")) - 1, len(b) - 2)


def interval_label(k: int) -> str:
    return f"Δ_{k + 1}"


def _fmt(x: float) -> str:
    return f"{x:g}" if abs(x) < 1e15 else repr(x)


@dataclass(frozen=True)
class SyntheticTask:
    spec: SyntheticSpec
    a: tuple[int, ...]
    b: tuple[int, ...]
    boundaries: tuple[float, ...]
    correct_interval: int
    interval_probs: tuple[float, ...]
    rendered_prompt: str
    max_prob_deviation: float = field(default=0.0)

    @property
    def total(self) -> int:
        return sum(x * y for x, y in zip(self.a, self.b))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(interval_label(k) for k in range(self.spec.K))

    @property
    def task_id(self) -> str:
        s = self.spec
        return f"synth-I{s.I}-S{s.S}-K{s.K}-{s.seed}"

    def to_task(self) -> Task:
        s = self.spec
        return Task(
            id=self.task_id,
            prompt=self.rendered_prompt,
            kind="categorical",
            option_labels=self.labels,
            gold=Answer("categorical", interval_label(self.correct_interval)),
            meta={"I": s.I, "S": s.S, "K": s.K, "seed": s.seed},
        )

    def sidecar(self) -> dict:
        return {
            "task_id": self.task_id,
            "spec": {"I": self.spec.I, "S": self.spec.S, "K": self.spec.K, "seed": self.spec.seed},
            "a": list(self.a),
            "b": list(self.b),
            "boundaries": list(self.boundaries),
            "interval_probs": list(self.interval_probs),
            "correct_interval": self.correct_interval,
            "max_prob_deviation": self.max_prob_deviation,
        }


def render_prompt(a: Sequence[int], b: Sequence[int], boundaries: Sequence[float], labels: Sequence[str]) -> str:
    terms = " + ".join(f"({x})*({y})" for x, y in zip(a, b))
    lines = [f"Compute {terms}.", "Which interval contains the result?"]
    last = len(labels) - 1
    for k, lab in enumerate(labels):
        close = "]" if k == last else ")"
        lines.append(f"({lab}) [{_fmt(boundaries[k])}, {_fmt(boundaries[k + 1])}{close}")
    lines.append("Finish with the interval label in parentheses, e.g. (Δ_1).")
    return "\n".join(lines)


@lru_cache(maxsize=64)
def _partition_for(I: int, S: int, K: int) -> tuple[tuple[float, ...], tuple[float, ...]]:
    dist = sum_distribution(SyntheticSpec(I, S, K))
    boundaries, probs = partition(dist, K)
    return tuple(boundaries.tolist()), tuple(probs.tolist())


def generate(spec: SyntheticSpec) -> SyntheticTask:
    boundaries, probs = _partition_for(spec.I, spec.S, spec.K)
    rng = SplitMix64(derive_seed("synthetic-task", spec.I, spec.S, spec.K, spec.seed))
    a = tuple(rng.randint(-spec.I, spec.I) for _ in range(spec.S))
    b = tuple(rng.randint(-spec.I, spec.I) for _ in range(spec.S))
    total = sum(x * y for x, y in zip(a, b))
    k = locate(total, boundaries)
    labels = [interval_label(j) for j in range(spec.K)]
    return SyntheticTask(
        spec=spec,
        a=a,
        b=b,
        boundaries=boundaries,
        correct_interval=k,
        interval_probs=probs,
        rendered_prompt=render_prompt(a, b, boundaries, labels),
        max_prob_deviation=max(abs(p - 1.0 / spec.K) for p in probs),
    )


def task_from_meta(task: Task) -> SyntheticTask:
    """Rebuild the synthetic task behind a task loaded from JSONL."""
    try:
        m = task.meta
        return generate(SyntheticSpec(int(m["I"]), int(m["S"]), int(m["K"]), int(m["seed"])))
    except KeyError as exc:
        raise ValidationError(f"task {task.id!r} is not a synthetic task (missing {exc.args[0]})") from None


# --------------------------------------------------------------------------- gains


@dataclass(frozen=True)
class GainCell:
    I: int
    S: int
    K: int
    P_s: float
    P_m: float
    eta: float | None
    se: float | None

    @property
    def undefined(self) -> bool:
        return self.eta is None


GAIN_COLUMNS = ("I", "S", "K", "P_s", "P_m", "eta", "se")


def _gain_cell(I: int, S: int, K: int, singles: Sequence[float], multis: Sequence[float]) -> GainCell:
    ps = np.asarray(singles, dtype=float)
    pm = np.asarray(multis, dtype=float)
    if len(ps) == 0 or len(ps) != len(pm):
        raise ValidationError("each cell needs equally many single and ensemble accuracies")
    Ps, Pm = float(ps.mean()), float(pm.mean())
    if Ps == 0:
        return GainCell(I, S, K, Ps, Pm, None, None)
    eta = (Pm - Ps) / Ps
    r = len(ps)
    if r < 2:
        return GainCell(I, S, K, Ps, Pm, eta, 0.0)
    # delta method on the paired run means
    cov = np.cov(np.vstack([pm, ps]), ddof=1) / r
    g = np.array([1.0 / Ps, -Pm / Ps**2])
    se = float(math.sqrt(max(0.0, g @ cov @ g)))
    return GainCell(I, S, K, Ps, Pm, eta, se)


def gain_matrix(results: Iterable[tuple[SyntheticSpec | tuple[int, int, int], Sequence[float], Sequence[float]]]) -> list[GainCell]:
    """Relative gain per grid cell from per-run single and ensemble accuracies."""
    cells = []
    for spec, singles, multis in results:
        I, S, K = (spec.I, spec.S, spec.K) if isinstance(spec, SyntheticSpec) else spec
        cells.append(_gain_cell(I, S, K, singles, multis))
    return cells


def write_gain_csv(cells: Iterable[GainCell], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(GAIN_COLUMNS)
        for c in cells:
            w.writerow([
                c.I, c.S, c.K, f"{c.P_s:.6f}", f"{c.P_m:.6f}",
                "undefined" if c.eta is None else f"{c.eta:.6f}",
                "undefined" if c.se is None else f"{c.se:.6f}",
            ])


def read_gain_csv(path: str | Path) -> list[GainCell]:
    cells = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != GAIN_COLUMNS:
            raise ValidationError(f"{path}: not a gain CSV")
        opt = lambda v: None if v == "undefined" else float(v)  # noqa: E731
        for line, row in enumerate(reader, start=2):
            try:
                cells.append(GainCell(int(row["I"]), int(row["S"]), int(row["K"]), float(row["P_s"]),
                                      float(row["P_m"]), opt(row["eta"]), opt(row["se"])))
            except (TypeError, ValueError):
                raise ValidationError(f"{path}:{line}: malformed gain row") from None
    return cells
