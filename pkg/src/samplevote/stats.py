"""Accuracy curves, relative gain, one-way ANOVA and exact plurality-vote odds."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .core import RunRecord, ValidationError

P_VALUE_FLOOR = 1e-12
MAX_ORACLE_N = 12


class UndefinedGain(ValidationError):
    pass


class AnovaUndefined(ValidationError):
    pass


@dataclass(frozen=True)
class CurvePoint:
    m: int
    mean_accuracy: float
    std_error: float
    n_runs: int  # not persisted in the CSV; 0 after a read


def mean_se(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return mean, 0.0
    var = sum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var / n)


def run_accuracies(records: Iterable[RunRecord], m: int) -> dict[str, float]:
    """Accuracy at ensemble size ``m`` per run, averaged over graded tasks."""
    per_run: dict[str, list[bool]] = defaultdict(list)
    for rec in records:
        try:
            correct = rec.correct_at(m)
        except KeyError:
            raise ValidationError(f"record {rec.run_id}/{rec.task_id} has no vote at m={m}") from None
        if correct is not None:
            per_run[rec.run_id].append(bool(correct))
    return {run: sum(v) / len(v) for run, v in per_run.items() if v}


def curve(records: Sequence[RunRecord], sizes: Sequence[int]) -> list[CurvePoint]:
    points = []
    for m in sizes:
        accs = list(run_accuracies(records, m).values())
        if not accs:
            raise ValidationError(f"no graded records at m={m}")
        mean, se = mean_se(accs)
        points.append(CurvePoint(m, mean, se, len(accs)))
    return points


CURVE_COLUMNS = ("m", "mean", "se")


def write_curve_csv(points: Iterable[CurvePoint], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CURVE_COLUMNS)
        for p in points:
            w.writerow([p.m, f"{p.mean_accuracy:.6f}", f"{p.std_error:.6f}"])


def read_curve_csv(path: str | Path) -> list[CurvePoint]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
            raise ValidationError(f"{path}: not a curve CSV")
        points = []
        for line, r in enumerate(reader, start=2):
            try:
                points.append(CurvePoint(int(r["m"]), float(r["mean"]), float(r["se"]), 0))
            except (TypeError, ValueError):
                raise ValidationError(f"{path}:{line}: malformed curve row") from None
        return points


def relative_gain(p_single: float, p_multi: float) -> float:
    """(P_m - P_s) / P_s."""
    if p_single <= 0:
        raise UndefinedGain("relative gain is undefined when single-query accuracy is 0")
    return (p_multi - p_single) / p_single


# --------------------------------------------------------------------------- ANOVA


def _betacf(a: float, b: float, x: float, tol: float = 1e-15, max_iter: int = 10_000) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must be in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    # the fraction converges fast only on this side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, df1: int, df2: int) -> float:
    """Upper tail P(F > f) of the F distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    # 1 - I_x(df1/2, df2/2) with x = df1 f/(df1 f + df2), written without cancellation
    return betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    df_between: int
    df_within: int
    p_value: float


def one_way_anova(groups: Sequence[Sequence[float]]) -> AnovaResult:
    if len(groups) < 2:
        raise ValidationError("one-way ANOVA needs at least 2 groups")
    if any(len(g) < 2 for g in groups):
        raise ValidationError("each ANOVA group needs at least 2 observations")
    n_total = sum(len(g) for g in groups)
    grand = sum(sum(g) for g in groups) / n_total
    means = [sum(g) / len(g) for g in groups]
    ssb = sum(len(g) * (m - grand) ** 2 for g, m in zip(groups, means))
    ssw = sum(sum((x - m) ** 2 for x in g) for g, m in zip(groups, means))
    dfb, dfw = len(groups) - 1, n_total - len(groups)
    if ssw == 0:
        if all(m == means[0] for m in means):
            raise AnovaUndefined("F undefined: zero within-group variance and equal means")
        return AnovaResult(math.inf, dfb, dfw, P_VALUE_FLOOR)
    f = (ssb / dfb) / (ssw / dfw)
    p = max(P_VALUE_FLOOR, min(1.0, f_sf(f, dfb, dfw)))
    return AnovaResult(f, dfb, dfw, p)


# --------------------------------------------------------------------------- plurality oracle


def _partitions(total: int, max_parts: int, max_part: int | None = None):
    """Non-increasing tuples of positive ints summing to ``total`` with at most ``max_parts`` parts."""
    if total == 0:
        yield ()
        return
    if max_parts == 0:
        return
    top = total if max_part is None else min(total, max_part)
    for first in range(top, 0, -1):
        for rest in _partitions(total - first, max_parts - 1, first):
            yield (first, *rest)


def plurality_oracle(q: float, k_wrong: int, n: int) -> float:
    """Exact probability that a plurality vote over ``n`` flat-model samples is correct.

    Each sample is correct with probability ``q`` and otherwise uniform over
    ``k_wrong`` wrong answers. A tie among ``t`` answers including the
    correct one earns ``1/t``. Wrong-answer count vectors are enumerated as
    partitions times the number of ways to assign them to labelled answers.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    if n > MAX_ORACLE_N:
        raise ValidationError(f"n={n} too large for exact enumeration (max {MAX_ORACLE_N})")
    if not 0 <= q <= 1 or k_wrong < 1:
        raise ValidationError("need 0 <= q <= 1 and k_wrong >= 1")
    w = (1.0 - q) / k_wrong
    total = 0.0
    for c0 in range(n + 1):
        rest = n - c0
        for parts in _partitions(rest, k_wrong):
            top = max(parts, default=0)
            if top > c0:
                continue
            ties = 1 + sum(1 for p in parts if p == c0)
            mult = math.factorial(k_wrong) // math.factorial(k_wrong - len(parts))
            for v in set(parts):
                mult //= math.factorial(parts.count(v))
            coef = math.factorial(n) // math.factorial(c0)
            for p in parts:
                coef //= math.factorial(p)
            total += mult * coef * (q**c0) * (w**rest) / ties
    return total
