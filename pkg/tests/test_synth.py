from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats as sps

from samplevote.core import ValidationError
from samplevote.synth import (
    DegeneratePartition,
    GainCell,
    SyntheticSpec,
    draw_sums,
    gain_matrix,
    generate,
    locate,
    partition,
    product_pmf,
    read_gain_csv,
    sum_distribution,
    task_from_meta,
    write_gain_csv,
)


def enumerated_sum_pmf(I: int, S: int) -> dict[int, Fraction]:
    """Brute force over every coefficient vector."""
    vals = range(-I, I + 1)
    total = (2 * I + 1) ** (2 * S)
    counts: dict[int, int] = {}
    for coeffs in itertools.product(vals, repeat=2 * S):
        s = sum(x * y for x, y in zip(coeffs[:S], coeffs[S:]))
        counts[s] = counts.get(s, 0) + 1
    return {v: Fraction(c, total) for v, c in counts.items()}


def test_product_pmf_small_cases():
    support, pmf = product_pmf(1)
    assert support.tolist() == [-1, 0, 1]
    assert pmf.tolist() == pytest.approx([2 / 9, 5 / 9, 2 / 9], abs=1e-15)
    support, pmf = product_pmf(2)
    assert pmf[support.tolist().index(0)] == pytest.approx(9 / 25, abs=1e-15)


@pytest.mark.parametrize("I", [1, 2, 3, 7])
def test_product_pmf_symmetric(I):
    _, pmf = product_pmf(I)
    assert np.array_equal(pmf, pmf[::-1])
    assert pmf.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("I, S", [(1, 1), (1, 2), (2, 2), (1, 3), (2, 3)])
def test_sum_distribution_matches_enumeration(I, S):
    dist = sum_distribution(SyntheticSpec(I, S, 2))
    oracle = enumerated_sum_pmf(I, S)
    for v, p in zip(dist.support.tolist(), dist.pmf.tolist()):
        assert p == pytest.approx(float(oracle.get(v, 0)), abs=1e-12)
    assert dist.mean() == pytest.approx(0.0, abs=1e-12)


def test_hand_values():
    d1 = sum_distribution(SyntheticSpec(1, 1, 2))
    assert d1.pmf[1] == pytest.approx(5 / 9, abs=1e-12)
    d2 = sum_distribution(SyntheticSpec(1, 2, 2))
    assert d2.pmf[list(d2.support).index(0)] == pytest.approx(33 / 81, abs=1e-12)


def test_single_step_equals_product_pmf():
    _, pmf = product_pmf(5)
    assert np.array_equal(sum_distribution(SyntheticSpec(5, 1, 4)).pmf, pmf)


def test_large_i_partition_is_nearly_equal():
    boundaries, probs = partition(sum_distribution(SyntheticSpec(100, 4, 4)), 4)
    assert np.all(np.diff(boundaries) > 0)
    assert np.all(np.abs(probs - 0.25) < 0.01)
    assert probs.sum() == pytest.approx(1.0, abs=1e-9)


def test_monte_carlo_agrees_with_exact():
    spec = SyntheticSpec(100, 4, 4)
    boundaries, exact = partition(sum_distribution(spec), 4)
    draws = draw_sums(100, 4, seed=12345, count=1_000_000)
    counts = np.bincount(np.searchsorted(boundaries, draws, side="right") - 1, minlength=4)
    assert np.all(np.abs(counts / 1e6 - exact) <= 4 * math.sqrt(0.25 / 1e6))


def test_monte_carlo_mode_is_seeded():
    spec = SyntheticSpec(20, 3, 4, seed=3)
    a = sum_distribution(spec, force="monte-carlo", draws=50_000)
    b = sum_distribution(spec, force="monte-carlo", draws=50_000)
    assert a.representation == "monte-carlo" and a.M == 50_000
    assert np.array_equal(a.draws, b.draws)


def test_binary_partition_on_zero_atom():
    dist = sum_distribution(SyntheticSpec(1, 1, 2))
    boundaries, probs = partition(dist, 2)
    p0 = 5 / 9
    assert boundaries.tolist() == [-1.5, -0.5, 1.5]
    assert abs(probs[0] - 0.5) == pytest.approx(p0 / 2, abs=1e-12)
    assert abs(probs[1] - 0.5) == pytest.approx(p0 / 2, abs=1e-12)


def test_degenerate_partition():
    with pytest.raises(DegeneratePartition):
        partition(sum_distribution(SyntheticSpec(1, 1, 4)), 4)


def test_locate_closes_last_interval():
    b = [-1.5, -0.5, 1.5]
    assert locate(-1.5, b) == 0 and locate(-0.5, b) == 1 and locate(1.5, b) == 1
    with pytest.raises(ValueError):
        locate(2, b)


def test_generate_self_consistent_and_deterministic():
    st = generate(SyntheticSpec(1, 1, 2, seed=7))
    assert st == generate(SyntheticSpec(1, 1, 2, seed=7))
    assert locate(st.a[0] * st.b[0], st.boundaries) == st.correct_interval
    for seed in range(300):
        st = generate(SyntheticSpec(30, 3, 8, seed=seed))
        assert locate(st.total, st.boundaries) == st.correct_interval
        assert all(-30 <= x <= 30 for x in st.a + st.b)
        assert st.to_task().gold.value == st.labels[st.correct_interval]
    task = st.to_task()
    assert task_from_meta(task) == st
    for lab in task.option_labels:
        assert f"({lab})" in task.prompt


def test_generated_intervals_uniform():
    spec = lambda s: SyntheticSpec(100, 4, 4, seed=s)  # noqa: E731
    ks = [generate(spec(s)).correct_interval for s in range(10_000)]
    probs = np.array(generate(spec(0)).interval_probs)
    observed = np.bincount(ks, minlength=4)
    assert sps.chisquare(observed, probs * len(ks)).pvalue > 0.01


def test_random_guess_baseline():
    rng = np.random.default_rng(0)
    hits = [generate(SyntheticSpec(10, 2, 4, seed=s)).correct_interval == rng.integers(4) for s in range(4000)]
    assert abs(np.mean(hits) - 0.25) < 4 * math.sqrt(0.25 * 0.75 / 4000)


def test_spec_validation():
    with pytest.raises(ValidationError):
        SyntheticSpec(0, 1, 4)
    with pytest.raises(ValidationError):
        SyntheticSpec(1, 1, 1)


def test_gain_matrix_and_csv(tmp_path):
    cells = gain_matrix([
        ((10, 4, 4), [0.35] * 3, [0.59] * 3),
        ((100, 4, 4), [0.3, 0.4], [0.3, 0.4]),
        ((400, 4, 4), [0.0, 0.0], [0.1, 0.2]),
    ])
    assert round(cells[0].eta * 100) == 69
    assert cells[1].eta == 0
    assert cells[2].undefined and cells[2].se is None
    path = tmp_path / "gains.csv"
    write_gain_csv(cells, path)
    back = read_gain_csv(path)
    assert back[2] == GainCell(400, 4, 4, 0.0, 0.15, None, None)
    assert back[0].eta == pytest.approx(cells[0].eta, abs=1e-6)


def test_gain_se_delta_method():
    singles, multis = [0.3, 0.5, 0.4], [0.6, 0.7, 0.5]
    cell = gain_matrix([((1, 1, 2), singles, multis)])[0]
    # analytic gradient of (m - s) / s at the means, applied to the covariance of the run means
    ps, pm = np.mean(singles), np.mean(multis)
    cov = np.cov([multis, singles]) / 3
    g = np.array([1 / ps, -pm / ps**2])
    assert cell.se == pytest.approx(math.sqrt(g @ cov @ g), rel=1e-12)
