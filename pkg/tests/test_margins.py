import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imanconover.margins import (
    DataError,
    EmpiricalDistribution,
    ExponentialMargin,
    NormalMargin,
    StepCdf,
    ecdf_build,
    parse_margin,
    quantile,
    read_sample_csv,
    sup_distance,
)

from oracles import ecdf_count

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)
samples = st.lists(finite, min_size=1, max_size=60)


def test_ecdf_examples():
    assert ecdf_build([1, 2, 3]).cdf(2) == 2 / 3
    one = ecdf_build([5])
    assert one.cdf(4.9) == 0
    assert one.cdf(5) == 1
    assert ecdf_build([2, 2, 3]).cdf(2) == 2 / 3


def test_ecdf_errors():
    with pytest.raises(DataError, match="empty sample"):
        ecdf_build([])
    with pytest.raises(DataError, match="non-finite value"):
        ecdf_build([1.0, float("nan")])


def test_quantile_examples():
    assert quantile(ecdf_build([1, 2, 3]), 0.5) == 2
    assert quantile(NormalMargin(0, 1), 0.5) == 0
    assert quantile(ExponentialMargin(1), 1 - math.exp(-1)) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("y", [0.0, -0.1, 1.5])
def test_quantile_domain(y):
    for m in (ecdf_build([1, 2, 3]), NormalMargin(), ExponentialMargin()):
        with pytest.raises(ValueError):
            quantile(m, y)


def test_quantile_is_ceil_order_statistic():
    d = ecdf_build([4.0, 1.0, 3.0, 2.0, 5.0])
    for k in range(1, 6):
        assert d.quantile(k / 5) == k
        assert d.quantile(k / 5 - 1e-9) == k
    assert d.quantile(1.0) == 5


def test_sup_distance_examples():
    a = StepCdf.from_sample([0.2, 0.5, 0.5, 0.9])
    assert sup_distance(a, a) == 0
    assert sup_distance(StepCdf.from_sample([0.0]), StepCdf.from_sample([1.0])) == 1
    uniform = lambda t: np.clip(t, 0.0, 1.0)
    assert sup_distance(StepCdf.from_sample([0.25, 0.75]), uniform) == pytest.approx(0.25)


def test_parse_margin():
    m = parse_margin("normal:1,2")
    assert (m.mean, m.stddev) == (1.0, 2.0)
    assert parse_margin("exp:0.7").rate == 0.7
    for bad in ("normal:1", "exp:-1", "gamma:2", "normal:a,b"):
        with pytest.raises(ValueError):
            parse_margin(bad)


def test_read_sample_csv(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("loss\n1.5\n2\n\n-3e2\n")
    assert read_sample_csv(p).tolist() == [1.5, 2.0, -300.0]
    q = tmp_path / "bad.csv"
    q.write_text("x\n1\nabc\n")
    with pytest.raises(DataError, match=r"bad.csv:3"):
        read_sample_csv(q)
    r = tmp_path / "two.csv"
    r.write_text("1,2\n")
    with pytest.raises(DataError, match="one column"):
        read_sample_csv(r, header=False)


def test_read_sample_csv_without_header_rejects_text(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("loss\n1\n")
    with pytest.raises(DataError, match=":1:"):
        read_sample_csv(p, header=False)


def test_parametric_cdf_limits():
    for m in (NormalMargin(1, 3), ExponentialMargin(2)):
        assert m.cdf(-1e300) == 0.0
        assert m.cdf(1e300) == 1.0
        t = np.linspace(-10, 10, 101)
        assert np.all(np.diff(m.cdf(t)) >= 0)


@given(samples, finite)
def test_ecdf_matches_count(xs, t):
    assert ecdf_build(xs).cdf(t) == ecdf_count(xs, t)


@given(samples, st.floats(0.0, 1.0, exclude_min=True))
def test_galois_pair(xs, y):
    d = ecdf_build(xs)
    assert d.cdf(d.quantile(y)) >= y
    for t in xs:
        assert d.quantile(d.cdf(t)) <= t


@given(samples, st.randoms(use_true_random=False))
def test_ecdf_order_invariance(xs, rnd):
    shuffled = list(xs)
    rnd.shuffle(shuffled)
    a, b = ecdf_build(xs), ecdf_build(shuffled)
    assert np.array_equal(a.values, b.values)


@given(samples)
def test_ecdf_steps(xs):
    d = ecdf_build(xs)
    assert np.all(np.diff(d.values) >= 0)
    assert d.cdf(-1e7) == 0
    assert d.cdf(max(xs)) == 1
    s = d.to_step_cdf()
    assert np.all(s.levels[:-1] < 1)
    assert s.levels[-1] == 1
    # step sizes are multiples of 1/n
    assert np.allclose(s.levels * d.n, np.round(s.levels * d.n))


@given(samples, samples, samples)
def test_sup_distance_is_metric(a, b, c):
    fa, fb, fc = (StepCdf.from_sample(x) for x in (a, b, c))
    ab = sup_distance(fa, fb)
    assert ab == sup_distance(fb, fa)
    assert ab <= sup_distance(fa, fc) + sup_distance(fc, fb) + 1e-12
    assert 0 <= ab <= 1


@settings(max_examples=50)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=30))
def test_sup_distance_continuous_matches_dense_grid(xs):
    uniform = lambda t: np.clip(t, 0.0, 1.0)
    f = StepCdf.from_sample(xs)
    grid = np.concatenate([np.linspace(-0.1, 1.1, 4001), f.jump_points])
    eps = 1e-12
    dense = max(
        np.max(np.abs(f(grid) - uniform(grid))),
        np.max(np.abs(f.left_limit(grid) - uniform(grid - eps))),
    )
    assert sup_distance(f, uniform) == pytest.approx(dense, abs=1e-9)
    assert sup_distance(f, uniform) >= np.max(np.abs(f(grid) - uniform(grid))) - 1e-12


def test_step_cdf_validation():
    with pytest.raises(ValueError):
        StepCdf([0, 0], [0.5, 1.0])
    with pytest.raises(ValueError):
        StepCdf([0, 1], [0.5, 0.9])
    s = StepCdf([0, 1], [0.25, 1.0])
    assert s(-1) == 0 and s(0) == 0.25 and s(0.5) == 0.25 and s(1) == 1
    assert s.left_limit(0) == 0 and s.left_limit(1) == 0.25


def test_step_cdf_quantile_exact_levels():
    s = StepCdf.from_sample(np.arange(1, 101))
    assert s.quantile(0.9) == 90
    assert s.quantile(0.07) == 7
    assert s.quantile(1.0) == 100


def test_empirical_distribution_immutable():
    d = EmpiricalDistribution(np.array([3.0, 1.0]))
    with pytest.raises(ValueError):
        d.values[0] = 9
