import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from imanconover.aggregate import (
    MAX,
    SUM,
    Branch,
    Leaf,
    aggregate_cdf,
    check_monotone,
    custom,
    dominance_counts,
    kendall_cdf,
    layer_count_cdf,
    node_seed,
    parse_psi,
    parse_tree,
    risk_measures,
    sum_cdf,
    tree_aggregate,
)
from imanconover.copulas import ClaytonCopula, GaussCopula, IndependenceCopula, sample
from imanconover.margins import DataError, StepCdf, ecdf_build, sup_distance
from imanconover.reorder import RankMatrix, compute_ranks, iman_conover

from oracles import gamma_cdf, independence_kendall, kendall_loop, layer_count_loop

EXAMPLE = iman_conover(
    [np.array([10.0, 20.0, 30.0]), np.array([5.0, 6.0, 7.0])], RankMatrix(np.array([[2, 1], [1, 3], [3, 2]]))
)


def test_sum_cdf_example():
    g = sum_cdf(EXAMPLE)
    assert g.jump_points.tolist() == [17.0, 25.0, 36.0]
    assert g(20) == 1 / 3 and g(25) == 2 / 3 and g(36) == 1


def test_sum_cdf_single_margin_is_ecdf():
    x = np.random.default_rng(0).normal(size=50)
    s = iman_conover([x], compute_ranks(np.random.default_rng(1).random((50, 1))))
    g, f = sum_cdf(s), StepCdf.from_sample(x)
    assert np.array_equal(g.jump_points, f.jump_points)
    assert np.array_equal(g.levels, f.levels)


def test_sum_cdf_independent_exponentials():
    n = 200
    rng = np.random.default_rng(5)
    s = iman_conover([rng.exponential(size=n), rng.exponential(size=n)], compute_ranks(sample(IndependenceCopula(2), n, 6)))
    assert sup_distance(sum_cdf(s), lambda t: special.gammainc(2, np.maximum(t, 0))) < 0.15


def test_aggregate_cdf_psi():
    a, b = aggregate_cdf(EXAMPLE, SUM), sum_cdf(EXAMPLE)
    assert np.array_equal(a.jump_points, b.jump_points)
    assert aggregate_cdf(EXAMPLE, MAX).values().tolist() == [10.0, 20.0, 30.0]
    assert parse_psi("max") is MAX
    with pytest.raises(ValueError):
        parse_psi("mean")


def test_custom_psi_monotonicity_spot_check():
    s = iman_conover(
        [np.random.default_rng(i).normal(size=300) for i in range(2)],
        compute_ranks(sample(GaussCopula(0.3), 300, 1)),
    )
    good = custom(lambda r: r[:, 0] + 2 * r[:, 1], declared_monotone=True)
    bad = custom(lambda r: r[:, 0] - r[:, 1], declared_monotone=True)
    assert check_monotone(good, s.matrix)
    assert not check_monotone(bad, s.matrix)
    aggregate_cdf(s, good)
    with pytest.raises(ValueError, match="monotone"):
        aggregate_cdf(s, bad)
    # undeclared non-monotone functions are allowed (outside the guarantee)
    aggregate_cdf(s, custom(lambda r: r[:, 0] - r[:, 1]))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 60), st.integers(0, 10**6))
def test_aggregate_cdf_is_valid_cdf(n, seed):
    rng = np.random.default_rng(seed)
    s = iman_conover([rng.normal(size=n), rng.exponential(size=n)], compute_ranks(rng.random((n, 2))))
    for psi in (SUM, MAX):
        g = aggregate_cdf(s, psi)
        assert g(g.jump_points[0] - 1) == 0 and g(g.jump_points[-1]) == 1
        assert np.all(np.diff(g.levels) > 0)


def test_monotone_transform_commutes():
    rng = np.random.default_rng(3)
    xs = [rng.normal(size=400) for _ in range(3)]
    r = compute_ranks(sample(IndependenceCopula(3), 400, 4))
    base = iman_conover(xs, r)
    g = np.exp
    moved = iman_conover([g(xs[0]), xs[1], xs[2]], r)
    assert np.array_equal(moved.matrix[:, 0], g(base.matrix[:, 0]))
    assert np.array_equal(moved.matrix[:, 1:], base.matrix[:, 1:])
    all_moved = iman_conover([g(x) for x in xs], r)
    levels = np.array([0.1, 0.5, 0.9])
    q_base = aggregate_cdf(base, MAX).quantile(levels)
    q_moved = aggregate_cdf(all_moved, MAX).quantile(levels)
    assert np.array_equal(q_moved, g(q_base))


# --------------------------------------------------------------------------
# estimator identity in copula space


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10**6))
def test_layer_count_matches_row_sums(n, seed):
    rng = np.random.default_rng(seed)
    xs = [rng.normal(size=n), rng.exponential(size=n)]
    cs = sample(ClaytonCopula(1.0), n, seed)
    g = sum_cdf(iman_conover(xs, compute_ranks(cs)))
    counted = layer_count_cdf(cs, [ecdf_build(x) for x in xs], g.jump_points)
    assert np.array_equal(counted, g(g.jump_points))
    t = float(g.jump_points[len(g.jump_points) // 2])
    assert layer_count_loop(cs.matrix, xs, t) == g(t)


# --------------------------------------------------------------------------
# Kendall estimator


def test_kendall_comonotone():
    n = 4
    ranks = RankMatrix(np.tile(np.arange(1, n + 1)[:, None], (1, 2)))
    h = kendall_cdf(iman_conover([np.arange(n, dtype=float), np.arange(n, dtype=float) * 2], ranks))
    t = np.linspace(0, 1, 101)
    assert np.allclose(h(t), np.floor(n * t + 1e-12) / n)


def test_kendall_single_point():
    h = kendall_cdf(np.array([[1.0, 2.0]]))
    assert h.jump_points.tolist() == [1.0] and h.levels.tolist() == [1.0]


def test_kendall_independence():
    n = 10**5
    rng = np.random.default_rng(8)
    s = iman_conover([rng.normal(size=n), rng.normal(size=n)], compute_ranks(sample(IndependenceCopula(2), n, 9)))
    assert sup_distance(kendall_cdf(s), independence_kendall) < 0.02


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(1, 4), st.integers(0, 10**6))
def test_dominance_counts_match_brute_force(n, d, seed):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 5, size=(n, d)).astype(float)  # ties on purpose
    assert np.array_equal(dominance_counts(pts) / n, kendall_loop(pts))


def test_kendall_margin_pivotality():
    rng = np.random.default_rng(10)
    n = 2000
    r = compute_ranks(sample(ClaytonCopula(2.0), n, 11))
    a = kendall_cdf(iman_conover([rng.normal(size=n), rng.exponential(size=n)], r))
    b = kendall_cdf(iman_conover([rng.uniform(size=n), rng.lognormal(size=n)], r))
    c = kendall_cdf(r.ranks / n)
    for other in (b, c):
        assert np.array_equal(a.jump_points, other.jump_points)
        assert np.array_equal(a.levels, other.levels)


# --------------------------------------------------------------------------
# risk measures


def test_risk_measures_examples():
    out = risk_measures(StepCdf.from_sample([17, 25, 36]), [0.5])
    assert out[0.5] == (25.0, 30.5)
    single = risk_measures(StepCdf.from_sample([4.5]), [0.01, 0.5, 0.99])
    assert all(v == (4.5, 4.5) for v in single.values())
    grid = risk_measures(StepCdf.from_sample(np.arange(1, 101)), [0.9])
    assert grid[0.9] == (90.0, 95.5)


def test_risk_measures_validation():
    with pytest.raises(ValueError):
        risk_measures(StepCdf.from_sample([1, 2]), [1.0])
    with pytest.raises(ValueError):
        risk_measures(StepCdf([0.0, 1.0], [0.5, 1.0]), [0.5])


@settings(max_examples=40)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50), st.floats(0.001, 0.999))
def test_es_dominates_var(xs, a):
    var, es = risk_measures(StepCdf.from_sample(xs), [a])[a]
    assert es >= var - 1e-9
    n = len(xs)
    tail = n - sum(1 for k in range(1, n + 1) if k / n <= a)
    assert es == pytest.approx(np.mean(sorted(xs)[n - tail :]), abs=1e-9)


# --------------------------------------------------------------------------
# trees


def test_single_branch_equals_pipeline():
    rng = np.random.default_rng(0)
    leaves = {"a": rng.normal(size=500), "b": rng.normal(size=500)}
    tree = Branch(GaussCopula(0.4), [Leaf("a"), Leaf("b")])
    res = tree_aggregate(tree, leaves, seed=21)
    direct = sum_cdf(iman_conover([leaves["a"], leaves["b"]], compute_ranks(sample(GaussCopula(0.4), 500, node_seed(21, ())))))
    assert np.array_equal(res["root"].cdf.jump_points, direct.jump_points)
    assert set(res) == {"root", "root/0", "root/1"}


def test_two_level_independent_tree():
    n = 10**4
    rng = np.random.default_rng(1)
    leaves = {k: rng.exponential(size=n) for k in "abcd"}
    tree = Branch(
        IndependenceCopula(2),
        [Branch(IndependenceCopula(2), [Leaf("a"), Leaf("b")]), Branch(IndependenceCopula(2), [Leaf("c"), Leaf("d")])],
    )
    res = tree_aggregate(tree, leaves, seed=2)
    assert sup_distance(res["root"].cdf, lambda t: special.gammainc(4, np.maximum(t, 0))) < 0.1
    assert gamma_cdf(4, 1, 4.0) == pytest.approx(special.gammainc(4, 4.0))


def test_near_comonotone_branch_adds_quantiles():
    n = 5000
    rng = np.random.default_rng(2)
    leaves = {"a": rng.exponential(size=n), "b": rng.normal(size=n)}
    res = tree_aggregate(Branch(GaussCopula(1 - 1e-9), [Leaf("a"), Leaf("b")]), leaves, seed=3)
    levels = np.array([0.1, 0.5, 0.9, 0.99])
    q = res["root"].cdf.quantile(levels)
    q1 = StepCdf.from_sample(leaves["a"]).quantile(levels)
    q2 = StepCdf.from_sample(leaves["b"]).quantile(levels)
    assert np.allclose(q, q1 + q2, atol=0.05)


def test_tree_errors():
    with pytest.raises(ValueError, match="children"):
        Branch(IndependenceCopula(3), [Leaf("a"), Leaf("b")])
    tree = Branch(IndependenceCopula(2), [Leaf("a"), Leaf("b")])
    with pytest.raises(DataError):
        tree_aggregate(tree, {"a": np.ones(3), "b": np.ones(4)})
    with pytest.raises(DataError):
        tree_aggregate(tree, {"a": np.ones(3)})


def test_tree_threads_and_seed_determinism():
    rng = np.random.default_rng(4)
    leaves = {k: rng.normal(size=800) for k in "abc"}
    tree = parse_tree(
        {"copula": "clayton:2", "children": [{"copula": "gauss:0.5", "children": [{"leaf": "a"}, {"leaf": "b"}]}, {"leaf": "c"}]}
    )
    r1 = tree_aggregate(tree, leaves, seed=5)
    r2 = tree_aggregate(tree, leaves, seed=5, threads=3)
    for k in r1:
        assert np.array_equal(r1[k].values, r2[k].values)
    r3 = tree_aggregate(tree, leaves, seed=6)
    assert not np.array_equal(r1["root"].values, r3["root"].values)
    # child sums propagate upward
    assert np.array_equal(np.sort(r1["root"].synthetic.matrix[:, 0]), np.sort(r1["root/0"].values))


def test_parse_tree_errors():
    with pytest.raises(ValueError):
        parse_tree({"children": []})
    with pytest.raises(ValueError):
        parse_tree({"copula": "gauss:0.5", "children": [{"leaf": "a"}]})
