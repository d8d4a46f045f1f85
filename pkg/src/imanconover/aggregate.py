"""Estimators for aggregated-loss distributions on synthetic samples."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .copulas import CopulaModel, CopulaSample, parse_copula, sample
from .margins import DataError, EmpiricalDistribution, StepCdf
from .reorder import SyntheticSample, compute_ranks, iman_conover


# --------------------------------------------------------------------------
# aggregation functions


@dataclass(frozen=True)
class AggregationFunction:
    kind: str
    func: Optional[Callable[[np.ndarray], np.ndarray]] = None
    declared_monotone: bool = True

    def __call__(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if self.kind == "sum":
            return rows.sum(axis=-1)
        if self.kind == "max":
            return rows.max(axis=-1)
        return np.asarray(self.func(rows), dtype=np.float64)


SUM = AggregationFunction("sum")
MAX = AggregationFunction("max")


def custom(func: Callable, declared_monotone: bool = False) -> AggregationFunction:
    """Wrap a row-wise callable ``f(rows) -> values``."""
    return AggregationFunction("custom", func, declared_monotone)


def parse_psi(name: str) -> AggregationFunction:
    if name == "sum":
        return SUM
    if name == "max":
        return MAX
    raise ValueError(f"unknown aggregation function {name!r}")


def check_monotone(psi: AggregationFunction, rows: np.ndarray, n_pairs: int = 1000, seed: int = 0) -> bool:
    """Spot-check ``psi(x) <= psi(y)`` on random ordered pairs ``x <= y``.

    Pairs are built from rows of ``rows`` plus non-negative perturbations
    scaled to the column spread.
    """
    rows = np.asarray(rows, dtype=np.float64)
    rng = np.random.default_rng(seed)
    x = rows[rng.integers(0, rows.shape[0], n_pairs)]
    scale = np.ptp(rows, axis=0) + 1e-12
    y = x + rng.exponential(size=x.shape) * scale * 0.1
    return bool(np.all(psi(x) <= psi(y)))


def sum_cdf(s: SyntheticSample) -> StepCdf:
    """Empirical CDF of the row sums of a synthetic sample."""
    return StepCdf.from_sample(s.matrix.sum(axis=1))


def aggregate_cdf(s: SyntheticSample, psi: AggregationFunction = SUM) -> StepCdf:
    if psi.kind == "custom" and psi.declared_monotone and not check_monotone(psi, s.matrix):
        raise ValueError("aggregation function declared monotone but fails the spot check")
    return StepCdf.from_sample(psi(s.matrix))


def layer_count_cdf(copula_sample: CopulaSample, margins: Sequence[EmpiricalDistribution], t):
    """Sum-CDF estimate counted in copula space.

    Counts copula points ``U^(k)`` whose image under the transform chain
    ``u -> (F_{i,n}^<-(C_{i,n}(u_i)))_i`` lands in the half-space
    ``{x : sum(x) <= t}``, i.e. ``U^(k)`` inside the lower layer of the
    transformed half-space.
    """
    u = copula_sample.matrix
    n = u.shape[0]
    x = np.empty_like(u)
    for i, m in enumerate(margins):
        col = np.sort(u[:, i])
        c_in = np.searchsorted(col, u[:, i], side="right") / n
        x[:, i] = m.quantile(c_in)
    s = x.sum(axis=1)
    t = np.asarray(t, dtype=np.float64)
    return np.count_nonzero(s[None, :] <= np.atleast_1d(t)[:, None], axis=1).reshape(t.shape) / n


# --------------------------------------------------------------------------
# Kendall estimator


def _dominance_counts_2d(pts: np.ndarray) -> np.ndarray:
    # #{k : x_k <= x_j and y_k <= y_j} via a Fenwick tree over y ranks
    n = pts.shape[0]
    y_rank = np.searchsorted(np.unique(pts[:, 1]), pts[:, 1]) + 1
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    xs = pts[order, 0]
    m = int(y_rank.max())
    tree = [0] * (m + 1)
    out = np.empty(n, dtype=np.int64)
    yr = y_rank[order].tolist()
    i = 0
    while i < n:
        j = i
        while j < n and xs[j] == xs[i]:
            j += 1
        for k in range(i, j):
            p = yr[k]
            while p <= m:
                tree[p] += 1
                p += p & -p
        for k in range(i, j):
            p = yr[k]
            c = 0
            while p > 0:
                c += tree[p]
                p -= p & -p
            out[order[k]] = c
        i = j
    return out


def dominance_counts(pts: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """For each row ``j``: number of rows ``k`` with ``pts[k] <= pts[j]`` componentwise."""
    pts = np.asarray(pts)
    n, d = pts.shape
    if d == 1:
        return np.searchsorted(np.sort(pts[:, 0]), pts[:, 0], side="right")
    if d == 2:
        return _dominance_counts_2d(pts)
    out = np.empty(n, dtype=np.int64)
    for a in range(0, n, chunk):
        blk = pts[a : a + chunk]
        le = np.ones((blk.shape[0], n), dtype=bool)
        for i in range(d):
            le &= pts[None, :, i] <= blk[:, None, i]
        out[a : a + chunk] = le.sum(axis=1)
    return out


def kendall_cdf(s: Union[SyntheticSample, np.ndarray]) -> StepCdf:
    """``H_n(t) = (1/n) #{j : F_n^*(X^(j)) <= t}`` with ``F_n^*`` the joint ECDF."""
    pts = s.matrix if isinstance(s, SyntheticSample) else np.asarray(s)
    return StepCdf.from_sample(dominance_counts(pts) / pts.shape[0])


# --------------------------------------------------------------------------
# risk measures


def risk_measures(cdf: StepCdf, levels) -> Dict[float, tuple]:
    """Empirical VaR and ES.

    ``VaR_a`` is the generalized-inverse quantile; ``ES_a`` averages the
    worst ``ceil(n(1-a))`` outcomes.
    """
    if cdf.counts is None or cdf.n == 0:
        raise ValueError("risk measures need an empirical step CDF")
    values = cdf.values()
    n = values.size
    grid = np.arange(1, n + 1) / n
    out = {}
    for a in np.atleast_1d(levels):
        a = float(a)
        if not 0.0 < a < 1.0:
            raise ValueError("risk levels must lie in (0, 1)")
        var = float(values[np.searchsorted(grid, a, side="left")])
        m = n - int(np.searchsorted(grid, a, side="right"))
        es = float(values[n - m :].mean())
        out[a] = (var, es)
    return out


# --------------------------------------------------------------------------
# aggregation trees


@dataclass
class Leaf:
    name: str


@dataclass
class Branch:
    copula: CopulaModel
    children: List[Union["Branch", Leaf]]
    psi: AggregationFunction = SUM
    name: Optional[str] = None

    def __post_init__(self):
        if len(self.children) != self.copula.d:
            raise ValueError(
                f"branch has {len(self.children)} children but its copula has dimension {self.copula.d}"
            )


AggregationTree = Union[Branch, Leaf]


@dataclass
class NodeResult:
    path: str
    values: np.ndarray
    cdf: StepCdf
    synthetic: Optional[SyntheticSample] = None
    seed: Optional[int] = None


def parse_tree(obj: Mapping, base_dir=None) -> AggregationTree:
    """Build a tree from ``{"copula": ..., "children": [...]}`` / ``{"leaf": ...}``."""
    if "leaf" in obj:
        return Leaf(str(obj["leaf"]))
    if "copula" not in obj or "children" not in obj:
        raise ValueError("tree node needs either 'leaf' or 'copula' and 'children'")
    return Branch(
        parse_copula(obj["copula"], base_dir),
        [parse_tree(c, base_dir) for c in obj["children"]],
        parse_psi(obj.get("psi", "sum")),
        obj.get("name"),
    )


def node_seed(root_seed: int, path: tuple) -> int:
    return int(np.random.SeedSequence(root_seed, spawn_key=path).generate_state(1)[0])


def tree_aggregate(
    tree: AggregationTree,
    leaf_samples: Mapping[str, np.ndarray],
    n: Optional[int] = None,
    seed: int = 0,
    threads: int = 1,
) -> Dict[str, NodeResult]:
    """Aggregate bottom-up; returns results keyed by node path (``"root"``, ``"root/0"``...).

    Each branch reorders its children's output columns by the ranks of its
    own copula sample and passes ``psi`` of the reordered rows upward.
    """
    lengths = {k: len(v) for k, v in leaf_samples.items()}
    if n is None:
        n = next(iter(lengths.values()))
    bad = {k: m for k, m in lengths.items() if m != n}
    if bad:
        raise DataError(f"leaf samples must all have length {n}: {bad}")
    results: Dict[str, NodeResult] = {}
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def visit(node, path):
        key = "/".join(["root", *map(str, path)])
        if isinstance(node, Leaf):
            if node.name not in leaf_samples:
                raise DataError(f"no sample for leaf {node.name!r}")
            vals = np.asarray(leaf_samples[node.name], dtype=np.float64)
            res = NodeResult(key, vals, StepCdf.from_sample(vals))
        else:
            jobs = [(c, path + (i,)) for i, c in enumerate(node.children)]
            if pool is not None and len(path) == 0:
                child = list(pool.map(lambda a: visit(*a), jobs))
            else:
                child = [visit(*a) for a in jobs]
            s_seed = node_seed(seed, path)
            ranks = compute_ranks(sample(node.copula, n, s_seed))
            syn = iman_conover([c.values for c in child], ranks)
            vals = node.psi(syn.matrix)
            res = NodeResult(key, vals, StepCdf.from_sample(vals), syn, s_seed)
        results[key] = res
        return res

    try:
        visit(tree, ())
    finally:
        if pool is not None:
            pool.shutdown()
    return dict(sorted(results.items()))
