"""Rank reordering of marginal samples (Iman-Conover) and the empirical copula."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .copulas import CopulaSample
from .margins import DataError, EmpiricalDistribution


class TieError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RankMatrix:
    """n x d matrix of 1-based marginal ranks."""

    ranks: np.ndarray

    @property
    def n(self) -> int:
        return self.ranks.shape[0]

    @property
    def d(self) -> int:
        return self.ranks.shape[1]


@dataclass(frozen=True, eq=False)
class SyntheticSample:
    matrix: np.ndarray
    source_ranks: RankMatrix
    margins: tuple

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i + 1}" for i in range(self.d)])
            for row in self.matrix:
                w.writerow([repr(float(x)) for x in row])


def _column_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, axis=0, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(1, x.shape[0] + 1)
    for i in range(x.shape[1]):
        ranks[order[:, i], i] = rows
    return ranks


def compute_ranks(sample: Union[CopulaSample, np.ndarray]) -> RankMatrix:
    """Marginal ranks ``R_i^(j) = #{k : U_i^(k) <= U_i^(j)}``.

    Raises :class:`TieError` if any column has tied entries.
    """
    u = sample.matrix if isinstance(sample, CopulaSample) else np.asarray(sample, dtype=np.float64)
    if u.ndim == 1:
        u = u[:, None]
    s = np.sort(u, axis=0)
    if np.any(s[1:] == s[:-1]):
        raise TieError("tied values within a column; ranks are not a permutation")
    r = _column_ranks(u)
    r.setflags(write=False)
    return RankMatrix(r)


def iman_conover(
    margins: Sequence[Union[np.ndarray, EmpiricalDistribution]], ranks: RankMatrix
) -> SyntheticSample:
    """Reorder marginal samples by ``ranks``.

    Row ``j`` of the output is ``(X_1^(R_1^(j):n), ..., X_d^(R_d^(j):n))``.
    """
    dists = tuple(
        m if isinstance(m, EmpiricalDistribution) else EmpiricalDistribution(m) for m in margins
    )
    if len(dists) != ranks.d:
        raise DataError(f"{len(dists)} margins given but rank matrix has {ranks.d} columns")
    for i, m in enumerate(dists):
        if m.n != ranks.n:
            raise DataError(f"margin {i + 1} has {m.n} values, rank matrix has {ranks.n} rows")
    x = np.column_stack([m.values[ranks.ranks[:, i] - 1] for i, m in enumerate(dists)])
    x.setflags(write=False)
    return SyntheticSample(x, ranks, dists)


def empirical_copula_eval(ranks: RankMatrix, u) -> float:
    """Rank-based empirical copula ``(1/n) #{k : R^(k)/n <= u}`` (``u`` may be a batch)."""
    u = np.asarray(u, dtype=np.float64)
    scaled = ranks.ranks / ranks.n
    if u.ndim == 1:
        return float(np.count_nonzero(np.all(scaled <= u, axis=1)) / ranks.n)
    return np.array([np.count_nonzero(np.all(scaled <= p, axis=1)) for p in u]) / ranks.n


def joint_ecdf(points: np.ndarray, x) -> float:
    """Multivariate empirical CDF of ``points`` at ``x`` (``x`` may be a batch)."""
    points = np.asarray(points)
    x = np.asarray(x, dtype=np.float64)
    n = points.shape[0]
    if x.ndim == 1:
        return float(np.count_nonzero(np.all(points <= x, axis=1)) / n)
    return np.array([np.count_nonzero(np.all(points <= p, axis=1)) for p in x]) / n


def is_latin_hypercube(ranks: np.ndarray) -> bool:
    ranks = np.asarray(ranks)
    if ranks.ndim != 2:
        return False
    expected = np.arange(1, ranks.shape[0] + 1)
    return all(np.array_equal(np.sort(ranks[:, i]), expected) for i in range(ranks.shape[1]))


def verify_latin_hypercube(s: Union[SyntheticSample, RankMatrix, np.ndarray]) -> bool:
    """True iff every rank column is a permutation of ``1..n``."""
    if isinstance(s, SyntheticSample):
        s = s.source_ranks
    if isinstance(s, RankMatrix):
        s = s.ranks
    return is_latin_hypercube(s)
