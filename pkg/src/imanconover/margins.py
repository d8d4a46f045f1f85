"""Univariate distributions: empirical and parametric margins, step CDFs.

All quantiles use the left-continuous generalized inverse
``inf{t : F(t) >= y}``; no interpolation is ever applied.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
from scipy import special


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


def _prefix_levels(n: int) -> np.ndarray:
    # k/n with correctly rounded division, so that y == k/n compares exactly
    return np.arange(1, n + 1, dtype=np.float64) / n


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Empirical distribution of a univariate sample.

    ``values`` holds the sorted sample; ties are allowed.
    """

    values: np.ndarray
    _levels: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=np.float64).ravel(), kind="stable")
        if v.size == 0:
            raise DataError("empty sample")
        if not np.all(np.isfinite(v)):
            raise DataError("non-finite value")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_levels", _prefix_levels(v.size))

    @property
    def n(self) -> int:
        return int(self.values.size)

    def counts_le(self, t):
        """Number of sample points ``<= t`` (vectorized)."""
        return np.searchsorted(self.values, t, side="right")

    def cdf(self, t):
        k = self.counts_le(t)
        if np.ndim(k) == 0:
            return int(k) / self.n
        return k / self.n

    def quantile(self, y):
        """``ceil(n*y)``-th order statistic for ``y`` in (0, 1]."""
        y_arr = np.asarray(y, dtype=np.float64)
        if np.any(~((y_arr > 0.0) & (y_arr <= 1.0))):
            raise ValueError("quantile level must lie in (0, 1]")
        idx = np.searchsorted(self._levels, y_arr, side="left")
        out = self.values[idx]
        return float(out) if out.ndim == 0 else out

    def order_statistic(self, k):
        """1-based order statistic ``X^(k:n)``."""
        k = np.asarray(k)
        if np.any((k < 1) | (k > self.n)):
            raise IndexError("order statistic index out of range")
        out = self.values[k - 1]
        return float(out) if out.ndim == 0 else out

    @property
    def support(self) -> tuple[float, float]:
        return float(self.values[0]), float(self.values[-1])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Bootstrap draw of size ``n``."""
        return rng.choice(self.values, size=n, replace=True)

    def to_step_cdf(self) -> "StepCdf":
        return StepCdf.from_sample(self.values)


def ecdf_build(sample: Sequence[float]) -> EmpiricalDistribution:
    return EmpiricalDistribution(np.asarray(sample, dtype=np.float64))


# --------------------------------------------------------------------------
# parametric margins


class NormalMargin:
    def __init__(self, mean: float = 0.0, stddev: float = 1.0):
        if not stddev > 0:
            raise ValueError("normal stddev must be positive")
        self.mean = float(mean)
        self.stddev = float(stddev)

    def __repr__(self):
        return f"NormalMargin(mean={self.mean!r}, stddev={self.stddev!r})"

    support = (-np.inf, np.inf)

    def cdf(self, t):
        return special.ndtr((np.asarray(t, dtype=np.float64) - self.mean) / self.stddev)

    def quantile(self, y):
        y = np.asarray(y, dtype=np.float64)
        if np.any(~((y > 0.0) & (y <= 1.0))):
            raise ValueError("quantile level must lie in (0, 1]")
        return self.mean + self.stddev * special.ndtri(y)

    def pdf(self, t):
        z = (np.asarray(t, dtype=np.float64) - self.mean) / self.stddev
        return np.exp(-0.5 * z * z) / (self.stddev * np.sqrt(2 * np.pi))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(self.mean, self.stddev, size=n)


class ExponentialMargin:
    def __init__(self, rate: float = 1.0):
        if not rate > 0:
            raise ValueError("exponential rate must be positive")
        self.rate = float(rate)

    def __repr__(self):
        return f"ExponentialMargin(rate={self.rate!r})"

    support = (0.0, np.inf)

    def cdf(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.where(t > 0, -np.expm1(-self.rate * np.maximum(t, 0.0)), 0.0)

    def quantile(self, y):
        y = np.asarray(y, dtype=np.float64)
        if np.any(~((y > 0.0) & (y <= 1.0))):
            raise ValueError("quantile level must lie in (0, 1]")
        return -np.log1p(-y) / self.rate

    def pdf(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.where(t >= 0, self.rate * np.exp(-self.rate * np.maximum(t, 0.0)), 0.0)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.exponential(1.0 / self.rate, size=n)


class EmpiricalMargin:
    """Adapter giving an :class:`EmpiricalDistribution` the margin interface."""

    def __init__(self, dist: EmpiricalDistribution):
        self.dist = dist

    def __repr__(self):
        return f"EmpiricalMargin(n={self.dist.n})"

    @property
    def support(self):
        return self.dist.support

    def cdf(self, t):
        return np.asarray(self.dist.cdf(t), dtype=np.float64)

    def quantile(self, y):
        return np.asarray(self.dist.quantile(y), dtype=np.float64)

    def sample(self, n, rng):
        return self.dist.sample(n, rng)


MarginModel = Union[NormalMargin, ExponentialMargin, EmpiricalMargin]


def quantile(dist, y):
    """Generalized inverse ``inf{t : F(t) >= y}`` of a margin, ``y`` in (0, 1]."""
    out = dist.quantile(y)
    return float(out) if np.ndim(out) == 0 else out


def parse_margin(spec: str) -> MarginModel:
    """Parse ``"normal:mu,sigma"`` or ``"exp:rate"``.

    ``sigma`` is a standard deviation.
    """
    try:
        kind, _, args = spec.partition(":")
        params = [float(a) for a in args.split(",")] if args else []
        kind = kind.strip().lower()
        if kind == "normal" and len(params) == 2:
            return NormalMargin(*params)
        if kind in ("exp", "exponential") and len(params) == 1:
            return ExponentialMargin(params[0])
    except ValueError as exc:
        raise ValueError(f"bad margin spec {spec!r}: {exc}") from None
    raise ValueError(f"bad margin spec {spec!r}")


def read_sample_csv(path: Union[str, Path], header: bool = True) -> np.ndarray:
    """Read a single-column CSV of reals.

    Raises :class:`DataError` naming the offending line.
    """
    values = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 1:
                raise DataError(f"{path}:{lineno}: expected one column, got {len(row)}")
            try:
                x = float(row[0])
            except ValueError:
                raise DataError(f"{path}:{lineno}: not a number: {row[0]!r}") from None
            if not np.isfinite(x):
                raise DataError(f"{path}:{lineno}: non-finite value")
            values.append(x)
    if not values:
        raise DataError(f"{path}: empty sample")
    return np.asarray(values, dtype=np.float64)


# --------------------------------------------------------------------------
# step functions


class StepCdf:
    """Right-continuous step CDF with finitely many jumps.

    Parameters
    ----------
    jump_points : array
        Strictly increasing jump locations.
    levels : array
        CDF value at (and right of) each jump point; non-decreasing, last is 1.
    counts : array of int, optional
        Multiplicity of each jump point when the CDF is the empirical CDF of a
        sample of size ``counts.sum()``. Needed for tail averages.
    """

    def __init__(self, jump_points, levels, counts=None):
        x = np.asarray(jump_points, dtype=np.float64)
        y = np.asarray(levels, dtype=np.float64)
        if x.ndim != 1 or x.shape != y.shape or x.size == 0:
            raise ValueError("jump_points and levels must be equal-length 1-D arrays")
        if np.any(np.diff(x) <= 0):
            raise ValueError("jump_points must be strictly increasing")
        if np.any(np.diff(y) < 0) or y[0] < 0 or y[-1] != 1.0:
            raise ValueError("levels must be non-decreasing in [0, 1] ending at 1")
        self.jump_points = x
        self.levels = y
        self.counts = None if counts is None else np.asarray(counts, dtype=np.int64)

    @classmethod
    def from_sample(cls, values) -> "StepCdf":
        v = np.asarray(values, dtype=np.float64).ravel()
        if v.size == 0:
            raise DataError("empty sample")
        if not np.all(np.isfinite(v)):
            raise DataError("non-finite value")
        x, counts = np.unique(v, return_counts=True)
        cum = np.cumsum(counts)
        return cls(x, cum / v.size, counts)

    @property
    def n(self):
        return None if self.counts is None else int(self.counts.sum())

    def __call__(self, t):
        idx = np.searchsorted(self.jump_points, t, side="right")
        lv = np.concatenate(([0.0], self.levels))
        out = lv[idx]
        return float(out) if np.ndim(out) == 0 else out

    def left_limit(self, t):
        idx = np.searchsorted(self.jump_points, t, side="left")
        lv = np.concatenate(([0.0], self.levels))
        out = lv[idx]
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, y):
        y_arr = np.asarray(y, dtype=np.float64)
        if np.any(~((y_arr > 0.0) & (y_arr <= 1.0))):
            raise ValueError("quantile level must lie in (0, 1]")
        if self.counts is not None:
            # compare against k/n rather than cumulative sums of floats
            levels = np.cumsum(self.counts) / self.n
        else:
            levels = self.levels
        idx = np.searchsorted(levels, y_arr, side="left")
        out = self.jump_points[np.minimum(idx, levels.size - 1)]
        return float(out) if out.ndim == 0 else out

    def values(self) -> np.ndarray:
        """Sorted underlying sample (requires counts)."""
        if self.counts is None:
            raise ValueError("step CDF carries no sample multiplicities")
        return np.repeat(self.jump_points, self.counts)

    def __repr__(self):
        return f"StepCdf(jumps={self.jump_points.size}, n={self.n})"


def sup_distance(a: StepCdf, b: Union[StepCdf, Callable]) -> float:
    """Sup-norm distance between a step CDF and another CDF.

    For two step functions the supremum is attained at a jump point of
    either. For a continuous monotone ``b`` it is attained at a jump of ``a``,
    approached from the left or the right.
    """
    if isinstance(b, StepCdf):
        pts = np.union1d(a.jump_points, b.jump_points)
        return float(np.max(np.abs(a(pts) - b(pts))))
    x = a.jump_points
    bx = np.asarray(b(x), dtype=np.float64)
    right = a.levels
    left = np.concatenate(([0.0], a.levels[:-1]))
    return float(max(np.max(np.abs(bx - right)), np.max(np.abs(bx - left))))
