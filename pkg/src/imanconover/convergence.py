"""Replicated convergence experiments for the sum-distribution estimator.

An experiment draws fresh marginal samples and a fresh copula sample for
every ``(n, replication)`` cell, builds the estimate of the sum CDF and
records its sup-norm distance to an oracle CDF. Medians over replications
are then fitted on a log-log scale.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, interpolate, signal, special

from .aggregate import sum_cdf
from .copulas import (
    CopulaModel,
    GaussCopula,
    GaussMultiCopula,
    IndependenceCopula,
    sample,
)
from .margins import (
    EmpiricalDistribution,
    EmpiricalMargin,
    ExponentialMargin,
    NormalMargin,
    StepCdf,
    sup_distance,
)
from .reorder import compute_ranks, iman_conover

ORACLE_KINDS = (
    "ClosedFormNormalSum",
    "ClosedFormGammaSum",
    "NumericConvolution",
    "NumericLayerIntegral",
    "HighNReference",
)


class OracleIncompatible(ValueError):
    """The requested oracle cannot represent the given copula/margin model."""


@dataclass(frozen=True)
class OracleSpec:
    """Ground-truth CDF of the sum.

    ``grid`` is the lattice size for ``NumericConvolution`` and the number of
    tabulated thresholds for ``NumericLayerIntegral``; ``n_ref`` is the sample
    size for ``HighNReference``.
    """

    kind: str
    grid: Optional[int] = None
    n_ref: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ORACLE_KINDS:
            raise ValueError(f"unknown oracle kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "OracleSpec":
        """``"normal"``, ``"gamma"``, ``"conv[:grid]"``, ``"layer[:grid]"`` or ``"ref:N"``."""
        name, _, arg = text.partition(":")
        kinds = {
            "normal": "ClosedFormNormalSum",
            "gamma": "ClosedFormGammaSum",
            "conv": "NumericConvolution",
            "layer": "NumericLayerIntegral",
            "ref": "HighNReference",
        }
        if name not in kinds:
            raise ValueError(f"bad oracle spec {text!r}")
        kind = kinds[name]
        try:
            value = int(arg) if arg else None
        except ValueError:
            raise ValueError(f"bad oracle spec {text!r}") from None
        if kind == "HighNReference":
            if value is None:
                raise ValueError("ref oracle needs a sample size, e.g. ref:1000000")
            return cls(kind, n_ref=value)
        return cls(kind, grid=value)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "grid": self.grid, "n_ref": self.n_ref, "seed": self.seed}


# --------------------------------------------------------------------------
# oracles


def _normal_sum(copula, margins):
    if not all(isinstance(m, NormalMargin) for m in margins):
        raise OracleIncompatible("ClosedFormNormalSum needs normal margins")
    d = len(margins)
    if isinstance(copula, GaussMultiCopula):
        corr = copula.corr
    elif isinstance(copula, IndependenceCopula):
        corr = np.eye(d)
    else:
        raise OracleIncompatible("ClosedFormNormalSum needs a Gauss or independence copula")
    sd = np.array([m.stddev for m in margins])
    mean = sum(m.mean for m in margins)
    scale = float(np.sqrt(sd @ corr @ sd))

    def cdf(t):
        return special.ndtr((np.asarray(t, dtype=np.float64) - mean) / scale)

    return cdf


def _gamma_sum(copula, margins):
    if not isinstance(copula, IndependenceCopula):
        raise OracleIncompatible("ClosedFormGammaSum needs the independence copula")
    if not all(isinstance(m, ExponentialMargin) for m in margins):
        raise OracleIncompatible("ClosedFormGammaSum needs exponential margins")
    rates = {m.rate for m in margins}
    if len(rates) != 1:
        raise OracleIncompatible("ClosedFormGammaSum needs equal exponential rates")
    rate = rates.pop()
    d = len(margins)

    def cdf(t):
        t = np.asarray(t, dtype=np.float64)
        return special.gammainc(d, rate * np.maximum(t, 0.0))

    return cdf


def _margin_range(m, eta=1e-12):
    if isinstance(m, EmpiricalMargin):
        return m.support
    lo, hi = m.support
    if not np.isfinite(lo):
        lo = float(m.quantile(eta))
    if not np.isfinite(hi):
        hi = float(m.quantile(1.0 - eta))
    return float(lo), float(hi)


def _convolution(copula, margins, grid):
    if not isinstance(copula, IndependenceCopula):
        raise OracleIncompatible("NumericConvolution needs the independence copula")
    grid = grid or (1 << 16)
    ranges = [_margin_range(m) for m in margins]
    h = sum(hi - lo for lo, hi in ranges) / grid
    if not h > 0:
        raise OracleIncompatible("NumericConvolution needs non-degenerate margins")
    # each margin becomes lattice masses F(c + h/2) - F(c - h/2) at centres c = k*h
    total = None
    origin = 0
    for m, (lo, hi) in zip(margins, ranges):
        k0, k1 = int(np.floor(lo / h)), int(np.ceil(hi / h))
        centres = np.arange(k0, k1 + 1) * h
        edges = m.cdf(np.append(centres - 0.5 * h, centres[-1] + 0.5 * h))
        mass = np.diff(np.asarray(edges, dtype=np.float64))
        total = mass if total is None else np.clip(signal.fftconvolve(total, mass), 0.0, None)
        origin += k0
    total = total / total.sum()
    # cumulative mass sits at the upper cell edges
    upper = (origin + np.arange(total.size) + 0.5) * h
    levels = np.cumsum(total)
    levels = np.minimum(levels / levels[-1], 1.0)
    x = np.concatenate(([upper[0] - h], upper))
    y = np.concatenate(([0.0], levels))

    def cdf(t):
        return np.interp(np.asarray(t, dtype=np.float64), x, y)

    return cdf


def _layer_integral(copula, margins, grid):
    if len(margins) != 2 or copula.d != 2 or not hasattr(copula, "cond_cdf"):
        raise OracleIncompatible("NumericLayerIntegral needs a bivariate copula with a conditional CDF")
    if any(isinstance(m, EmpiricalMargin) for m in margins):
        raise OracleIncompatible("NumericLayerIntegral needs parametric margins")
    grid = grid or 4001
    f1, f2 = margins
    (a1, b1), (a2, b2) = _margin_range(f1, 1e-10), _margin_range(f2, 1e-10)
    ts = np.linspace(a1 + a2, b1 + b2, grid)

    # G(t) = int_0^1 P(U1 <= F1(t - F2^<-(u2)) | U2 = u2) du2
    def integrand(u2):
        x2 = f2.quantile(u2)
        with np.errstate(invalid="ignore"):
            u1 = f1.cdf(ts - x2)
        return copula.cond_cdf(u1, np.full_like(ts, u2))

    vals, _ = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=1e-9, epsrel=1e-9, limit=2000)
    vals = np.maximum.accumulate(np.clip(vals, 0.0, 1.0))
    spline = interpolate.PchipInterpolator(ts, vals, extrapolate=False)

    def cdf(t):
        # outside the tabulated range the mass left over is below 1e-10
        t = np.asarray(t, dtype=np.float64)
        out = spline(np.clip(t, ts[0], ts[-1]))
        out = np.where(t < ts[0], 0.0, out)
        out = np.where(t > ts[-1], 1.0, out)
        return np.clip(out, 0.0, 1.0)

    return cdf


def _high_n_reference(copula, margins, n_ref, seed):
    if not n_ref or n_ref < 1:
        raise OracleIncompatible("HighNReference needs a positive reference size")
    ss = np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss.spawn(1)[0])
    xs = [m.sample(n_ref, rng) for m in margins]
    ranks = compute_ranks(sample(copula, n_ref, int(ss.generate_state(1)[0])))
    return sum_cdf(iman_conover(xs, ranks))


def oracle_cdf(spec: OracleSpec, copula: CopulaModel, margins: Sequence) -> Callable:
    """Ground-truth sum CDF for ``(copula, margins)``.

    Raises :class:`OracleIncompatible` if ``spec`` cannot handle the model.
    """
    if len(margins) != copula.d:
        raise OracleIncompatible(f"{len(margins)} margins for a copula of dimension {copula.d}")
    if spec.kind == "ClosedFormNormalSum":
        return _normal_sum(copula, margins)
    if spec.kind == "ClosedFormGammaSum":
        return _gamma_sum(copula, margins)
    if spec.kind == "NumericConvolution":
        return _convolution(copula, margins, spec.grid)
    if spec.kind == "NumericLayerIntegral":
        return _layer_integral(copula, margins, spec.grid)
    return _high_n_reference(copula, margins, spec.n_ref, spec.seed)


# --------------------------------------------------------------------------
# experiments


@dataclass
class ExperimentConfig:
    copula: CopulaModel
    margins: Sequence
    n_grid: Sequence[int]
    replications: int
    oracle: OracleSpec
    seed: int = 0
    estimator: str = "iman_conover"
    threads: int = 1

    def __post_init__(self):
        self.n_grid = [int(n) for n in self.n_grid]
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ValueError("n_grid must be non-empty and strictly increasing")
        if self.n_grid[0] < 1:
            raise ValueError("sample sizes must be positive")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if self.estimator not in ("iman_conover", "plugin"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if len(self.margins) != self.copula.d:
            raise ValueError(f"{len(self.margins)} margins for a copula of dimension {self.copula.d}")


@dataclass
class ConvergenceReport:
    n_grid: np.ndarray
    distances: np.ndarray  # shape (len(n_grid), replications)
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.n_grid = np.asarray(self.n_grid, dtype=np.int64)
        self.distances = np.atleast_2d(np.asarray(self.distances, dtype=np.float64))
        if self.distances.shape[0] != self.n_grid.size:
            raise ValueError("one row of distances per sample size is required")

    @classmethod
    def from_distances(cls, n_grid, distances, notes=None) -> "ConvergenceReport":
        d = np.asarray(distances, dtype=np.float64)
        if d.ndim == 1:
            d = d[:, None]
        return cls(n_grid, d, dict(notes or {}))

    @property
    def replications(self) -> int:
        return self.distances.shape[1]

    @property
    def medians(self) -> np.ndarray:
        return np.median(self.distances, axis=1)

    @property
    def q25(self) -> np.ndarray:
        return np.quantile(self.distances, 0.25, axis=1)

    @property
    def q75(self) -> np.ndarray:
        return np.quantile(self.distances, 0.75, axis=1)

    def to_dict(self) -> dict:
        out = {
            "n_grid": self.n_grid.tolist(),
            "replications": self.replications,
            "distances": self.distances.tolist(),
            "median": self.medians.tolist(),
            "q25": self.q25.tolist(),
            "q75": self.q75.tolist(),
            "notes": self.notes,
        }
        if self.n_grid.size >= 3:
            slope, intercept, r2 = fit_rate(self.n_grid, self.medians)
            out["fit"] = {"slope": slope, "intercept": intercept, "r_squared": r2}
        return out

    def to_json(self, path: Union[str, Path]) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "median", "q25", "q75"])
            for row in zip(self.n_grid, self.medians, self.q25, self.q75):
                w.writerow([int(row[0])] + [repr(float(x)) for x in row[1:]])


def _plugin_cdf(u: np.ndarray, xs) -> StepCdf:
    # transform the copula sample directly through the empirical quantiles
    cols = [EmpiricalDistribution(x).quantile(u[:, i]) for i, x in enumerate(xs)]
    return StepCdf.from_sample(np.sum(cols, axis=0))


def _one_cell(cfg: ExperimentConfig, oracle: Callable, i: int, rep: int) -> float:
    n = cfg.n_grid[i]
    ss = np.random.SeedSequence(cfg.seed, spawn_key=(i, rep))
    margin_ss, copula_ss = ss.spawn(2)
    rng = np.random.default_rng(margin_ss)
    xs = [m.sample(n, rng) for m in cfg.margins]
    cs = sample(cfg.copula, n, int(copula_ss.generate_state(1)[0]))
    if cfg.estimator == "plugin":
        est = _plugin_cdf(cs.matrix, xs)
    else:
        est = sum_cdf(iman_conover(xs, compute_ranks(cs)))
    return sup_distance(est, oracle)


def run_experiment(
    cfg: ExperimentConfig, inject: Optional[Callable[[int, int], float]] = None
) -> ConvergenceReport:
    """Run all ``(n, replication)`` cells and collect sup-norm distances.

    ``inject(n, rep)`` replaces the simulation with a given error value, which
    lets the reduction and fitting be tested in isolation.
    """
    notes = {
        "copula": repr(cfg.copula),
        "margins": [repr(m) for m in cfg.margins],
        "oracle": cfg.oracle.to_dict(),
        "estimator": cfg.estimator,
        "seed": cfg.seed,
    }
    if isinstance(cfg.copula, GaussCopula) and cfg.copula.rho < 0:
        notes["theoretical_bound"] = "O_P(n^-1/2 sqrt(log n))"
    cells = [(i, r) for i in range(len(cfg.n_grid)) for r in range(cfg.replications)]
    if inject is not None:
        vals = [float(inject(cfg.n_grid[i], r)) for i, r in cells]
    else:
        oracle = oracle_cdf(cfg.oracle, cfg.copula, cfg.margins)
        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
                vals = list(ex.map(lambda c: _one_cell(cfg, oracle, *c), cells))
        else:
            vals = [_one_cell(cfg, oracle, i, r) for i, r in cells]
    dist = np.array(vals).reshape(len(cfg.n_grid), cfg.replications)
    return ConvergenceReport(np.array(cfg.n_grid), dist, notes)


def fit_rate(report_or_n, medians=None, min_replications: int = 10):
    """OLS fit of ``log2(median) = slope * log2(n) + intercept``.

    Accepts a :class:`ConvergenceReport` (which must carry at least
    ``min_replications`` replications) or explicit ``(n_grid, medians)``.
    Returns ``(slope, intercept, r_squared)``.
    """
    if isinstance(report_or_n, ConvergenceReport):
        if report_or_n.replications < min_replications:
            raise ValueError(f"rate fits need at least {min_replications} replications")
        n, med = report_or_n.n_grid, report_or_n.medians
    else:
        n, med = report_or_n, medians
    x = np.log2(np.asarray(n, dtype=np.float64))
    y = np.log2(np.asarray(med, dtype=np.float64))
    if x.size < 3:
        raise ValueError("rate fits need at least 3 grid points")
    if x.size != y.size:
        raise ValueError("n_grid and medians differ in length")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), float(r2)
