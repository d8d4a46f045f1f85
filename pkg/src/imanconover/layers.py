"""Lower-layer geometry in the unit square.

For margins ``F_1, ..., F_d`` and a threshold ``t`` the lower layer of the
transformed half-space ``{x : x_1 + ... + x_d <= t}`` is the set of
``u`` with ``sum_i F_i^<-(u_i) <= t``. In two dimensions its upper boundary
``B_t`` is traced by ``s -> (F_1(s), F_2(t - s))``.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .copulas import CopulaModel

ETA = 1e-6
CHUNK = 1 << 18


@dataclass(frozen=True)
class LowerLayerSpec:
    margins: tuple
    t: float

    def __init__(self, margins: Sequence, t: float):
        object.__setattr__(self, "margins", tuple(margins))
        object.__setattr__(self, "t", float(t))

    @property
    def d(self) -> int:
        return len(self.margins)

    def transform(self, x):
        """``T(x) = (F_1(x_1), ..., F_d(x_d))``."""
        x = np.asarray(x, dtype=np.float64)
        return np.stack([m.cdf(x[..., i]) for i, m in enumerate(self.margins)], axis=-1)

    def inverse_transform(self, u):
        u = np.asarray(u, dtype=np.float64)
        return np.stack([m.quantile(u[..., i]) for i, m in enumerate(self.margins)], axis=-1)


def layer_membership(spec: LowerLayerSpec, v):
    """True where ``sum_i F_i^<-(v_i) <= t``; ``v`` must lie in ``(0,1)^d``."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != spec.d:
        raise ValueError(f"expected points of dimension {spec.d}")
    if np.any((v <= 0.0) | (v >= 1.0)):
        raise ValueError("membership is only tested for interior points")
    out = spec.inverse_transform(v).sum(axis=-1) <= spec.t
    return bool(out) if out.ndim == 0 else out


def layer_probability_mc(copula: CopulaModel, spec: LowerLayerSpec, n_mc: int, seed: int):
    """Monte-Carlo estimate of the copula mass of the lower layer, with stderr."""
    from .copulas import sample

    hits = layer_membership(spec, sample(copula, n_mc, seed).matrix)
    p = float(np.mean(hits))
    return p, float(np.sqrt(p * (1.0 - p) / n_mc))


# --------------------------------------------------------------------------
# boundary curves


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """Polyline approximation of ``B_t`` for ``d = 2``.

    ``points`` is the parametric part ``(F_1(s), F_2(t-s))``, ordered by
    increasing ``s``. When it ends on an axis, ``B_t`` continues along that
    axis to the corner of the square; :meth:`polyline` includes those
    segments.
    """

    points: np.ndarray
    t: float

    @property
    def max_chord(self) -> float:
        if len(self.points) < 2:
            return 0.0
        return float(np.max(np.hypot(*np.diff(self.points, axis=0).T)))

    def polyline(self) -> np.ndarray:
        p = self.points
        head, tail = [], []
        if p[0, 0] == 0.0 and p[0, 1] < 1.0:
            head = [[0.0, 1.0]]
        if p[-1, 1] == 0.0 and p[-1, 0] < 1.0:
            tail = [[1.0, 0.0]]
        return np.vstack([np.reshape(head, (-1, 2)), p, np.reshape(tail, (-1, 2))])

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["u1", "u2"])
            for a, b in self.points:
                w.writerow([repr(float(a)), repr(float(b))])


def _range(m):
    lo, hi = m.support
    if not np.isfinite(lo):
        lo = float(m.quantile(ETA))
    if not np.isfinite(hi):
        hi = float(m.quantile(1.0 - ETA))
    return float(lo), float(hi)


def boundary_curve(spec: LowerLayerSpec, resolution: int = 10_000) -> BoundaryCurve:
    """Sample ``s -> (F_1(s), F_2(t - s))`` into a polyline of about ``resolution`` segments.

    Unbounded supports are clipped to the quantile levels ``[1e-6, 1 - 1e-6]``.
    Parameter values are spread evenly in both ``u1`` and ``u2``, so every
    chord is at most ``2*sqrt(2)/resolution`` long.
    """
    if spec.d != 2:
        raise ValueError("boundary curves are only available for d = 2")
    f1, f2 = spec.margins
    t = spec.t
    lo1, hi1 = _range(f1)
    lo2, hi2 = _range(f2)
    s_lo = max(lo1, t - hi2)
    s_hi = min(hi1, t - lo2)
    if s_lo > s_hi:
        corner = [0.0, 0.0] if t < lo1 + lo2 else [1.0, 1.0]
        return BoundaryCurve(np.array([corner]), t)
    half = max(resolution // 2, 1)
    p1 = np.linspace(float(f1.cdf(s_lo)), float(f1.cdf(s_hi)), half + 1)[1:-1]
    p2 = np.linspace(float(f2.cdf(t - s_hi)), float(f2.cdf(t - s_lo)), half + 1)[1:-1]
    s = np.concatenate(
        [[s_lo, s_hi], f1.quantile(p1[p1 > 0]), t - f2.quantile(p2[p2 > 0])]
    )
    s = np.unique(np.clip(s, s_lo, s_hi))
    pts = np.column_stack([f1.cdf(s), f2.cdf(t - s)])
    return BoundaryCurve(pts, t)


def _segment_distance(p, a, b):
    ax, ay = a[..., 0], a[..., 1]
    dx, dy = b[..., 0] - ax, b[..., 1] - ay
    px, py = p[..., 0] - ax, p[..., 1] - ay
    den = dx * dx + dy * dy
    with np.errstate(invalid="ignore", divide="ignore"):
        w = (px * dx + py * dy) / den
    w = np.clip(np.nan_to_num(w, nan=0.0, posinf=0.0, neginf=0.0), 0.0, 1.0)
    return np.hypot(px - w * dx, py - w * dy)


def _ragged(lo, hi):
    """Flatten index ranges ``[lo_i, hi_i)`` into (owner, index) pairs."""
    sizes = np.maximum(hi - lo, 0)
    owner = np.repeat(np.arange(len(lo)), sizes)
    offs = np.arange(owner.size) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    return owner, lo[owner] + offs


def _min_by_owner(owner, values, n):
    out = np.full(n, np.inf)
    np.minimum.at(out, owner, values)
    return out


class _Polyline:
    """Exact distance queries against a monotone polyline.

    Along the polyline ``u1`` is non-decreasing and ``u2`` non-increasing, so
    ``u1 - u2`` is monotone: one binary search finds where the polyline
    crosses the diagonal through a query point, which yields the exact
    Chebyshev distance ``L`` and an upper bound from nearby segments. The
    Euclidean distance lies in ``[L, sqrt(2) L]``. Remaining points are
    resolved through a coarser copy (every ``block``-th vertex) whose
    deviation from this polyline is at most ``dev``.
    """

    def __init__(self, vertices: np.ndarray, block: int = 16):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        self.v = v
        self.m = len(v)
        self.x = v[:, 0]
        self.neg_y = -v[:, 1]
        self.s = v[:, 0] - v[:, 1]
        seg = np.diff(v, axis=0)
        self.h = float(np.max(np.hypot(*seg.T))) if len(seg) else 0.0
        self.block = block
        self.child = None
        self.dev = 0.0
        if self.m > 4 * block:
            idx = np.arange(0, self.m, block)
            if idx[-1] != self.m - 1:
                idx = np.append(idx, self.m - 1)
            self.child = _Polyline(v[idx], block)
            # deviation of every fine vertex from its block's coarse segment
            owner = np.minimum(np.arange(self.m) // block, len(idx) - 2)
            self.dev = float(
                np.max(_segment_distance(v, self.child.v[owner], self.child.v[owner + 1]))
            )

    def _seg_dist(self, u, j):
        return _segment_distance(u, self.v[j], self.v[j + 1])

    def bounds(self, u):
        """Exact Chebyshev distance and an upper bound on the Euclidean distance."""
        v, s, m = self.v, self.s, self.m
        if m == 1:
            d = np.hypot(*(u - v[0]).T)
            return np.max(np.abs(u - v[0]), axis=1), d
        k = np.clip(np.searchsorted(s, u[:, 0] - u[:, 1]), 1, m - 1)
        a, b = v[k - 1], v[k]
        ds = s[k] - s[k - 1]
        w = np.where(ds > 0, (u[:, 0] - u[:, 1] - s[k - 1]) / np.where(ds > 0, ds, 1.0), 0.0)
        cross = a + np.clip(w, 0.0, 1.0)[:, None] * (b - a)
        cheb = np.max(np.abs(cross - u), axis=1)
        up = np.full(len(u), np.inf)
        for off in (-2, -1, 0, 1):
            j = np.clip(k + off, 1, m - 1) - 1
            up = np.minimum(up, self._seg_dist(u, j))
        return cheb, up

    def segments_within(self, u, r):
        """All (owner, segment, distance) with segment distance ``<= r``."""
        if self.m == 1:
            return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
        if self.child is None:
            rr = r + 0.5 * self.h
            lo = np.maximum(
                np.searchsorted(self.x, u[:, 0] - rr, side="left"),
                np.searchsorted(self.neg_y, -u[:, 1] - rr, side="left"),
            )
            hi = np.minimum(
                np.searchsorted(self.x, u[:, 0] + rr, side="right"),
                np.searchsorted(self.neg_y, -u[:, 1] + rr, side="right"),
            )
            owner, seg = _ragged(np.clip(lo - 1, 0, self.m - 2), np.clip(hi, 0, self.m - 1))
        else:
            c_owner, c_seg, _ = self.child.segments_within(u, r + self.dev)
            lo = c_seg * self.block
            hi = np.minimum(lo + self.block, self.m - 1)
            o, seg = _ragged(lo, hi)
            owner = c_owner[o]
        dist = self._seg_dist(u[owner], seg)
        keep = dist <= r[owner]
        return owner[keep], seg[keep], dist[keep]

    def exact(self, u):
        cheb, up = self.bounds(u)
        rest = np.flatnonzero(up > cheb * (1.0 + 1e-12))
        if rest.size:
            ur = u[rest]
            r = up[rest]
            if self.child is not None:
                r = np.minimum(r, self.child.exact(ur) + self.dev)
            owner, _, dist = self.segments_within(ur, r)
            up[rest] = np.minimum(up[rest], _min_by_owner(owner, dist, rest.size))
        return up

    def within(self, u, deltas):
        """Boolean matrix ``distance(u_k) <= deltas_j``."""
        cheb, up = self.bounds(u)
        hits = up[:, None] <= deltas[None, :]
        undecided = np.any((cheb[:, None] <= deltas[None, :]) & ~hits, axis=1)
        idx = np.flatnonzero(undecided)
        if idx.size and self.child is not None:
            # the coarse distance is within ``dev`` of the fine one
            dc = self.child.exact(u[idx])[:, None]
            h = hits[idx] | (dc + self.dev <= deltas[None, :])
            hits[idx] = h
            idx = idx[np.any((dc - self.dev <= deltas[None, :]) & ~h, axis=1)]
        if idx.size:
            hits[idx] = self.exact(u[idx])[:, None] <= deltas[None, :]
        return hits


class _PolylineIndex:
    """Distance to a boundary polyline.

    The two end segments (possibly long axis pieces) are handled
    directly; the short inner segments go through :class:`_Polyline`.
    """

    def __init__(self, curve: BoundaryCurve, chunk: int = 1 << 16):
        line = curve.polyline()
        self.line = line
        self.inner = _Polyline(line[1:-1]) if len(line) >= 4 else None
        self.chunk = chunk

    def _ends(self, u):
        line = self.line
        if len(line) == 1:
            return np.hypot(*(u - line[0]).T)
        out = _segment_distance(u, line[0], line[1])
        if len(line) > 2:
            out = np.minimum(out, _segment_distance(u, line[-2], line[-1]))
        return out

    def distance(self, u):
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        out = np.empty(len(u))
        for a in range(0, len(u), self.chunk):
            blk = u[a : a + self.chunk]
            d = self._ends(blk)
            if self.inner is not None:
                d = np.minimum(d, self.inner.exact(blk))
            out[a : a + self.chunk] = d
        return out

    def within(self, u, deltas):
        u = np.atleast_2d(np.asarray(u, dtype=np.float64))
        deltas = np.asarray(deltas, dtype=np.float64)
        out = np.empty((len(u), len(deltas)), dtype=bool)
        for a in range(0, len(u), self.chunk):
            blk = u[a : a + self.chunk]
            hits = self._ends(blk)[:, None] <= deltas[None, :]
            if self.inner is not None:
                hits |= self.inner.within(blk, deltas)
            out[a : a + self.chunk] = hits
        return out


def distance_to_boundary(curve: BoundaryCurve, u):
    """Euclidean distance from ``u`` (a point or an array of points) to the polyline of ``curve``."""
    if len(curve.points) == 0:
        raise ValueError("empty curve")
    out = _PolylineIndex(curve).distance(u)
    return float(out[0]) if np.ndim(u) == 1 else out


def _mc_hits(draw, curve, deltas, n_mc, seed, threads):
    deltas = np.atleast_1d(np.asarray(deltas, dtype=np.float64))
    index = _PolylineIndex(curve)
    n_chunks = -(-n_mc // CHUNK)
    seqs = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(CHUNK, n_mc - i * CHUNK) for i in range(n_chunks)]

    def run(i):
        u = draw(sizes[i], np.random.default_rng(seqs[i]))
        return np.count_nonzero(index.within(u, deltas), axis=0)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            counts = list(ex.map(run, range(n_chunks)))
    else:
        counts = [run(i) for i in range(n_chunks)]
    p = np.sum(counts, axis=0) / n_mc
    err = np.sqrt(p * (1.0 - p) / n_mc)
    return p, err


def _squeeze(p, err, delta):
    if np.ndim(delta) == 0:
        return float(p[0]), float(err[0])
    return p, err


def volume_u_delta(curve: BoundaryCurve, delta, n_mc: int = 10**6, seed: int = 0, threads: int = 1):
    """Monte-Carlo Lebesgue measure of the closed ``delta``-neighbourhood of ``B_t``.

    Returns ``(estimate, stderr)``; ``delta`` may be an array.
    """
    if np.any(np.asarray(delta) <= 0):
        raise ValueError("delta must be positive")
    p, err = _mc_hits(lambda n, rng: rng.random((n, 2)), curve, delta, n_mc, seed, threads)
    return _squeeze(p, err, delta)


def copula_mass_u_delta(
    copula: CopulaModel, curve: BoundaryCurve, delta, n_mc: int = 10**6, seed: int = 0, threads: int = 1
):
    """Monte-Carlo copula mass of the ``delta``-neighbourhood of ``B_t``."""
    if np.any(np.asarray(delta) <= 0):
        raise ValueError("delta must be positive")
    if copula.d != 2:
        raise ValueError("neighbourhood masses are only available for d = 2")
    p, err = _mc_hits(copula._draw, curve, delta, n_mc, seed, threads)
    return _squeeze(p, err, delta)
