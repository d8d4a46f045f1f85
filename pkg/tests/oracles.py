"""Independent reference implementations used by the tests.

These are deliberately naive (definition-level loops, closed forms) so that
they share no code path with the library.
"""

import math

import numpy as np
from scipy import special, stats


def ranks_by_counting(u):
    """R_i^(j) = #{k : U_i^(k) <= U_i^(j)}, O(n^2)."""
    u = np.asarray(u, dtype=float)
    n, d = u.shape
    out = np.empty((n, d), dtype=int)
    for i in range(d):
        for j in range(n):
            out[j, i] = sum(1 for k in range(n) if u[k, i] <= u[j, i])
    return out


def reorder_by_definition(margins, ranks):
    """Row j is (sorted(X_1)[R_1^(j) - 1], ..., sorted(X_d)[R_d^(j) - 1])."""
    cols = [sorted(m) for m in margins]
    return np.array([[cols[i][r - 1] for i, r in enumerate(row)] for row in np.asarray(ranks)])


def ecdf_count(sample, t):
    return sum(1 for x in sample if x <= t) / len(sample)


def joint_ecdf_loop(points, x):
    points = np.asarray(points)
    return sum(1 for p in points if all(p[i] <= x[i] for i in range(len(x)))) / len(points)


def empirical_copula_loop(ranks, u):
    ranks = np.asarray(ranks)
    n = ranks.shape[0]
    return sum(1 for r in ranks if all(r[i] / n <= u[i] for i in range(len(u)))) / n


def kendall_loop(points):
    """Pseudo-observations F_n(X^(j)) by brute force."""
    points = np.asarray(points)
    return np.array([joint_ecdf_loop(points, p) for p in points])


def layer_count_loop(u, margins, t):
    """Count copula points whose transformed coordinates sum to <= t.

    C_{i,n}(u_i) is the column ECDF of the copula sample, F_{i,n}^<- the
    ceil(n y)-th order statistic of margin i.
    """
    u = np.asarray(u)
    n, d = u.shape
    cols = [sorted(m) for m in margins]
    hits = 0
    for row in u:
        s = 0.0
        for i in range(d):
            c = sum(1 for k in range(n) if u[k, i] <= row[i])  # n * C_{i,n}(u_i)
            s += cols[i][c - 1]  # ceil(n * c/n) = c
        hits += s <= t
    return hits / n


def gamma_cdf(shape, rate, t):
    return float(special.gammainc(shape, rate * t)) if t > 0 else 0.0


def normal_sum_cdf(t, means, sds, corr):
    sds = np.asarray(sds, float)
    var = float(sds @ np.asarray(corr, float) @ sds)
    return float(stats.norm.cdf(t, loc=sum(means), scale=math.sqrt(var)))


def independence_kendall(t):
    """P(U1 U2 <= t) for independent uniforms."""
    t = np.asarray(t, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t > 0, t - t * np.log(t), 0.0)


def antidiagonal_strip_area(delta):
    """Area of {u in [0,1]^2 : |u1 + u2 - 1| / sqrt(2) <= delta} for small delta."""
    # two corner triangles of leg sqrt(2) delta are cut from a strip of width 2 delta
    return 2.0 * math.sqrt(2.0) * delta - 2.0 * delta * delta


def point_segment_distance(p, a, b):
    p, a, b = (np.asarray(v, float) for v in (p, a, b))
    ab = b - a
    den = float(ab @ ab)
    w = 0.0 if den == 0 else min(max(float((p - a) @ ab) / den, 0.0), 1.0)
    return float(np.linalg.norm(p - (a + w * ab)))


def polyline_distance_brute(line, points):
    line = np.asarray(line, float)
    pts = np.atleast_2d(points)
    a, b = line[:-1], line[1:]
    out = np.empty(len(pts))
    for k, p in enumerate(pts):
        ab = b - a
        den = np.sum(ab * ab, axis=1)
        w = np.clip(np.sum((p - a) * ab, axis=1) / np.where(den > 0, den, 1.0), 0.0, 1.0)
        out[k] = np.min(np.hypot(*(p - (a + w[:, None] * ab)).T))
    return out


def clayton_density(u1, u2, theta):
    s = u1 ** -theta + u2 ** -theta - 1.0
    return (theta + 1.0) * (u1 * u2) ** (-theta - 1.0) * s ** (-2.0 - 1.0 / theta)


def gauss_density(u1, u2, rho):
    x, y = stats.norm.ppf(u1), stats.norm.ppf(u2)
    joint = stats.multivariate_normal(mean=[0, 0], cov=[[1, rho], [rho, 1]]).pdf(np.column_stack([x, y]))
    return joint / (stats.norm.pdf(x) * stats.norm.pdf(y))


def clayton_cdf(u1, u2, theta):
    return (u1 ** -theta + u2 ** -theta - 1.0) ** (-1.0 / theta)


def quantile_stderr(values, p, alpha=0.05):
    """Sparsity-based standard error of the empirical p-quantile.

    ``sqrt(p(1-p)/n) / f(q_p)``, with ``1/f(q_p)`` estimated by a difference
    quotient of empirical quantiles at the Hall-Sheather bandwidth.
    """
    x = np.sort(np.asarray(values, float))
    n = x.size
    z = stats.norm.ppf(p)
    h = n ** (-1 / 3) * stats.norm.ppf(1 - alpha / 2) ** (2 / 3) * (
        1.5 * stats.norm.pdf(z) ** 2 / (2 * z * z + 1)
    ) ** (1 / 3)
    lo, hi = max(p - h, 1.0 / n), min(p + h, 1.0)

    def q(y):
        return x[max(math.ceil(n * y) - 1, 0)]

    sparsity = (q(hi) - q(lo)) / (hi - lo)
    return math.sqrt(p * (1 - p) / n) * sparsity
