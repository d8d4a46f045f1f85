"""Copula families: samplers, densities and density geometry.

Supported families are the independence copula in any dimension, the
bivariate Clayton copula, the bivariate Gauss copula and the d-variate Gauss
copula with a given correlation matrix.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy import integrate, optimize, special

_TINY = np.nextafter(0.0, 1.0)
_ONE_MINUS = np.nextafter(1.0, 0.0)


class NoRidgeError(ValueError):
    pass


def _check_interior(u, d):
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {u.shape}")
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("density is only defined strictly inside the unit cube")
    return u


class IndependenceCopula:
    def __init__(self, d: int = 2):
        if int(d) != d or d < 2:
            raise ValueError("independence copula needs dimension d >= 2")
        self.d = int(d)

    def __repr__(self):
        return f"IndependenceCopula(d={self.d})"

    def _draw(self, n, rng):
        return rng.random((n, self.d))

    def density(self, u):
        u = _check_interior(u, self.d)
        out = np.ones(u.shape[:-1])
        return float(out) if out.ndim == 0 else out

    def cond_cdf(self, u1, u2):
        """P(U1 <= u1 | U2 = u2) for the bivariate case."""
        return np.clip(np.asarray(u1, dtype=np.float64), 0.0, 1.0) + 0.0 * np.asarray(u2)

    def ridge(self, u2):
        raise NoRidgeError("independence copula has a constant density: no ridge")


class ClaytonCopula:
    """Bivariate Clayton copula ``(u1^-theta + u2^-theta - 1)^(-1/theta)``."""

    d = 2

    def __init__(self, theta: float):
        if not theta > 0:
            raise ValueError("Clayton parameter theta must be positive")
        self.theta = float(theta)

    def __repr__(self):
        return f"ClaytonCopula(theta={self.theta!r})"

    def _draw(self, n, rng):
        # Marshall-Olkin: U_i = (1 + E_i / V)^(-1/theta), V ~ Gamma(1/theta).
        # For shape a < 1, log V = log Gamma(a + 1) + log(W) / a avoids V == 0.
        a = 1.0 / self.theta
        if a < 1.0:
            log_v = np.log(rng.gamma(a + 1.0, size=n)) + np.log(rng.random(n)) / a
        else:
            log_v = np.log(rng.gamma(a, size=n))
        log_e = np.log(rng.exponential(size=(n, 2)))
        x = log_e - log_v[:, None]
        return np.exp(-np.logaddexp(0.0, x) / self.theta)

    def cdf(self, u):
        u = np.asarray(u, dtype=np.float64)
        th = self.theta
        s = u[..., 0] ** -th + u[..., 1] ** -th - 1.0
        return s ** (-1.0 / th)

    def density(self, u):
        u = _check_interior(u, 2)
        th = self.theta
        u1, u2 = u[..., 0], u[..., 1]
        # (u1^-th + u2^-th - 1)^(-2-1/th) (th+1) (u1 u2)^(-th-1), in logs
        log_s = np.log(u1 ** -th + u2 ** -th - 1.0)
        log_c = (-2.0 - 1.0 / th) * log_s + np.log1p(th) + (-th - 1.0) * (np.log(u1) + np.log(u2))
        out = np.exp(log_c)
        return float(out) if out.ndim == 0 else out

    def cond_cdf(self, u1, u2):
        """P(U1 <= u1 | U2 = u2), the partial derivative of C in u2."""
        th = self.theta
        u1 = np.clip(np.asarray(u1, dtype=np.float64), 0.0, 1.0)
        u2 = np.asarray(u2, dtype=np.float64)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            z = 1.0 + u2 ** th * (u1 ** -th - 1.0)
            out = z ** (-(1.0 + th) / th)
        return np.where(u1 <= 0.0, 0.0, np.where(u1 >= 1.0, 1.0, out))

    def ridge(self, u2):
        th = self.theta
        u2 = np.asarray(u2, dtype=np.float64)
        base = (th + 1.0) / th * (u2 ** -th - 1.0)
        with np.errstate(divide="ignore"):
            r = np.minimum(base ** (-1.0 / th), 1.0)
        return float(r) if r.ndim == 0 else r

    def kendall_tau(self) -> float:
        return self.theta / (self.theta + 2.0)


class GaussMultiCopula:
    """Gauss copula with correlation matrix ``corr``."""

    def __init__(self, corr):
        corr = np.array(corr, dtype=np.float64)
        if corr.ndim != 2 or corr.shape[0] != corr.shape[1] or corr.shape[0] < 2:
            raise ValueError("correlation matrix must be square with d >= 2")
        if not np.allclose(corr, corr.T, atol=1e-12, rtol=0):
            raise ValueError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-12, rtol=0):
            raise ValueError("correlation matrix must have unit diagonal")
        try:
            self._chol = np.linalg.cholesky(corr)
        except np.linalg.LinAlgError:
            raise ValueError("correlation matrix must be positive definite") from None
        self.corr = corr
        self.d = corr.shape[0]
        self._inv = np.linalg.inv(corr)
        self._logdet = 2.0 * np.sum(np.log(np.diag(self._chol)))

    def __repr__(self):
        return f"GaussMultiCopula(d={self.d})"

    def _draw(self, n, rng):
        z = rng.standard_normal((n, self.d)) @ self._chol.T
        return special.ndtr(z)

    def log_density_normal_scores(self, q):
        """Log density written in terms of the normal scores ``q``."""
        aq = q - q @ self._inv  # (I - Sigma^-1) q, Sigma^-1 symmetric
        return -0.5 * self._logdet + 0.5 * np.sum(q * aq, axis=-1)

    def density(self, u):
        u = _check_interior(u, self.d)
        out = np.exp(self.log_density_normal_scores(special.ndtri(u)))
        return float(out) if out.ndim == 0 else out


class GaussCopula(GaussMultiCopula):
    """Bivariate Gauss copula with correlation ``rho``."""

    def __init__(self, rho: float):
        if not -1.0 < rho < 1.0:
            raise ValueError("Gauss correlation rho must lie in (-1, 1)")
        self.rho = float(rho)
        super().__init__([[1.0, rho], [rho, 1.0]])

    def __repr__(self):
        return f"GaussCopula(rho={self.rho!r})"

    def cond_cdf(self, u1, u2):
        """P(U1 <= u1 | U2 = u2)."""
        rho = self.rho
        q1 = special.ndtri(np.clip(np.asarray(u1, dtype=np.float64), 0.0, 1.0))
        q2 = special.ndtri(np.asarray(u2, dtype=np.float64))
        with np.errstate(invalid="ignore"):
            z = (q1 - rho * q2) / np.sqrt(1.0 - rho * rho)
        return special.ndtr(z)

    def ridge(self, u2):
        if self.rho == 0.0:
            raise NoRidgeError("Gauss copula with rho = 0 has a constant density: no ridge")
        r = special.ndtr(special.ndtri(np.asarray(u2, dtype=np.float64)) / self.rho)
        return float(r) if np.ndim(r) == 0 else r


CopulaModel = Union[IndependenceCopula, ClaytonCopula, GaussCopula, GaussMultiCopula]


def parse_copula(spec: str, base_dir: Union[str, Path, None] = None) -> CopulaModel:
    """Parse ``indep:d``, ``clayton:theta``, ``gauss:rho`` or ``gaussmulti:path``."""
    kind, _, arg = spec.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "indep":
            return IndependenceCopula(int(arg) if arg else 2)
        if kind == "clayton":
            return ClaytonCopula(float(arg))
        if kind == "gauss":
            return GaussCopula(float(arg))
        if kind == "gaussmulti":
            path = Path(arg)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            return GaussMultiCopula(np.loadtxt(path, delimiter=",", ndmin=2))
    except (ValueError, OSError) as exc:
        raise ValueError(f"bad copula spec {spec!r}: {exc}") from None
    raise ValueError(f"bad copula spec {spec!r}")


# --------------------------------------------------------------------------
# sampling


@dataclass(frozen=True, eq=False)
class CopulaSample:
    matrix: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]


def _break_ties(col: np.ndarray) -> None:
    # Nudge later duplicates by one ulp until the column is tie-free.
    while True:
        order = np.argsort(col, kind="stable")
        s = col[order]
        dup = np.flatnonzero(s[1:] == s[:-1]) + 1
        if dup.size == 0:
            return
        idx = order[dup]
        toward = np.where(col[idx] < 0.5, 1.0, 0.0)
        col[idx] = np.nextafter(col[idx], toward)


def sample(copula: CopulaModel, n: int, seed: int) -> CopulaSample:
    """Draw ``n`` i.i.d. points of ``copula`` using a PCG64 stream seeded by ``seed``."""
    if int(n) != n or n < 1:
        raise ValueError("sample size must be a positive integer")
    rng = np.random.default_rng(seed)
    u = np.asarray(copula._draw(int(n), rng), dtype=np.float64)
    np.clip(u, _TINY, _ONE_MINUS, out=u)
    for i in range(u.shape[1]):
        _break_ties(u[:, i])
    u.setflags(write=False)
    return CopulaSample(u, int(seed))


def density(copula: CopulaModel, u):
    return copula.density(u)


def ridge(copula: CopulaModel, u2):
    """Location ``u1*(u2)`` of the density maximum along the first coordinate."""
    if not hasattr(copula, "ridge") or getattr(copula, "d", 2) != 2:
        raise NoRidgeError(f"{copula!r} has no ridge curve")
    return copula.ridge(u2)


# --------------------------------------------------------------------------
# density growth near the boundary


def _profile_max(copula, eps, u2):
    u1 = np.clip(copula.ridge(u2), eps, 1.0 - eps)
    return copula.density(np.stack([u1, u2], axis=-1))


def _k_epsilon_bivariate(copula, eps):
    # The density is unimodal in u1 with mode on the ridge, so the 2-D
    # supremum reduces to a 1-D search along the clipped ridge.
    lo, hi = eps, 1.0 - eps
    z = np.linspace(special.ndtri(lo), special.ndtri(hi), 2049)
    grid = np.unique(np.concatenate([special.ndtr(z), np.linspace(lo, hi, 2049), [lo, hi]]))
    grid = grid[(grid >= lo) & (grid <= hi)]
    vals = _profile_max(copula, eps, grid)
    best = float(np.max(vals))
    for _ in range(2):
        i = int(np.argmax(vals))
        a = grid[max(i - 1, 0)]
        b = grid[min(i + 1, grid.size - 1)]
        grid = np.linspace(a, b, 257)
        vals = _profile_max(copula, eps, grid)
        best = max(best, float(np.max(vals)))
    return best


def _k_epsilon_gauss_multi(copula, eps):
    # max of q'(I - Sigma^-1)q / 2 over the box [q(eps), q(1-eps)]^d
    a = float(special.ndtri(1.0 - eps))
    d = copula.d
    amat = np.eye(d) - copula._inv

    def neg(q):
        return -0.5 * q @ amat @ q, -(amat @ q)

    starts = []
    if d <= 10:
        grid = np.array(np.meshgrid(*([[-a, a]] * d), indexing="ij")).reshape(d, -1).T
        starts.extend(grid)
    rng = np.random.default_rng(0)
    starts.extend(rng.uniform(-a, a, size=(32, d)))
    starts.append(np.zeros(d))
    best = -np.inf
    for q0 in starts:
        res = optimize.minimize(neg, q0, jac=True, method="L-BFGS-B", bounds=[(-a, a)] * d)
        best = max(best, -float(res.fun), -float(neg(np.asarray(q0))[0]))
    return float(np.exp(-0.5 * copula._logdet + best))


def k_epsilon(copula: CopulaModel, eps: float) -> float:
    """Supremum of the copula density over the inner cube ``[eps, 1-eps]^d``."""
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if isinstance(copula, IndependenceCopula):
        return 1.0
    if isinstance(copula, GaussCopula):
        if copula.rho == 0.0:
            return 1.0
        return _k_epsilon_bivariate(copula, eps)
    if isinstance(copula, ClaytonCopula):
        return _k_epsilon_bivariate(copula, eps)
    if isinstance(copula, GaussMultiCopula):
        return _k_epsilon_gauss_multi(copula, eps)
    raise TypeError(f"no closed-form density for {copula!r}")


@dataclass(frozen=True)
class IntegralCondition:
    """Numerical check of ``int_0^{1/2} sqrt(log K(eps^2)) d eps < inf``.

    ``growth_exponent`` is the fitted polynomial order ``k`` in
    ``K(eps) ~ C eps^-k``; ``log_growth`` is the fitted ``gamma`` in
    ``log K(eps) ~ eps^-gamma``. The integral is finite iff ``gamma < 1``.
    """

    value: float
    tail_bound: float
    total: float
    growth_exponent: float
    log_growth: float
    finite: bool


def condition_025_integral(copula: CopulaModel, eps_min: float = 1e-4) -> IntegralCondition:
    def integrand(e):
        return np.sqrt(max(np.log(k_epsilon(copula, e * e)), 0.0))

    if isinstance(copula, IndependenceCopula) or (
        isinstance(copula, GaussCopula) and copula.rho == 0.0
    ):
        return IntegralCondition(0.0, 0.0, 0.0, 0.0, 0.0, True)

    value, _ = integrate.quad(integrand, eps_min, 0.5, limit=200)

    # growth of K on the range reached by eps^2 near eps_min
    eps_fit = np.logspace(np.log10(eps_min**2), np.log10(eps_min), 9)
    log_k = np.log([k_epsilon(copula, e) for e in eps_fit])
    big_l = np.log(1.0 / eps_fit)
    k, a = np.polyfit(big_l, log_k, 1)
    pos = log_k > 0
    if pos.sum() >= 3:
        gamma = float(np.polyfit(big_l[pos], np.log(log_k[pos]), 1)[0])
    else:
        gamma = 0.0
    finite = gamma < 1.0
    if finite:
        # K(eps^2) ~ e^a eps^(-2k) below eps_min
        tail, _ = integrate.quad(
            lambda e: np.sqrt(max(a + 2.0 * k * np.log(1.0 / e), 0.0)), 0.0, eps_min, limit=200
        )
    else:
        tail = np.inf
    return IntegralCondition(
        float(value), float(tail), float(value + tail), float(k), gamma, bool(finite)
    )
