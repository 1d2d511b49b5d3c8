"""Distribution utilities: quadrature CDF, quantiles, means, ECDF and KS distance.

Quadrature uses Gauss-Legendre panels.  Panels start at the distribution's
breakpoints (where the density is not smooth) and are bisected until a
10-point and a 20-point rule agree.  The upper limit is chosen from the
exponential tail rate and then pushed out until the remaining tail mass is
negligible.  The panel integrals are cached per distribution, so evaluating
a CDF on a grid or inverting it costs one partial panel per point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import optimize, special

from .model import DomainError, MixedDistribution


class QuadratureError(RuntimeError):
    """Adaptive quadrature could not reach the requested tolerance."""


class BracketError(RuntimeError):
    """Quantile search could not bracket the requested probability."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances for integrating a ``MixedDistribution``.

    ``breakpoints`` and ``tail_rate`` default to the hints carried by the
    distribution when left empty/None.
    """

    abs_tol: float = 1e-9
    breakpoints: tuple[float, ...] = ()
    tail_rate: float | None = None
    residual: float = 1e-10
    max_rounds: int = 40

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.tail_rate is not None and not self.tail_rate > 0:
            raise ValueError("tail_rate must be positive")
        if not 0 < self.residual < 1:
            raise ValueError("residual must lie in (0, 1)")


DEFAULT_SPEC = QuadratureSpec()

_X10, _W10 = np.polynomial.legendre.leggauss(10)
_X20, _W20 = np.polynomial.legendre.leggauss(20)


def _gl(f: Callable, a: np.ndarray, b: np.ndarray, x: np.ndarray, w: np.ndarray, moment: bool = False):
    """Gauss-Legendre rule on each ``[a_i, b_i]``; with ``moment`` also returns ``int t f(t)``."""
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    pts = mid[:, None] + half[:, None] * x[None, :]
    vals = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
    q = half * (vals @ w)
    if moment:
        return q, half * ((vals * pts) @ w)
    return q


@dataclass(frozen=True, eq=False)
class _Table:
    lower: float
    upper: float
    edges: np.ndarray  # panel edges, len n+1
    cum: np.ndarray  # mass up to each edge
    cum_moment: np.ndarray  # first moment up to each edge
    density: Callable = field(repr=False)

    def partial(self, tau: np.ndarray, moment: bool = False) -> np.ndarray:
        """Integral of the density (or tau*density) from ``lower`` to each ``tau`` inside the table."""
        tau = np.clip(tau, self.lower, self.upper)
        idx = np.clip(np.searchsorted(self.edges, tau, side="right") - 1, 0, len(self.edges) - 2)
        base = (self.cum_moment if moment else self.cum)[idx]
        left = self.edges[idx]
        part = np.zeros_like(tau)
        inner = tau > left
        if np.any(inner):
            res = _gl(self.density, left[inner], tau[inner], _X20, _W20, moment)
            part[inner] = res[1] if moment else res
        return base + part


def _resolve(dist: MixedDistribution, spec: QuadratureSpec) -> tuple[float, tuple[float, ...]]:
    rate = spec.tail_rate or dist.tail_rate
    if rate is None or not rate > 0:
        raise DomainError("a positive tail rate is needed to truncate the integral")
    bps = spec.breakpoints or dist.breakpoints
    return rate, tuple(bps)


def _upper_limit(dist: MixedDistribution, rate: float, residual: float) -> float:
    lo = dist.support_lower
    upper = lo + math.log(1.0 / residual) / rate
    # the tail may carry a polynomial factor; extend until the local estimate of
    # the remaining mass (and first moment) is below the residual
    for _ in range(200):
        f = float(dist.pdf(np.array([upper]))[0])
        if f / rate * (1.0 + upper * rate) < residual:
            return upper
        upper += math.log(10.0) / rate
    raise QuadratureError(f"density tail does not decay at rate {rate}")


@lru_cache(maxsize=128)
def _table(dist: MixedDistribution, spec: QuadratureSpec) -> _Table:
    rate, bps = _resolve(dist, spec)
    lo = dist.support_lower
    hi = _upper_limit(dist, rate, spec.residual)
    width = hi - lo
    # base panels: breakpoints, refined to at most a quarter of the tail scale
    pts = sorted({lo, hi, *(b for b in bps if lo < b < hi)})
    h = min(0.25 / rate, width / 32.0)
    edges = []
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil((b - a) / h)))
        edges.extend(np.linspace(a, b, n + 1)[:-1])
    edges.append(hi)
    todo_a = np.array(edges[:-1])
    todo_b = np.array(edges[1:])
    done: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
    for _ in range(spec.max_rounds):
        if todo_a.size == 0:
            break
        q20, m20_all = _gl(dist.pdf, todo_a, todo_b, _X20, _W20, moment=True)
        q10 = _gl(dist.pdf, todo_a, todo_b, _X10, _W10)
        tol = spec.abs_tol * np.maximum((todo_b - todo_a) / width, 1e-6)
        ok = np.abs(q20 - q10) <= tol
        if np.any(ok):
            done.append((todo_a[ok], todo_b[ok], q20[ok], m20_all[ok]))
        mid = 0.5 * (todo_a[~ok] + todo_b[~ok])
        todo_a, todo_b = np.concatenate([todo_a[~ok], mid]), np.concatenate([mid, todo_b[~ok]])
    else:
        if todo_a.size:
            raise QuadratureError(f"quadrature did not converge on {todo_a.size} panels near {todo_a[:3]}")
    a = np.concatenate([d[0] for d in done])
    order = np.argsort(a)
    a = a[order]
    b = np.concatenate([d[1] for d in done])[order]
    q = np.concatenate([d[2] for d in done])[order]
    m = np.concatenate([d[3] for d in done])[order]
    edges_arr = np.append(a, b[-1])
    cum = np.concatenate([[0.0], np.cumsum(q)])
    cum_m = np.concatenate([[0.0], np.cumsum(m)])
    return _Table(lo, hi, edges_arr, cum, cum_m, dist.pdf)


# arrays longer than this are evaluated through the cached Hermite interpolant
DENSE_THRESHOLD = 256
# interpolant step, in units of the tail scale 1/rate
_HERMITE_STEP = 0.02


@dataclass(frozen=True, eq=False)
class _Hermite:
    """Piecewise cubic Hermite interpolant of the integrated density.

    Node values come from Gauss-Legendre sub-panels; slopes are the one-sided
    density limits, so jumps at panel edges are represented exactly.
    """

    a: np.ndarray
    h: np.ndarray
    fa: np.ndarray
    fb: np.ndarray
    da: np.ndarray
    db: np.ndarray
    upper: float
    total: float

    def __call__(self, tau: np.ndarray) -> np.ndarray:
        out = np.empty_like(tau)
        top = tau >= self.upper
        out[top] = self.total
        t = tau[~top]
        i = np.clip(np.searchsorted(self.a, t, side="right") - 1, 0, self.a.size - 1)
        h = self.h[i]
        x = np.clip((t - self.a[i]) / h, 0.0, 1.0)
        x2, x3 = x * x, x * x * x
        out[~top] = (
            (2 * x3 - 3 * x2 + 1) * self.fa[i]
            + (x3 - 2 * x2 + x) * h * self.da[i]
            + (-2 * x3 + 3 * x2) * self.fb[i]
            + (x3 - x2) * h * self.db[i]
        )
        return out


def _hermite_mid(fa, fb, da, db, h):
    return 0.5 * (fa + fb) + 0.125 * h * (da - db)


@lru_cache(maxsize=32)
def _hermite(dist: MixedDistribution, spec: QuadratureSpec) -> _Hermite:
    table = _table(dist, spec)
    rate, _ = _resolve(dist, spec)
    step = _HERMITE_STEP / rate
    lo_e, hi_e = table.edges[:-1], table.edges[1:]
    n_sub = np.maximum(1, np.ceil((hi_e - lo_e) / step).astype(int))
    panel = np.repeat(np.arange(lo_e.size), n_sub)
    k = np.arange(panel.size) - np.repeat(np.cumsum(n_sub) - n_sub, n_sub)
    width = (hi_e - lo_e)[panel] / n_sub[panel]
    a = lo_e[panel] + k * width
    b = np.where(k == n_sub[panel] - 1, hi_e[panel], a + width)
    q = _gl(dist.pdf, a, b, _X20, _W20)
    # cumulative within each panel, anchored on the panel table
    starts = np.cumsum(n_sub) - n_sub
    csum = np.cumsum(q)
    fb = table.cum[panel] + csum - np.repeat(csum[starts] - q[starts], n_sub)
    fa = fb - q

    def slopes(lo, hi):
        eps = 1e-9 * (hi - lo)
        return (np.asarray(dist.pdf(lo + eps), dtype=float), np.asarray(dist.pdf(hi - eps), dtype=float))

    da, db = slopes(a, b)
    parts = []
    for _ in range(spec.max_rounds):
        mid = 0.5 * (a + b)
        f_mid = fa + _gl(dist.pdf, a, mid, _X20, _W20)
        bad = np.abs(_hermite_mid(fa, fb, da, db, b - a) - f_mid) > spec.abs_tol
        ok = ~bad
        parts.append((a[ok], b[ok], fa[ok], fb[ok], da[ok], db[ok]))
        if not np.any(bad):
            break
        a, b, fa, fb, da, db, mid, f_mid = (v[bad] for v in (a, b, fa, fb, da, db, mid, f_mid))
        dm_l, dm_r = slopes(a, mid)[1], slopes(mid, b)[0]
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
        fa, fb = np.concatenate([fa, f_mid]), np.concatenate([f_mid, fb])
        da, db = np.concatenate([da, dm_r]), np.concatenate([dm_l, db])
    else:
        raise QuadratureError("cdf interpolant did not reach the requested tolerance")
    a, b, fa, fb, da, db = (np.concatenate([p[i] for p in parts]) for i in range(6))
    order = np.argsort(a)
    a, b, fa, fb, da, db = (v[order] for v in (a, b, fa, fb, da, db))
    return _Hermite(a, b - a, fa, fb, da, db, table.upper, float(table.cum[-1]))


def total_mass(dist: MixedDistribution, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Quadrature of the density plus all atom masses (1 for a proper distribution)."""
    return float(_table(dist, spec).cum[-1]) + dist.atom_mass


def _atoms_below(dist: MixedDistribution, tau: np.ndarray) -> np.ndarray:
    out = np.zeros_like(tau)
    for loc, mass in dist.atoms:
        out += np.where(tau >= loc, mass, 0.0)
    return out


def cdf_from_density(dist: MixedDistribution, tau, spec: QuadratureSpec = DEFAULT_SPEC):
    """CDF at ``tau`` (scalar or array): integrated density plus atoms at or below ``tau``."""
    t = np.atleast_1d(np.asarray(tau, dtype=float))
    if not np.all(np.isfinite(t)):
        raise DomainError("tau must be finite")
    if t.size > DENSE_THRESHOLD:
        integrated = _hermite(dist, spec)(np.maximum(t, dist.support_lower))
    else:
        integrated = _table(dist, spec).partial(t)
    vals = np.where(t < dist.support_lower, 0.0, integrated) + _atoms_below(dist, t)
    vals = np.clip(vals, 0.0, 1.0)
    if vals.size > 1:
        # remove sub-tolerance wiggles so the CDF is nondecreasing in tau
        order = np.argsort(t, kind="stable")
        vals[order] = np.maximum.accumulate(vals[order])
    vals = vals.reshape(np.shape(tau))
    return float(vals) if np.ndim(tau) == 0 else vals


def quantile(dist: MixedDistribution, p: float, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """Smallest ``x`` with ``cdf(x) >= p``, found by bracketing on the panel table."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    table = _table(dist, spec)
    atoms = sorted(dist.atoms)

    def cdf(x: float) -> float:
        return float(table.partial(np.array([x]))[0] + _atoms_below(dist, np.array([x]))[0])

    if cdf(dist.support_lower) >= p:
        return dist.support_lower
    edge_cdf = table.cum + _atoms_below(dist, table.edges)
    if edge_cdf[-1] < p:
        raise BracketError(f"cdf only reaches {edge_cdf[-1]:.12g} < {p} before the truncation point")
    k = int(np.searchsorted(edge_cdf, p, side="left"))
    a, b = table.edges[max(k - 1, 0)], table.edges[k]
    for loc, _ in atoms:
        if a < loc <= b and cdf(loc) >= p > cdf(np.nextafter(loc, -np.inf)):
            return loc
    if cdf(b) - p == 0.0:
        return b
    return optimize.brentq(lambda x: cdf(x) - p, a, b, xtol=1e-12, rtol=4 * np.finfo(float).eps)


def mean(dist: MixedDistribution, spec: QuadratureSpec = DEFAULT_SPEC) -> float:
    """First moment: ``int tau * density`` plus ``sum loc * mass``."""
    table = _table(dist, spec)
    return float(table.cum_moment[-1]) + sum(loc * m for loc, m in dist.atoms)


# --- empirical side -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Sorted samples with a right-continuous ECDF and type-1 quantiles."""

    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise DomainError("empirical distribution needs at least one sample")
        if np.any(np.diff(s) < 0):
            s = np.sort(s)
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_samples(cls, samples) -> "EmpiricalDistribution":
        return cls(np.sort(np.asarray(samples, dtype=float)))

    @property
    def n(self) -> int:
        return int(self.samples.size)

    def ecdf(self, x):
        out = np.searchsorted(self.samples, np.asarray(x, dtype=float), side="right") / self.n
        return float(out) if np.ndim(x) == 0 else out

    def quantile(self, p):
        """Inverse ECDF: the ``ceil(n p)``-th order statistic."""
        p_arr = np.asarray(p, dtype=float)
        if np.any((p_arr <= 0) | (p_arr > 1)):
            raise DomainError("probability must lie in (0, 1]")
        k = np.ceil(p_arr * self.n - 1e-9).astype(int)
        out = self.samples[np.clip(k, 1, self.n) - 1]
        return float(out) if np.ndim(p) == 0 else out

    def mean(self) -> float:
        return float(self.samples.mean())


def ks_distance(analytic_cdf: Callable, empirical: EmpiricalDistribution) -> float:
    """``sup_x |F(x) - ECDF(x)|``.

    Both one-sided limits are compared at every distinct sample value, so ties
    and atoms of ``F`` (evaluated just below each value for the left limit) are
    handled.
    """
    x = np.unique(empirical.samples)
    n = empirical.n
    right = np.searchsorted(empirical.samples, x, side="right") / n
    left = np.searchsorted(empirical.samples, x, side="left") / n
    F = np.asarray(analytic_cdf(x), dtype=float)
    F_left = np.asarray(analytic_cdf(np.nextafter(x, -np.inf)), dtype=float)
    return float(max(np.max(np.abs(F - right)), np.max(np.abs(F_left - left))))


def dkw_bound(n: int, confidence: float = 0.99) -> float:
    """KS radius that an ECDF of ``n`` samples stays within with the given confidence."""
    return math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * n))


def binomial_z(count: int, n: int, p: float) -> float:
    """Standardised deviation of ``count`` successes in ``n`` trials from probability ``p``."""
    if n <= 0 or not 0 < p < 1:
        raise DomainError("need n > 0 and 0 < p < 1")
    return (count - n * p) / math.sqrt(n * p * (1 - p))


def normal_two_sided_p(z: float) -> float:
    return float(special.erfc(abs(z) / math.sqrt(2.0)))
