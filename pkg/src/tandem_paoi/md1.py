"""Peak-age distribution of the M/M/1 -> M/D/1 tandem.

Everything here is built on the M/D/1 waiting time ``W``: an atom
``1 - lam*D`` at zero plus a density on ``(0, inf)`` with a jump at ``w = D``
and kinks at the later multiples of ``D``.

Erlang's alternating sum for ``P_W`` loses precision once ``exp(lam*w)`` is
large, so two representations are combined:

* ``w <= ERLANG_SPANS * D``: Erlang's finite sum.  Its largest term is at most
  ``exp(ERLANG_SPANS * lam * D)``, so the absolute error stays near 1e-13.
* ``w > ERLANG_SPANS * D``: the residue expansion
  ``P(W > w) = -(1 - rho) * sum_r exp(s_r w) / (1 - rho + D s_r)`` over the
  roots ``s_r = lam + W_k(-rho exp(-rho)) / D`` of
  ``s - lam + lam exp(-s D) = 0`` (``W_k`` the Lambert-W branches, ``k != 0``).
  Branch ``k`` contributes ``O((rho / 2 pi k)^(w/D))``, so a few dozen
  branches reach machine precision there.

The per-case peak-age densities are written with ``P_W`` and the integrals
``int_0^M P(W > w) exp(beta w) dw``.  These are related to ``theta`` by
integration by parts but can be scaled so no exponentially large
intermediate appears.
"""

from __future__ import annotations

import math
import warnings
from functools import lru_cache

import numpy as np
from scipy import special

from .model import (
    CASES,
    CaseLabel,
    DomainError,
    MixedDistribution,
    TandemParams,
    UnstableParametersError,
)

ERLANG_SPANS = 6
N_BRANCHES = 24
# above this load the roots crowd towards zero and precision degrades
SUPPORTED_LOAD = 0.95
# |beta| (or |beta + lam|) below this fraction of lam selects a special theta branch
THETA_BRANCH_TOL = 1e-9

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_BLOCK = 4096  # points per vectorised block; keeps temporaries in cache


def _expm1_over(z: float, x: np.ndarray) -> np.ndarray:
    """``(exp(z x) - 1) / z``, equal to ``x`` in the limit ``z -> 0``."""
    if abs(z) < 1e-300:
        return x.copy()
    return np.expm1(z * x) / z


class PrecisionWarning(RuntimeWarning):
    """Evaluation outside the region where accuracy is guaranteed."""


def _check_md1(lam: float, D: float) -> None:
    if not (lam > 0 and D > 0 and math.isfinite(lam) and math.isfinite(D)):
        raise DomainError(f"need finite lam > 0 and D > 0, got lam={lam}, D={D}")
    if lam * D >= 1.0:
        raise UnstableParametersError(f"M/D/1 queue is unstable: lam*D = {lam * D:.6g} >= 1")


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


class Md1Wait:
    """Waiting-time distribution of an M/D/1 queue; ``md1_wait(lam, D)`` returns a cached instance."""

    def __init__(self, lam: float, D: float):
        _check_md1(lam, D)
        self.lam, self.D = lam, D
        self.rho = lam * D
        if self.rho > SUPPORTED_LOAD:
            warnings.warn(
                f"M/D/1 load lam*D={self.rho:.4g} exceeds {SUPPORTED_LOAD}; "
                "waiting-time values may lose precision",
                PrecisionWarning,
                stacklevel=3,
            )
        self.w0 = ERLANG_SPANS * D
        self.roots = self._roots()
        weight = np.where(np.arange(self.roots.size) == 0, 1.0, 2.0)
        self.coef = -weight * (1.0 - self.rho) / (1.0 - self.rho + D * self.roots)
        self._node_tables: dict[float, np.ndarray] = {}

    def _roots(self) -> np.ndarray:
        lam, D, rho = self.lam, self.D, self.rho
        z = -rho * math.exp(-rho)
        # branch -1 is the real root; branches k >= 1 have Im > 0 and their
        # conjugates (the remaining branches) are accounted for by doubling
        ks = [-1, *range(1, N_BRANCHES + 1)]
        s = np.array([lam + complex(special.lambertw(z, k)) / D for k in ks])
        for _ in range(3):  # Newton polish on s - lam + lam exp(-sD)
            e = np.exp(-s * D)
            s = s - (s - lam + lam * e) / (1.0 - lam * D * e)
        s[0] = s[0].real
        return s

    @property
    def decay_rate(self) -> float:
        """Exponential decay rate of ``P(W > w)`` (the real root, negated)."""
        return float(-self.roots[0].real)

    # -- pointwise --------------------------------------------------------------

    def _erlang_terms(self, w: np.ndarray, derivative: bool) -> np.ndarray:
        """Terms of Erlang's sum (or its derivative) for ``0 <= w <= w0``, without ``1 - rho``."""
        lam, D = self.lam, self.D
        k = np.arange(ERLANG_SPANS + 1, dtype=float)[None, :]
        u = w[:, None] - k * D
        if derivative:
            # d/dw [(-lam u)^k e^{lam u} / k!] = (-lam)^k u^{k-1} e^{lam u} (k + lam u) / k!
            keep = (u > 0) | ((u == 0) & (k == 1))
            uu = np.where(keep, u, 1.0)
            mag = np.exp(special.xlogy(k - 1.0, uu) + k * math.log(lam) + lam * uu - special.gammaln(k + 1.0))
            mag = np.where(k == 0, lam * np.exp(lam * uu), mag * (k + lam * uu))
            mag = np.where((u == 0) & (k == 1), lam, mag)
        else:
            keep = (u > 0) | (k == 0)
            uu = np.where(keep, u, 0.0)
            mag = np.exp(special.xlogy(k, lam * uu) + lam * uu - special.gammaln(k + 1.0))
        return np.where(keep, (-1.0) ** k * mag, 0.0)

    def _expansion(self, w: np.ndarray, derivative: bool) -> np.ndarray:
        s = self.roots[None, :]
        out = np.empty_like(w)
        for i in range(0, w.size, _BLOCK):
            e = np.exp(w[i : i + _BLOCK, None] * s) * self.coef[None, :]
            if derivative:
                e = -e * s
            out[i : i + _BLOCK] = e.sum(axis=1).real
        return out

    def _erlang_cdf(self, w: np.ndarray) -> np.ndarray:
        """Erlang's sum ``P_W(w)`` for ``0 <= w <= w0``."""
        lam, D = self.lam, self.D
        acc = np.zeros_like(w)
        for k in range(ERLANG_SPANS + 1):
            u = w - k * D
            live = u > 0 if k else u >= 0
            if not np.any(live):
                break
            uu = np.where(live, u, 0.0)
            acc += np.where(live, (-lam * uu) ** k * np.exp(lam * uu) / math.factorial(k), 0.0)
        return (1.0 - self.rho) * acc

    def ccdf(self, w) -> np.ndarray:
        """``P(W > w)``; 1 for ``w < 0`` and ``rho`` at ``w = 0``."""
        w = np.asarray(w, dtype=float)
        out = np.ones_like(w)
        near = (w >= 0) & (w <= self.w0)
        far = w > self.w0
        if np.any(near):
            out[near] = 1.0 - self._erlang_cdf(w[near])
        if np.any(far):
            out[far] = self._expansion(w[far], False)
        return np.clip(out, 0.0, 1.0)

    def cdf(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return np.where(w < 0, 0.0, 1.0 - self.ccdf(w))

    def pdf(self, w) -> np.ndarray:
        """Continuous part of the density, right-continuous at the jump ``w = D``."""
        w = np.asarray(w, dtype=float)
        out = np.zeros_like(w)
        near = (w > 0) & (w <= self.w0)
        far = w > self.w0
        if np.any(near):
            out[near] = (1.0 - self.rho) * self._erlang_terms(w[near], True).sum(axis=1)
        if np.any(far):
            out[far] = self._expansion(w[far], True)
        return np.maximum(out, 0.0)

    # -- integrals ----------------------------------------------------------------

    def _gl(self, a: np.ndarray, b: np.ndarray, beta: float, shift: np.ndarray) -> np.ndarray:
        """``int_a^b P(W > w) exp(beta w - shift) dw`` for ``[a, b]`` inside one D-interval."""
        half = 0.5 * (b - a)
        pts = (0.5 * (a + b))[:, None] + half[:, None] * _GL_X[None, :]
        vals = self.ccdf(pts.ravel()).reshape(pts.shape) * np.exp(beta * pts - shift[:, None])
        return half * (vals @ _GL_W)

    def _nodes(self, beta: float) -> np.ndarray:
        """``int_0^{jD} P(W > w) exp(beta (w - jD)) dw`` for ``j = 0..ERLANG_SPANS``."""
        tab = self._node_tables.get(beta)
        if tab is None:
            D = self.D
            x = np.arange(ERLANG_SPANS + 1) * D
            pieces = self._gl(x[:-1], x[1:], beta, beta * x[1:])
            tab = np.zeros(ERLANG_SPANS + 1)
            for j in range(ERLANG_SPANS):
                tab[j + 1] = tab[j] * math.exp(-beta * D) + pieces[j]
            self._node_tables[beta] = tab
        return tab

    def ccdf_integrals(self, M: np.ndarray, specs: list[tuple[float, bool]]) -> list[np.ndarray]:
        """``ccdf_integral`` for several ``(beta, scaled)`` pairs at ``M > 0``, sharing the work."""
        D, w0 = self.D, self.w0
        outs = [np.empty_like(M) for _ in specs]
        near = M <= w0
        if np.any(near):
            m = M[near]
            j = np.minimum(np.floor(m / D).astype(int), ERLANG_SPANS)
            xj = j * D
            half = 0.5 * (m - xj)
            pts = (0.5 * (m + xj))[:, None] + half[:, None] * _GL_X[None, :]
            G = self.ccdf(pts.ravel()).reshape(pts.shape)
            for out, (beta, scaled) in zip(outs, specs):
                sg = beta * m if scaled else np.zeros_like(m)
                part = half * ((G * np.exp(beta * pts - sg[:, None])) @ _GL_W)
                out[near] = self._nodes(beta)[j] * np.exp(beta * xj - sg) + part
        far = ~near
        if np.any(far):
            m = M[far]
            span = m - w0
            s0, sc = self.roots[0].real, self.roots[1:]
            heads, v0, vc, offs = [], [], [], []
            for beta, _ in specs:
                z0, zc = s0 + beta, sc + beta
                c0 = self.coef[0].real * math.exp(z0 * w0)
                cc = self.coef[1:] * np.exp(zc * w0) / zc
                heads.append(self._nodes(beta)[-1] * math.exp(beta * w0))
                v0.append((c0, z0))
                vc.append(cc)
                offs.append(cc.sum().real)
            vc_mat = np.stack(vc, axis=1)  # roots x specs
            for i in range(0, m.size, _BLOCK):
                blk = slice(i, i + _BLOCK)
                sp = span[blk]
                # exp((s_r + beta) span) = exp(s_r span) exp(beta span): one complex exp per root
                E = np.exp(sp[:, None] * sc[None, :]) @ vc_mat
                idx = np.flatnonzero(far)[blk]
                for k, ((beta, scaled), out) in enumerate(zip(specs, outs)):
                    c0, z0 = v0[k]
                    if not scaled:
                        val = heads[k] - offs[k] + c0 * _expm1_over(z0, sp) + E[:, k].real * np.exp(beta * sp)
                    else:
                        # multiply through by exp(-beta m) inside each exponent
                        base = np.exp(-beta * m[blk])
                        if abs(z0) > 1e-8:
                            real_part = c0 / z0 * (np.exp(z0 * sp - beta * m[blk]) - base)
                        else:
                            real_part = c0 * sp * base
                        val = (heads[k] - offs[k]) * base + real_part + E[:, k].real * math.exp(-beta * w0)
                    out[idx] = val
        return outs

    def ccdf_integral(self, M, beta: float, scaled: bool) -> np.ndarray:
        """``int_0^M P(W > w) exp(beta w) dw``, times ``exp(-beta M)`` if ``scaled``."""
        M = np.asarray(M, dtype=float)
        out = np.zeros_like(M)
        pos = M > 0
        if np.any(pos):
            out[pos] = self.ccdf_integrals(M[pos], [(beta, scaled)])[0]
        return out


@lru_cache(maxsize=64)
def md1_wait(lam: float, D: float) -> Md1Wait:
    return Md1Wait(lam, D)


# --- public waiting-time functions ------------------------------------------------


def md1_wait_cdf(w, lam: float, D: float):
    """CDF of the M/D/1 waiting time.  Vectorised over ``w``; ``1 - lam*D`` at ``w = 0``."""
    _check_md1(lam, D)
    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    if np.any(np.isnan(w_arr)):
        raise DomainError("waiting time must not be NaN")
    return _scalar_or_array(w, md1_wait(lam, D).cdf(w_arr).reshape(np.shape(w)))


def md1_wait_pdf(w, lam: float, D: float):
    """Density of the continuous part of the M/D/1 wait (zero for ``w <= 0``)."""
    _check_md1(lam, D)
    w_arr = np.atleast_1d(np.asarray(w, dtype=float))
    return _scalar_or_array(w, md1_wait(lam, D).pdf(w_arr).reshape(np.shape(w)))


def wait_decay_rate(lam: float, D: float) -> float:
    """Positive root ``s`` of ``lam (exp(s D) - 1) = s``: the decay rate of ``P(W > w)``."""
    _check_md1(lam, D)
    return md1_wait(lam, D).decay_rate


def _kinks(start: float, D: float, count: int = 8) -> tuple[float, ...]:
    """First few multiples of ``D`` past ``start``; later kinks are smooth to high order."""
    return tuple(start + k * D for k in range(count + 1))


def md1_wait_distribution(lam: float, D: float) -> MixedDistribution:
    """Atom ``1 - lam*D`` at zero plus the continuous waiting-time density."""
    _check_md1(lam, D)
    wait = md1_wait(lam, D)
    return MixedDistribution(
        density=wait.pdf,
        atoms=((0.0, 1.0 - lam * D),),
        support_lower=0.0,
        breakpoints=_kinks(0.0, D),
        tail_rate=wait.decay_rate,
        label=f"M/D/1 wait lam={lam} D={D}",
    )


# --- theta -----------------------------------------------------------------


def _theta_closed(M: float, beta: float, lam: float, D: float) -> tuple[float, float]:
    """Closed form of ``int_0^M p_W(w) exp(beta*w) dw``; returns (value, sum of |terms|)."""
    rho = lam * D
    K = int(math.floor(M / D))
    terms: list[float] = []
    if abs(beta + lam) < THETA_BRANCH_TOL * lam:
        terms.append(lam * M)
        for k in range(1, K + 1):
            L = M - k * D
            if L <= 0:
                continue
            common = -lam * k * D + k * math.log(lam * L)
            sgn = (-1.0) ** k
            terms.append(sgn * math.exp(common - math.lgamma(k + 1)))
            terms.append(sgn * math.exp(common + math.log(lam * L) - math.lgamma(k + 2)))
    else:
        a = lam + beta
        terms.append(lam * math.expm1(a * M) / a)
        for k in range(1, K + 1):
            L = M - k * D
            ebk = math.exp(beta * k * D)
            terms.append(ebk * beta * lam**k / a ** (k + 1))
            eaL = math.exp(a * L)
            if L > 0:
                terms.append(-ebk * eaL * (-lam) ** (k + 1) * L**k / (a * math.factorial(k)))
            for j in range(k):
                terms.append(-ebk * eaL * lam**k * beta * (k * D - M) ** j / (a ** (k - j + 1) * math.factorial(j)))
    return (1.0 - rho) * math.fsum(terms), (1.0 - rho) * math.fsum(abs(t) for t in terms)


def theta(M: float, beta: float, lam: float, D: float) -> float:
    """``int_0^M p_W(w) exp(beta*w) dw`` over the continuous part of the M/D/1 wait.

    The atom at ``w = 0`` is excluded, so ``theta(M, 0) = P_W(M) - (1 - lam*D)``
    and ``theta(0, beta) = 0``.  Special branches are used for ``beta`` within
    ``THETA_BRANCH_TOL * lam`` of 0 or ``-lam``.  When the alternating closed
    form is ill-conditioned the value is obtained by parts from ``P(W > w)``:
    ``lam D - exp(beta M) P(W > M) + beta int_0^M P(W > w) exp(beta w) dw``.
    """
    _check_md1(lam, D)
    if not math.isfinite(M) or M < 0:
        raise DomainError(f"theta needs a finite M >= 0, got {M}")
    if not math.isfinite(beta):
        raise DomainError("beta must be finite")
    if M == 0.0:
        return 0.0
    rho = lam * D
    if abs(beta) < THETA_BRANCH_TOL * lam:
        return float(md1_wait_cdf(M, lam, D)) - (1.0 - rho)
    value, scale = _theta_closed(M, beta, lam, D)
    if scale * 1e-16 <= 1e-11 * max(1.0, abs(value)):
        return value
    wait = md1_wait(lam, D)
    Mv = np.array([M])
    G_M = float(wait.ccdf(Mv)[0])
    J = float(wait.ccdf_integral(Mv, beta, scaled=False)[0])
    return rho - math.exp(beta * M) * G_M + beta * J


# --- case probabilities and per-case densities ----------------------------------


def _require_md1(params: TandemParams) -> TandemParams:
    if params.kind != "md1":
        raise TypeError("expected a tandem with a deterministic second server")
    params.require_stable()
    return params


def _busy_second_given_busy_first(params: TandemParams) -> float:
    """``P(S_1 >= W + D)``: next packet's first-stage service outlasts the backlog at node 2."""
    lam, mu1, D = params.lam, params.mu1, params.D
    x = math.exp(-mu1 * D)
    return (1.0 - lam * D) * mu1 * x / (params.alpha1 + lam * x)


def case_probabilities_md1(params: TandemParams) -> tuple[float, float, float, float]:
    """``(pA, pB, pC, pD)``; ``pA + pC = lam*D`` and ``pB + pD = 1 - lam*D``."""
    _require_md1(params)
    lam, D, rho1 = params.lam, params.D, params.rho1
    q = _busy_second_given_busy_first(params)
    pA = rho1 * (1.0 - q)
    pB = rho1 * q
    pC = lam * D - pA
    pD = (1.0 - lam * D) - pB
    return pA, pB, pC, pD


def _exp_integral(M: np.ndarray, beta: float, scaled: bool) -> np.ndarray:
    """``int_0^M exp(beta w) dw``, times ``exp(-beta M)`` if ``scaled``."""
    if beta == 0.0:
        return M.copy()
    if scaled:
        return -np.expm1(-beta * M) / beta
    return np.expm1(beta * M) / beta


def _int_cdf_exp(M: np.ndarray, beta: float, wait: Md1Wait, scaled: bool) -> np.ndarray:
    """``int_0^M P_W(w) exp(beta w) dw`` (times ``exp(-beta M)`` if ``scaled``) for ``M > 0``."""
    return _exp_integral(M, beta, scaled) - wait.ccdf_integral(M, beta, scaled)


# the mixture and the four conditional densities are usually evaluated on the same nodes
_JOINT_CACHE: dict = {}


def _joint_all(tau: np.ndarray, params: TandemParams) -> dict[CaseLabel, np.ndarray]:
    """``p(X) * p(Delta = tau | X)`` for all four cases, zero below ``2D``."""
    key = (params, tau.tobytes())
    hit = _JOINT_CACHE.get(key)
    if hit is not None:
        return hit
    lam, mu1, D, a1 = params.lam, params.mu1, params.D, params.alpha1
    wait = md1_wait(lam, D)
    M = tau - 2.0 * D
    pos = M > 0
    Mp = M[pos]
    PW = wait.cdf(Mp)
    specs = [(mu1, True), (a1, True), (-lam, False), (0.0, False)]
    i_mu1, i_a1, i_lam, i_0 = (
        _exp_integral(Mp, b, sc) - g for (b, sc), g in zip(specs, wait.ccdf_integrals(Mp, specs))
    )
    e_lam = np.exp(-lam * (D + Mp))
    e_mu1 = np.exp(-mu1 * (D + Mp))
    vals = {
        CaseLabel.A: a1 * (mu1 * i_mu1 - a1 * i_a1 - lam * np.exp(-mu1 * D - a1 * Mp) * i_lam),
        CaseLabel.B: a1 * mu1 * math.exp(-mu1 * D) * (np.exp(-a1 * Mp) * i_lam - np.exp(-mu1 * Mp) * i_0),
        CaseLabel.C: a1 * (PW - mu1 * i_mu1) - mu1 * e_lam * (PW - a1 * i_a1) + lam * e_mu1 * PW,
        CaseLabel.D: lam * mu1 * (e_lam * i_a1 - e_mu1 * i_0),
    }
    out = {}
    for c, v in vals.items():
        full = np.zeros_like(tau)
        full[pos] = np.maximum(v, 0.0)
        out[c] = full
    if len(_JOINT_CACHE) >= 8:
        _JOINT_CACHE.pop(next(iter(_JOINT_CACHE)))
    _JOINT_CACHE[key] = out
    return out


def _joint_case_density(case: CaseLabel, tau: np.ndarray, params: TandemParams) -> np.ndarray:
    return _joint_all(np.asarray(tau, dtype=float), params)[CaseLabel(case)]


def paoi_pdf_md1_case(case: CaseLabel | str, tau, params: TandemParams):
    """Peak-age density conditioned on ``case``; zero below ``2D``.  Vectorised over ``tau``."""
    _require_md1(params)
    case = CaseLabel(case)
    t = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(np.isnan(t)):
        raise DomainError("tau must not be NaN")
    p = case_probabilities_md1(params)[CASES.index(case)]
    return _scalar_or_array(tau, (_joint_case_density(case, t, params) / p).reshape(np.shape(tau)))


def paoi_tail_rate_md1(params: TandemParams) -> float:
    return min(params.alpha1, params.lam, wait_decay_rate(params.lam, params.D))


def paoi_distribution_md1(params: TandemParams, case: CaseLabel | str | None = None) -> MixedDistribution:
    """Mixture peak-age distribution (or a single case-conditional one)."""
    _require_md1(params)
    D = params.D
    if case is None:
        def density(t):
            return sum(_joint_all(np.asarray(t, dtype=float), params).values())
        label = "md1 mixture"
    else:
        c = CaseLabel(case)
        p = case_probabilities_md1(params)[CASES.index(c)]

        def density(t):
            return _joint_case_density(c, t, params) / p
        label = f"md1 case {c.value}"
    return MixedDistribution(
        density=density,
        atoms=(),
        support_lower=2.0 * D,
        breakpoints=_kinks(2.0 * D, D),
        tail_rate=paoi_tail_rate_md1(params),
        label=label,
    )


def single_md1_paoi_cdf(tau, lam: float, D: float):
    """Peak-age CDF of a standalone M/D/1 queue: ``(1 - exp(-lam(tau - D))) * P_W(tau - 2D)``."""
    _check_md1(lam, D)
    t = np.atleast_1d(np.asarray(tau, dtype=float))
    wait = md1_wait(lam, D)
    out = np.where(t >= 2 * D, -np.expm1(-lam * (t - D)) * wait.cdf(t - 2 * D), 0.0)
    return _scalar_or_array(tau, out.reshape(np.shape(tau)))
