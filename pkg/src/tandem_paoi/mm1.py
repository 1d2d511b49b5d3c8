"""Peak-age distribution of the M/M/1 -> M/M/1 tandem.

All four case-conditional densities are finite sums of exponentials.  The
general-rate expressions have removable singularities at ``mu1 == mu2``,
``mu2 == alpha1`` and ``mu1 == alpha2``; the first has its own closed form,
the other two are handled by nudging ``mu2`` (see ``Mm1Regime``).

Differences of exponentials are written through the divided difference
``(exp(-a t) - exp(-b t)) / (b - a)`` evaluated with ``expm1``, which stays
accurate when the two rates are close.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .model import CASES, CaseLabel, DomainError, MixedDistribution, TandemParams

REGIME_TOL = 1e-7
DEGENERATE_NUDGE = 1e-6


class RegimeKind(str, enum.Enum):
    GENERAL = "general"
    EQUAL_RATES = "equal_rates"
    PERTURBED_DEGENERATE = "perturbed_degenerate"


@dataclass(frozen=True)
class Mm1Regime:
    kind: RegimeKind
    mu2: float

    @classmethod
    def resolve(cls, lam: float, mu1: float, mu2: float, tol: float = REGIME_TOL) -> "Mm1Regime":
        scale = tol * mu1
        if abs(mu1 - mu2) <= scale:
            return cls(RegimeKind.EQUAL_RATES, mu1)
        if abs(mu2 - (mu1 - lam)) <= scale or abs(mu1 - (mu2 - lam)) <= scale:
            for sign in (1.0, -1.0):
                m2 = mu2 * (1.0 + sign * DEGENERATE_NUDGE)
                near = min(abs(m2 - (mu1 - lam)), abs(mu1 - (m2 - lam)), abs(mu1 - m2))
                if m2 > lam and near > 0.5 * DEGENERATE_NUDGE * mu2:
                    return cls(RegimeKind.PERTURBED_DEGENERATE, m2)
        return cls(RegimeKind.GENERAL, mu2)


def _require_mm1(params: TandemParams) -> TandemParams:
    if params.kind != "mm1":
        raise TypeError("expected a tandem with an exponential second server")
    params.require_stable()
    return params


def _dd(a: float, b: float, t: np.ndarray) -> np.ndarray:
    """``(exp(-a t) - exp(-b t)) / (b - a)``; ``t exp(-a t)`` when ``a == b``."""
    if a == b:
        return t * np.exp(-a * t)
    # symmetric in (a, b); factor out the slower exponential to avoid overflow
    lo, gap = min(a, b), abs(b - a)
    return np.exp(-lo * t) * -np.expm1(-gap * t) / gap


def _one_minus_exp(r: float, t: np.ndarray) -> np.ndarray:
    return -np.expm1(-r * t)


# --- general rates -----------------------------------------------------------


def _probs_general(lam: float, mu1: float, mu2: float) -> tuple[float, float, float, float]:
    a1, a2 = mu1 - lam, mu2 - lam
    pA = lam / (mu1 + a2)
    pB = lam * a2 / (mu1 * (mu1 + a2))
    pC = a1 * lam / (mu2 * (mu1 + a2))
    pD = a1 / mu1 - pC
    return pA, pB, pC, pD


def _joint_general(case: CaseLabel, t: np.ndarray, lam: float, mu1: float, mu2: float) -> np.ndarray:
    a1, a2 = mu1 - lam, mu2 - lam
    e_m1 = np.exp(-mu1 * t)
    if case is CaseLabel.A:
        return (
            a2 * mu1 * mu2 * _dd(mu1, mu2, t) / (mu2 - a1)
            - lam * e_m1 * _one_minus_exp(a2, t)
            - a1 * a2 * mu2 * _dd(mu1, a2, t) / (mu2 - mu1)
            + a1 * mu1 * a2 * lam * _dd(a1, mu1, t) / ((mu2 - mu1) * (mu2 - a1))
        )
    if case is CaseLabel.B:
        d_a1_m1 = _dd(a1, mu1, t)
        return (
            mu1 * lam * d_a1_m1
            - lam * mu1 * e_m1 * _one_minus_exp(a2, t) / a2
            + a1 * mu1 * mu2 * (d_a1_m1 - t * e_m1) / (mu2 - mu1)
            + mu1 * mu2 * a2 * lam * (_dd(mu1, mu2, t) - d_a1_m1) / ((mu2 - mu1) * (mu2 - a1))
        )
    if case is CaseLabel.C:
        e_m2 = np.exp(-mu2 * t)
        bracket = (
            a1 * a2 * _dd(mu1, a2, t)
            + lam * e_m1 * _one_minus_exp(a2, t)
            - mu1 * a2 * _dd(mu1, mu2, t)
            - a1 * a2 * _dd(a2, mu2, t)
            + a2 * mu1 * t * e_m2
            - lam * a2 * e_m2 * _one_minus_exp(a1, t) / a1
        )
        return mu2 / (mu2 - mu1) * bracket
    if case is CaseLabel.D:
        # exp(-lam t) + exp(-(mu1+a2) t) - exp(-mu1 t) - exp(-mu2 t) factorises
        return lam * mu1 * mu2 / (a1 * a2) * (
            -a1 * a2 * t * _dd(mu1, mu2, t) + a1 * _dd(lam, mu1, t) * _one_minus_exp(a2, t)
        )
    raise DomainError(f"unknown case {case!r}")


# --- equal rates mu1 == mu2 == mu -------------------------------------------------


def _probs_equal(lam: float, mu: float) -> tuple[float, float, float, float]:
    a = mu - lam
    pA = lam / (mu + a)
    pB = lam * a / (mu * (mu + a))
    pD = a * (mu + a - lam) / (mu * (mu + a))
    return pA, pB, pB, pD


def _joint_equal(case: CaseLabel, t: np.ndarray, lam: float, mu: float) -> np.ndarray:
    a = mu - lam
    e_a, e_m = np.exp(-a * t), np.exp(-mu * t)
    if case is CaseLabel.A:
        return (
            mu * (e_a - e_m)
            + lam * (np.exp(-(mu + a) * t) - e_a)
            + (mu * a * (a + mu) * (e_m - e_a) + mu * a * lam * t * (a * e_a + mu * e_m)) / lam**2
        )
    if case in (CaseLabel.B, CaseLabel.C):
        return mu * (
            a * a * (e_a - e_m) / lam**2
            - lam * e_m * _one_minus_exp(a, t) / a
            - mu * e_m * (a * lam * t * t + 2.0 * (a - lam) * t) / (2.0 * lam)
        )
    if case is CaseLabel.D:
        # exp(-mu t) * (2 cosh(a t) - 2 - a^2 t^2) without overflow
        core = np.exp(-lam * t) + np.exp(-(mu + a) * t) - e_m * (2.0 + (a * t) ** 2)
        return mu * mu * lam * core / (a * a)
    raise DomainError(f"unknown case {case!r}")


# --- public API ---------------------------------------------------------------


def case_probabilities_mm1(params: TandemParams) -> tuple[float, float, float, float]:
    """``(pA, pB, pC, pD)``; ``pA + pC = lam/mu2`` and ``pA + pB = lam/mu1``."""
    _require_mm1(params)
    reg = Mm1Regime.resolve(params.lam, params.mu1, params.mu2)
    if reg.kind is RegimeKind.EQUAL_RATES:
        return _probs_equal(params.lam, params.mu1)
    return _probs_general(params.lam, params.mu1, reg.mu2)


def _joint(case: CaseLabel, t: np.ndarray, params: TandemParams) -> np.ndarray:
    reg = Mm1Regime.resolve(params.lam, params.mu1, params.mu2)
    if reg.kind is RegimeKind.EQUAL_RATES:
        val = _joint_equal(case, t, params.lam, params.mu1)
    else:
        val = _joint_general(case, t, params.lam, params.mu1, reg.mu2)
    return np.where(t > 0, np.maximum(val, 0.0), 0.0)


def _as_tau(tau) -> np.ndarray:
    t = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(np.isnan(t)):
        raise DomainError("tau must not be NaN")
    return t


def paoi_pdf_mm1_case(case: CaseLabel | str, tau, params: TandemParams):
    """Peak-age density conditioned on ``case``.  Vectorised over ``tau``."""
    _require_mm1(params)
    case = CaseLabel(case)
    t = _as_tau(tau)
    p = case_probabilities_mm1(params)[CASES.index(case)]
    out = (_joint(case, t, params) / p).reshape(np.shape(tau))
    return float(out) if np.ndim(tau) == 0 else out


def paoi_pdf_mm1_equal(case: CaseLabel | str, tau, lam: float, mu: float):
    """Equal-service-rate closed forms, conditional on ``case`` (C coincides with B)."""
    TandemParams.mm1(lam, mu, mu).require_stable()
    case = CaseLabel(case)
    t = _as_tau(tau)
    p = _probs_equal(lam, mu)[CASES.index(case)]
    val = np.where(t > 0, np.maximum(_joint_equal(case, t, lam, mu), 0.0), 0.0) / p
    out = val.reshape(np.shape(tau))
    return float(out) if np.ndim(tau) == 0 else out


def paoi_tail_rate_mm1(params: TandemParams) -> float:
    return min(params.alpha1, params.alpha2, params.lam)


def paoi_distribution_mm1(params: TandemParams, case: CaseLabel | str | None = None) -> MixedDistribution:
    """Mixture peak-age distribution (or one case-conditional component)."""
    _require_mm1(params)
    if case is None:
        def density(t):
            return sum(_joint(c, np.asarray(t, dtype=float), params) for c in CASES)
        label = "mm1 mixture"
    else:
        c = CaseLabel(case)
        p = case_probabilities_mm1(params)[CASES.index(c)]

        def density(t):
            return _joint(c, np.asarray(t, dtype=float), params) / p
        label = f"mm1 case {c.value}"
    return MixedDistribution(
        density=density,
        atoms=(),
        support_lower=0.0,
        breakpoints=(),
        tail_rate=paoi_tail_rate_mm1(params),
        label=label,
    )
