"""Exact peak-age-of-information distributions for two-node FCFS tandems.

Two tandems are covered: M/M/1 feeding M/D/1 (``md1``) and M/M/1 feeding
M/M/1 (``mm1``).  Each has closed-form case probabilities and per-case
densities, a seeded simulator, and numerical helpers for CDFs, quantiles,
means and KS distances.
"""

from .md1 import (
    PrecisionWarning,
    case_probabilities_md1,
    md1_wait_cdf,
    md1_wait_distribution,
    md1_wait_pdf,
    paoi_distribution_md1,
    paoi_pdf_md1_case,
    single_md1_paoi_cdf,
    theta,
    wait_decay_rate,
)
from .mm1 import (
    Mm1Regime,
    RegimeKind,
    case_probabilities_mm1,
    paoi_distribution_mm1,
    paoi_pdf_mm1_case,
    paoi_pdf_mm1_equal,
)
from .model import (
    CASES,
    CaseLabel,
    Deterministic,
    DomainError,
    Exponential,
    MixedDistribution,
    PacketRecord,
    TandemParams,
    UnstableParametersError,
    classify_case,
    paoi_from_record,
)
from .numerics import (
    BracketError,
    EmpiricalDistribution,
    QuadratureError,
    QuadratureSpec,
    cdf_from_density,
    ks_distance,
    mean,
    quantile,
)
from .sim import (
    Draws,
    RngStream,
    SimConfig,
    collect_paoi,
    empirical_from_arrays,
    empirical_from_records,
    simulate_arrays,
    simulate_md1_queue,
    simulate_tandem,
)


def case_probabilities(params: TandemParams) -> tuple[float, float, float, float]:
    """``(pA, pB, pC, pD)`` for either tandem."""
    return case_probabilities_md1(params) if params.kind == "md1" else case_probabilities_mm1(params)


def paoi_distribution(params: TandemParams, case=None) -> MixedDistribution:
    """Mixture peak-age distribution for either tandem, or one case-conditional component."""
    if params.kind == "md1":
        return paoi_distribution_md1(params, case)
    return paoi_distribution_mm1(params, case)


__all__ = [name for name in dir() if not name.startswith("_")]
