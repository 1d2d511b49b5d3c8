import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from tandem_paoi import (
    BracketError,
    EmpiricalDistribution,
    MixedDistribution,
    QuadratureError,
    QuadratureSpec,
    TandemParams,
    cdf_from_density,
    ks_distance,
    mean,
    paoi_distribution_md1,
    paoi_distribution_mm1,
    quantile,
)
from tandem_paoi.model import DomainError
from tandem_paoi.numerics import DENSE_THRESHOLD, binomial_z, dkw_bound, normal_two_sided_p, total_mass


def _expo(rate=1.0, shift=0.0):
    return MixedDistribution(
        density=lambda x: rate * np.exp(-rate * (np.asarray(x) - shift)),
        support_lower=shift,
        tail_rate=rate,
    )


# --- empirical side ---------------------------------------------------------------


def test_ecdf_and_type1_quantile():
    e = EmpiricalDistribution.from_samples([3.0, 1.0, 2.0, 4.0])
    assert e.n == 4
    assert list(e.samples) == [1.0, 2.0, 3.0, 4.0]
    assert e.ecdf(2.5) == 0.5
    assert e.ecdf(2.0) == 0.5  # right-continuous
    assert e.ecdf(4.0) == 1.0 and e.ecdf(0.5) == 0.0
    assert e.quantile(0.5) == 2.0
    assert e.quantile(0.51) == 3.0
    assert e.quantile(1.0) == 4.0
    assert list(e.quantile(np.array([0.25, 0.75]))) == [1.0, 3.0]
    with pytest.raises(DomainError):
        e.quantile(0.0)
    with pytest.raises(DomainError):
        EmpiricalDistribution.from_samples([])


def test_ks_inverse_grid_within_one_over_n():
    n = 1000
    u = (np.arange(1, n + 1) - 0.5) / n
    emp = EmpiricalDistribution.from_samples(stats.norm.ppf(u))
    assert ks_distance(stats.norm.cdf, emp) <= 1 / n + 1e-12


def test_ks_disjoint_support_is_near_one():
    emp = EmpiricalDistribution.from_samples(np.linspace(100, 101, 500))
    assert ks_distance(stats.norm.cdf, emp) > 0.999


def test_ks_invariant_to_order(rng):
    x = rng.normal(size=2000)
    a = ks_distance(stats.norm.cdf, EmpiricalDistribution.from_samples(x))
    b = ks_distance(stats.norm.cdf, EmpiricalDistribution.from_samples(x[::-1]))
    assert a == b


def test_ks_matches_scipy_for_continuous(rng):
    x = rng.exponential(size=5000)
    ours = ks_distance(stats.expon.cdf, EmpiricalDistribution.from_samples(x))
    assert ours == pytest.approx(stats.kstest(x, "expon").statistic, abs=1e-15)


def test_ks_handles_atoms_and_ties():
    # half the mass at zero, exponential otherwise
    cdf = lambda x: np.where(np.asarray(x) >= 0, 0.5 + 0.5 * (1 - np.exp(-np.maximum(x, 0))), 0.0)
    n = 2000
    u = (np.arange(1, n // 2 + 1) - 0.5) / (n // 2)
    samples = np.concatenate([np.zeros(n // 2), -np.log1p(-u)])
    assert ks_distance(cdf, EmpiricalDistribution.from_samples(samples)) <= 1 / n + 1e-12


def test_statistics_helpers():
    assert dkw_bound(10**6, 0.99) == pytest.approx(math.sqrt(math.log(200) / 2e6))
    assert binomial_z(50, 100, 0.5) == 0.0
    assert binomial_z(60, 100, 0.5) == pytest.approx(2.0)
    assert normal_two_sided_p(1.959963984540054) == pytest.approx(0.05, rel=1e-12)
    with pytest.raises(DomainError):
        binomial_z(1, 0, 0.5)


# --- analytic side ----------------------------------------------------------------


def test_quadrature_spec_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(abs_tol=0.0)
    with pytest.raises(ValueError):
        QuadratureSpec(tail_rate=-1.0)
    with pytest.raises(ValueError):
        QuadratureSpec(residual=1.0)


def test_cdf_exponential_exact():
    d = _expo(2.0, shift=1.0)
    tau = np.array([0.0, 1.0, 1.3, 2.0, 5.0, 40.0])
    want = np.where(tau >= 1.0, 1 - np.exp(-2 * (tau - 1.0)), 0.0)
    assert np.allclose(cdf_from_density(d, tau), want, atol=1e-9)
    assert cdf_from_density(d, 0.5) == 0.0
    assert isinstance(cdf_from_density(d, 1.3), float)


def test_cdf_rejects_nonfinite():
    with pytest.raises(DomainError):
        cdf_from_density(_expo(), math.inf)


def test_dense_grid_matches_panel_table(md1_params):
    # large arrays go through the interpolant, small ones through the exact table
    dist = paoi_distribution_md1(md1_params)
    tau = np.linspace(0, 40, 4 * DENSE_THRESHOLD)
    dense = cdf_from_density(dist, tau)
    exact = np.array([cdf_from_density(dist, t) for t in tau[::37]])
    assert np.max(np.abs(dense[::37] - exact)) < 1e-8


@pytest.mark.parametrize("kind", ["md1", "mm1"])
def test_cdf_monotone_on_dense_grid(kind):
    p = TandemParams.md1(0.5, 1.0, 0.8) if kind == "md1" else TandemParams.mm1(0.5, 1.0, 1.25)
    dist = paoi_distribution_md1(p) if kind == "md1" else paoi_distribution_mm1(p)
    tau = np.linspace(-1, 80, 10_000)
    F = cdf_from_density(dist, tau)
    assert np.all(np.diff(F) >= 0)
    assert F[0] == 0.0
    assert F[-1] == pytest.approx(1.0, abs=1e-6)


def test_atoms_contribute_at_location():
    d = MixedDistribution(
        density=lambda x: 0.5 * np.exp(-np.asarray(x)), atoms=((0.0, 0.5),), support_lower=0.0, tail_rate=1.0
    )
    assert cdf_from_density(d, 0.0) == pytest.approx(0.5)
    assert cdf_from_density(d, np.nextafter(0.0, -1)) == 0.0
    assert total_mass(d) == pytest.approx(1.0, abs=1e-9)
    assert mean(d) == pytest.approx(0.5, abs=1e-9)
    assert quantile(d, 0.3) == 0.0
    assert quantile(d, 0.75) == pytest.approx(math.log(2), abs=1e-9)


def test_point_mass_mean():
    d = MixedDistribution(density=lambda x: 0.0 * np.asarray(x), atoms=((2.5, 1.0),), support_lower=0.0, tail_rate=1.0)
    assert mean(d) == pytest.approx(2.5, abs=1e-12)


def test_quantile_exponential_and_bounds():
    d = _expo(1.0)
    assert quantile(d, 0.5) == pytest.approx(math.log(2), abs=1e-9)
    assert quantile(d, 1e-14) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(DomainError):
        quantile(d, 1.0)
    with pytest.raises(BracketError):
        # the truncation point never reaches mass this close to one
        quantile(d, 1 - 1e-13)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.999))
def test_quantile_round_trip(p):
    dist = paoi_distribution_mm1(TandemParams.mm1(0.5, 1.0, 1.25))
    x = quantile(dist, p)
    assert cdf_from_density(dist, x) == pytest.approx(p, abs=1e-8)


@pytest.mark.parametrize("x", [2.0, 3.5, 6.0, 12.0])
def test_cdf_quantile_round_trip_md1(md1_params, x):
    dist = paoi_distribution_md1(md1_params)
    assert quantile(dist, cdf_from_density(dist, x)) == pytest.approx(x, abs=1e-6)


def test_nondecaying_density_raises():
    flat = MixedDistribution(density=lambda x: 0.0 * np.asarray(x) + 1e-3, support_lower=0.0, tail_rate=1.0)
    with pytest.raises(QuadratureError):
        total_mass(flat)


def test_mean_md1_mm1_ordering_at_high_load():
    md1 = mean(paoi_distribution_md1(TandemParams.md1(0.75, 1.0, 0.8)))
    mm1 = mean(paoi_distribution_mm1(TandemParams.mm1(0.75, 1.0, 1.25)))
    assert md1 < mm1
