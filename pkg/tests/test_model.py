import math

import pytest
from hypothesis import given, strategies as st

from tandem_paoi import (
    CaseLabel,
    Deterministic,
    Exponential,
    MixedDistribution,
    TandemParams,
    UnstableParametersError,
    classify_case,
    paoi_from_record,
)
from tandem_paoi.model import DomainError

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


@pytest.mark.parametrize(
    "o1,o2,expected",
    [(0.3, 0.7, CaseLabel.A), (0.0, 0.0, CaseLabel.D), (-1.2, 0.5, CaseLabel.C), (2.0, -0.1, CaseLabel.B), (1.0, 0.0, CaseLabel.B)],
)
def test_classify_examples(o1, o2, expected):
    assert classify_case(o1, o2) is expected


@given(finite, finite)
def test_classify_matches_sign_pattern(o1, o2):
    c = classify_case(o1, o2)
    assert (c in (CaseLabel.A, CaseLabel.B)) == (o1 > 0)
    assert (c in (CaseLabel.A, CaseLabel.C)) == (o2 > 0)


def test_classify_rejects_nan():
    with pytest.raises(DomainError):
        classify_case(math.nan, 0.0)


def test_paoi_from_record():
    assert paoi_from_record(1.0, 0.3, 0.8) == pytest.approx(2.1)
    assert paoi_from_record(0, 0, 0) == 0


def test_params_derived_quantities():
    p = TandemParams.mm1(0.5, 1.0, 1.25)
    assert (p.alpha1, p.alpha2, p.rho1, p.rho2) == pytest.approx((0.5, 0.75, 0.5, 0.4))
    q = TandemParams.md1(0.5, 1.0, 0.8)
    assert q.kind == "md1" and q.D == 0.8 and q.rho2 == pytest.approx(0.4)
    with pytest.raises(AttributeError):
        q.mu2
    with pytest.raises(AttributeError):
        q.alpha2


def test_params_validation():
    with pytest.raises(ValueError):
        TandemParams.mm1(-0.1, 1.0, 1.0)
    with pytest.raises(ValueError):
        Deterministic(0.0)
    with pytest.raises(ValueError):
        Exponential(-1.0)
    unstable = TandemParams.md1(0.5, 1.0, 2.0)
    assert not unstable.is_stable
    with pytest.raises(UnstableParametersError):
        unstable.require_stable()
    assert not TandemParams.mm1(1.0, 1.0, 2.0).is_stable


def test_params_are_immutable_and_hashable():
    p = TandemParams.md1(0.5, 1.0, 0.8)
    with pytest.raises(Exception):
        p.lam = 0.1
    assert hash(p) == hash(TandemParams.md1(0.5, 1.0, 0.8))
    assert p.as_dict()["D"] == 0.8


def test_mixed_distribution_checks_atoms():
    with pytest.raises(DomainError):
        MixedDistribution(density=lambda x: x, atoms=((0.0, 1.5),))
    with pytest.raises(DomainError):
        MixedDistribution(density=lambda x: x, atoms=((-1.0, 0.5),), support_lower=0.0)
    d = MixedDistribution(density=lambda x: 0 * x + 1.0, atoms=((0.0, 0.25),), support_lower=0.0)
    assert d.atom_mass == 0.25
    assert list(d.pdf([-1.0, 0.5])) == [0.0, 1.0]
