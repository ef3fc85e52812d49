import math

import pytest

from hieram import (
    ExplicitCoupling,
    GeometricCoupling,
    HierarchySpec,
    PolyGeometricCoupling,
    PowerSequence,
    build_truncation,
    check_main_hypothesis,
    check_molchanov_condition,
    fractional_moment_bounds,
    make_coupling,
)
from hieram.coupling import (
    CONVERGES_ANALYTIC,
    DIVERGES_ANALYTIC,
    DIVERGES_NUMERIC,
)


def test_geometric_rho2_values():
    seq = GeometricCoupling(2.0)
    assert seq.p(0) == 0.0
    assert seq.p(1) == 0.5
    for r in range(1, 20):
        assert math.isclose(seq.lam(r), 1.0 - 2.0 ** (-r), rel_tol=0, abs_tol=1e-15)


def test_geometric_rho4_values():
    seq = GeometricCoupling(4.0)
    assert seq.p(1) == 0.75
    assert seq.lam(2) == 0.9375


def test_explicit_coupling_values():
    seq = ExplicitCoupling([0.7, 0.3])
    assert seq.lam(1) == pytest.approx(0.7, abs=1e-15)
    assert seq.lam(2) == 1.0
    assert seq.tail(2) == 0.0
    assert seq.p(3) == 0.0


def test_coupling_validation():
    with pytest.raises(ValueError):
        GeometricCoupling(1.0)
    with pytest.raises(ValueError):
        ExplicitCoupling([0.7, -0.3, 0.6])
    with pytest.raises(ValueError):
        ExplicitCoupling([0.5, 0.4])  # mass 0.9 without declared tail
    with pytest.raises(ValueError):
        PolyGeometricCoupling(1, 0.3)
    with pytest.raises(ValueError):
        PolyGeometricCoupling(2, 0.0)
    with pytest.raises(ValueError):
        make_coupling("nonsense")


def test_polygeometric_normalizes_to_unit_mass():
    for n, eps in [(2, 0.3), (3, 1.0)]:
        seq = PolyGeometricCoupling(n, eps)
        total = sum(seq.p(r) for r in range(1, 200))
        assert abs(total - 1.0) < 1e-12


@pytest.mark.parametrize(
    "seq",
    [
        GeometricCoupling(2.0),
        GeometricCoupling(4.0),
        PolyGeometricCoupling(2, 0.3),
        ExplicitCoupling([0.5, 0.3, 0.1], 0.1),
    ],
)
def test_tail_matches_brute_suffix_sum(seq):
    for r in range(6):
        brute = sum(seq.p(s) for s in range(r + 1, 300))
        if isinstance(seq, ExplicitCoupling):
            brute += seq.tail_mass
        assert abs(seq.tail(r) - brute) < 1e-12


def test_lambda_strictly_increasing_below_one():
    for seq in [GeometricCoupling(3.0), PolyGeometricCoupling(2, 0.5)]:
        lams = [seq.lam(r) for r in range(30)]
        assert all(b > a for a, b in zip(lams, lams[1:]))
        assert all(v < 1.0 for v in lams)


def test_geometric_two_sided_envelope():
    # the family sits exactly on the envelope C rho^{-r} with C = rho - 1
    seq = GeometricCoupling(3.0)
    for r in range(1, 30):
        assert seq.p(r) == pytest.approx((3.0 - 1.0) * 3.0 ** (-r), rel=1e-15)


def test_weighted_tail_matches_brute_sum():
    spec = HierarchySpec.homogeneous(2, 4)
    seq = GeometricCoupling(4.0)
    for r in range(5):
        brute = sum(seq.p(s) / spec.size(s) for s in range(r + 1, 120))
        assert abs(seq.weighted_tail(r, spec) - brute) < 1e-16
    poly = PolyGeometricCoupling(2, 0.3)
    brute = sum(poly.p(s) / spec.size(s) for s in range(3, 120))
    assert abs(poly.weighted_tail(2, spec) - brute) < 1e-16


def test_weighted_tail_explicit_concentrates_declared_mass():
    spec = HierarchySpec.homogeneous(2, 2)
    seq = ExplicitCoupling([0.6, 0.3], 0.1)
    # declared mass beyond the list is carried at the first unspecified rank
    assert seq.weighted_tail(2, spec) == pytest.approx(0.1 / 8, abs=1e-18)
    assert seq.weighted_tail(1, spec) == pytest.approx(0.3 / 4 + 0.1 / 8, abs=1e-18)
    assert ExplicitCoupling([0.7, 0.3]).weighted_tail(2, spec) == 0.0


def test_power_sequence_contract():
    u = PowerSequence(2.0)
    assert u(0) == 0.0
    assert u(3) == 9.0
    with pytest.raises(ValueError):
        PowerSequence(1.0)


def test_main_hypothesis_geometric_converges():
    t = build_truncation(HierarchySpec.homogeneous(2, 3))
    rep = check_main_hypothesis(GeometricCoupling(4.0), t, PowerSequence(2.0), 30)
    assert rep.verdict == CONVERGES_ANALYTIC
    assert rep.converges is True
    # term oracle: p_r N_{r-1} u_{r-1} u_r = 3 4^{-r} 2^{r-1} (r-1)^2 r^2
    for r, term in zip(rep.r_values, rep.terms):
        oracle = 3.0 * 4.0 ** (-r) * 2.0 ** (r - 1) * (r - 1) ** 2 * r**2
        assert term == pytest.approx(oracle, rel=1e-13)


def test_main_hypothesis_geometric_diverges():
    t = build_truncation(HierarchySpec.homogeneous(2, 3))
    rep = check_main_hypothesis(GeometricCoupling(2.0), t, PowerSequence(2.0), 30)
    assert rep.verdict == DIVERGES_ANALYTIC
    assert rep.converges is False
    for r, term in zip(rep.r_values, rep.terms):
        assert term == pytest.approx(0.5 * (r - 1) ** 2 * r**2, rel=1e-13)
    assert rep.last_term == rep.terms[-1]


def test_main_hypothesis_polygeometric_matches_published_window():
    t = build_truncation(HierarchySpec.homogeneous(2, 3))
    rep = check_main_hypothesis(
        PolyGeometricCoupling(2, 0.3), t, PowerSequence(1.1), 40
    )
    assert rep.verdict == CONVERGES_ANALYTIC
    # exponents past 1 + eps/2 make the terms ~ r^{2b-3-eps} non-summable
    above_boundary = check_main_hypothesis(
        PolyGeometricCoupling(2, 0.3), t, PowerSequence(1.2), 40
    )
    assert above_boundary.verdict == DIVERGES_ANALYTIC


@pytest.mark.parametrize("degree,rho", [(2, 2.0), (2, 4.0), (3, 2.0), (3, 4.0), (4, 3.0)])
def test_main_hypothesis_verdict_iff_ratio_below_one(degree, rho):
    t = build_truncation(HierarchySpec.homogeneous(degree, 2))
    rep = check_main_hypothesis(GeometricCoupling(rho), t, PowerSequence(2.0), 25)
    assert rep.converges is (degree / rho < 1.0)


def test_main_hypothesis_rejects_tiny_horizon():
    t = build_truncation(HierarchySpec.homogeneous(2, 2))
    with pytest.raises(ValueError):
        check_main_hypothesis(GeometricCoupling(4.0), t, PowerSequence(2.0), 1)


def test_molchanov_condition_geometric_converges():
    for rho in (2.0, 4.0):
        rep = check_molchanov_condition(GeometricCoupling(rho), PowerSequence(2.0), 30)
        assert rep.verdict == CONVERGES_ANALYTIC


def test_molchanov_condition_explicit_diverges():
    r_max = 60
    weights = [1.0 / (r * (r + 1)) for r in range(1, r_max + 1)]
    tail = 1.0 - sum(weights)  # telescoping leaves 1/(r_max+1)
    seq = ExplicitCoupling(weights, tail)
    rep = check_molchanov_condition(seq, PowerSequence(2.0), r_max)
    assert rep.verdict == DIVERGES_NUMERIC
    # terms approach 1, partial sums grow linearly
    assert rep.terms[-1] == pytest.approx(r_max / (r_max + 1), rel=1e-12)


def test_fractional_moment_bounds_frozen_oracle():
    # brute-force oracle over 400 terms froze these brackets
    t = build_truncation(HierarchySpec.homogeneous(2, 3))
    bracket = fractional_moment_bounds(GeometricCoupling(4.0), t, 0.5)
    assert bracket.lower.converges is True
    assert bracket.upper.converges is True
    assert bracket.lower.value == pytest.approx(1.6407544820340814, abs=1e-12)
    assert bracket.upper.value == pytest.approx(4.181540550352055, abs=1e-12)
    assert bracket.lower.value <= bracket.upper.value


def test_fractional_moment_bounds_divergent_upper():
    # at rho = 2, s = 1/2 the upper series has constant terms sqrt(rho-1)
    t = build_truncation(HierarchySpec.homogeneous(2, 3))
    bracket = fractional_moment_bounds(GeometricCoupling(2.0), t, 0.5)
    assert bracket.upper.converges is False
    assert math.isinf(bracket.upper.value)
    assert bracket.upper.ratio == pytest.approx(1.0, abs=1e-15)
    assert bracket.lower.converges is True
    assert bracket.lower.value == pytest.approx(math.sqrt(2.0) + 1.0, abs=1e-9)


def test_fractional_moment_bounds_degenerate_at_s_near_one():
    t = build_truncation(HierarchySpec.homogeneous(2, 3))
    bracket = fractional_moment_bounds(GeometricCoupling(4.0), t, 1.0 - 1e-9)
    assert bracket.lower.value == pytest.approx(1.0, abs=1e-6)
    assert bracket.upper.value == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        fractional_moment_bounds(GeometricCoupling(4.0), t, 1.0)
    with pytest.raises(ValueError):
        fractional_moment_bounds(GeometricCoupling(4.0), t, 0.0)
