import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from circdyn.core import CirclePoint, Identity, Rotation
from circdyn.gs import gs_family, nonminimal_phi, standard_realizations
from circdyn.measures import (AtomicMeasure, EmpiricalMeasure, GSAtom, build_gs_conformal,
                              build_psl_conformal, conformality_defect, conservativity_probe,
                              density_ratio)
from circdyn.psl2z import F1, F2, ProjectiveDirection, g2_family


def _primitive_directions(R):
    """Independent enumeration: directions of all nonzero lattice points in the disc."""
    seen = set()
    for u in range(-R, R + 1):
        for v in range(-R, R + 1):
            if (u, v) != (0, 0) and u * u + v * v <= R * R:
                g = math.gcd(u, v)
                p, q = u // g, v // g
                if q < 0 or (q == 0 and p < 0):
                    p, q = -p, -q
                seen.add((p, q))
    return seen


@pytest.mark.parametrize("R", [1, 2, 3, 7, 20])
def test_psl_atoms_match_enumeration(R):
    mu = build_psl_conformal(1.5, R)
    assert {(x.u, x.v) for x in mu.atoms} == _primitive_directions(R)


def test_psl_small_examples():
    assert len(build_psl_conformal(1.5, 1)) == 2
    assert len(build_psl_conformal(1.5, 2)) == 4
    mu = build_psl_conformal(1.5, 3)
    assert mu.weight(ProjectiveDirection(2, 1)) == pytest.approx(5 ** -1.5, rel=1e-15)


def test_psl_invalid():
    with pytest.raises(ValueError):
        build_psl_conformal(1.0, 10)
    with pytest.raises(ValueError):
        build_psl_conformal(1.5, 0)


def test_psl_total_and_tail():
    prev = 0.0
    for R in (5, 10, 20, 40):
        mu = build_psl_conformal(1.5, R)
        assert mu.total == pytest.approx(math.fsum(mu.atoms.values()), abs=1e-12)
        assert mu.total >= prev
        bigger = build_psl_conformal(1.5, 2 * R)
        assert bigger.total - mu.total <= mu.tail_bound
        prev = mu.total


def test_psl_conformality():
    mu = build_psl_conformal(1.5, 50)
    for g in (F1, F2, F1.inverse(), F2.inverse()):
        rep = conformality_defect(mu, g, 1.5)
        assert rep.max_relative_defect < 1e-12
        assert rep.exact is True
        assert rep.atoms_checked > 0 and rep.atoms_skipped_boundary > 0


def test_identity_defect_zero():
    mu = build_psl_conformal(1.5, 10)
    rep = conformality_defect(mu, Identity(), 1.5)
    assert rep.max_relative_defect == 0.0 and rep.atoms_skipped_boundary == 0


@pytest.fixture(scope="module")
def gs_mu():
    return build_gs_conformal(nonminimal_phi(), 1.5, 10)


def test_gs_depth_one_single_atom():
    mu = build_gs_conformal(nonminimal_phi(), 1.5, 1)
    assert len(mu) == 1


def test_gs_conformality(gs_mu):
    phi = gs_mu_phi = nonminimal_phi()
    for g in standard_realizations(phi).values():
        for gg in (g, g.inverse()):
            assert conformality_defect(gs_mu, gg, 1.5).max_relative_defect < 1e-6


def test_gs_identity_defect(gs_mu):
    assert conformality_defect(gs_mu, Identity(), 1.5).max_relative_defect == 0.0


def test_pushforward_preserves_total():
    mu = build_psl_conformal(1.5, 30)
    nu = mu.pushforward(F1)
    assert nu.total == mu.total
    assert len(nu) == len(mu)


@pytest.mark.parametrize("build", [lambda: build_psl_conformal(1.5, 12),
                                   lambda: build_gs_conformal(nonminimal_phi(), 1.5, 6),
                                   lambda: AtomicMeasure({0.1: 0.5, 0.7: 1 / 3}, "unit", None, {}, None)])
def test_text_roundtrip_bit_exact(build):
    mu = build()
    back = AtomicMeasure.from_text(mu.to_text())
    assert back.atoms == mu.atoms
    assert back.total == mu.total and back.truncation == mu.truncation
    assert back.tail_bound == mu.tail_bound and back.chart == mu.chart


def test_gs_atom_equality_by_label():
    assert GSAtom(Fraction(1, 2), 0.3) == GSAtom(Fraction(1, 2), 0.30000001)
    assert str(GSAtom.parse("3/2^3@0.25")) == "3/2^3@0.25"


def test_atomic_weights_positive():
    with pytest.raises(ValueError):
        AtomicMeasure({0.1: 0.0}, "unit", None, {}, None)


@given(st.lists(st.floats(0.0, 0.999999), min_size=1, max_size=200), st.integers(1, 64))
def test_histogram_counts(values, bins):
    h = EmpiricalMeasure.from_samples(np.array(values), bins)
    assert h.total == len(values)
    assert math.isclose(float(h.frequencies().sum()), 1.0)
    assert h.tv_distance(h) == 0.0


@given(st.lists(st.floats(0.0, 0.999999), min_size=1, max_size=100),
       st.lists(st.floats(0.0, 0.999999), min_size=1, max_size=100))
def test_tv_symmetric_and_bounded(a, b):
    h1 = EmpiricalMeasure.from_samples(np.array(a), 16)
    h2 = EmpiricalMeasure.from_samples(np.array(b), 16)
    d = h1.tv_distance(h2)
    assert d == h2.tv_distance(h1) and 0.0 <= d <= 1.0


def test_tv_bins_mismatch():
    with pytest.raises(ValueError):
        EmpiricalMeasure.uniform(8).tv_distance(EmpiricalMeasure.uniform(16))


def test_uniform_mass_is_length():
    u = EmpiricalMeasure.uniform(100)
    assert u.mass(0.5, 0.05) == pytest.approx(0.1)
    assert u.mass(0.0, 0.05) == pytest.approx(0.1)  # wraps around 0


def test_density_ratio_identical():
    u = EmpiricalMeasure.uniform(64)
    assert density_ratio(u, u, 0.3, [0.1, 0.01]) == [pytest.approx(1.0), pytest.approx(1.0)]


def test_density_ratio_atom_vs_uniform_diverges():
    atom = AtomicMeasure({0.3: 1.0}, "unit", None, {}, None)
    u = EmpiricalMeasure.uniform(1024)
    r = density_ratio(atom, u, 0.3, [0.1, 0.01, 0.001])
    assert r[0] < r[1] < r[2]


def test_density_ratio_zero_over_zero():
    atom = AtomicMeasure({0.3: 1.0}, "unit", None, {}, None)
    assert density_ratio(atom, atom, 0.8, [0.01]) == [None]
    h = EmpiricalMeasure.from_samples(np.array([0.2]), 8)
    assert density_ratio(atom, h, 0.3, [0.01]) == [math.inf]


def test_density_ratio_needs_decreasing():
    u = EmpiricalMeasure.uniform(16)
    with pytest.raises(ValueError):
        density_ratio(u, u, 0.1, [0.01, 0.1])


def test_density_ratio_drift_between_stationary_and_lebesgue():
    # evidence only: the ratio sequence is reported, no limit is asserted
    from circdyn.random_walk import StepDistribution, stationary_estimate
    m = StepDistribution.uniform(g2_family(c_family=0.0))
    nu = stationary_estimate(m, 100, 50_000, seed=3)
    leb = EmpiricalMeasure.uniform(nu.bins, nu.chart)
    ratios = density_ratio(nu, leb, 1.0, [0.3, 0.1, 0.03, 0.01])
    print("density ratio drift at angle 1.0:", ratios)
    assert all(r is None or r >= 0 for r in ratios)


def test_conservativity_cap_zero():
    prof = conservativity_probe(g2_family(), 1.0, ProjectiveDirection(3, 7), 0)
    assert prof.partial_sums == [1.0] and prof.counts == [1]


def test_conservativity_monotone():
    prof = conservativity_probe(g2_family(), 1.0, ProjectiveDirection(12345, 6789), 8)
    assert all(b >= a for a, b in zip(prof.partial_sums, prof.partial_sums[1:]))
    assert prof.counts[1] == 4 and prof.counts[2] == 12  # free group shells


def test_conservativity_parabolic_units():
    prof = conservativity_probe(g2_family(), 1.0, ProjectiveDirection(0, 1), 6)
    # powers of f2 fix (0:1) with derivative one
    assert prof.unit_derivative_counts == [1, 3, 5, 7, 9, 11, 13]
    assert all(s >= u for s, u in zip(prof.partial_sums, prof.unit_derivative_counts))
    assert prof.growth == "growing"


def test_conservativity_thompson_dedup():
    prof = conservativity_probe(gs_family(), 1.0, 0.3, 2)
    assert prof.counts[1] == 6
    assert prof.counts[2] < 30  # C C = C^-1 is found as a duplicate


def test_conservativity_dedup_cap():
    with pytest.raises(MemoryError):
        conservativity_probe(g2_family(), 1.0, ProjectiveDirection(3, 7), 6, dedup_cap=50)
