import math
import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from circdyn.core import CircleInterval, CirclePoint, FunctionMap, Identity, MapFamily, Word, WordMap, affine_map
from circdyn.distortion import (LOG2, check_sum_bound, distortion_coefficient, distortion_norm,
                                fixed_point_return_branches, image_interval, local_distortion_radius,
                                log_derivative_range, orbit_intervals, prefix_derivatives)
from circdyn.experiments import _random_case
from circdyn.psl2z import F1, F2, g2_family, greedy_word, period_two_point, phi_tilde, phi_tilde_derivative

G2 = g2_family()


def test_identity_and_affine_have_no_distortion():
    I = CircleInterval.from_values(0.2, 0.3)
    assert distortion_coefficient(Identity(), I) == 0.0
    assert distortion_coefficient(affine_map(3.0), I) == 0.0
    assert distortion_norm(affine_map(3.0), I) == 0.0


def test_distortion_matches_fine_grid():
    I = CircleInterval.from_values(0.3, 0.9, "projective")
    xs = np.linspace(0.3, 0.9, 100_001)
    L = np.log(F2.derivative(xs))
    brute = float(L.max() - L.min())
    assert distortion_coefficient(F2, I, 1000) == pytest.approx(brute, abs=1e-6)


def test_distortion_monotone_in_nested_grids():
    I = CircleInterval.from_values(0.1, 1.4, "projective")
    g = WordMap(Word.parse("f1 f2^-1"), G2)
    vals = [distortion_coefficient(g, I, n, polish=False) for n in (11, 21, 41, 81, 161)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_distortion_norm_mobius_closed_form():
    # on the image, log F' o F^-1 = -log (F^-1)', so eta = sup |(log (F^-1)')'| over F(I)
    I = CircleInterval.from_values(0.4, 1.0, "projective")
    eta = distortion_norm(F2, I, 2000)
    ys = np.linspace(F2(0.4), F2(1.0), 20001)
    ref = float(np.max(np.abs(F2.inverse().log_derivative_slope(ys))))
    assert eta == pytest.approx(ref, rel=0.02)


def test_sum_bound_empty_word():
    rep = check_sum_bound(Word(), G2, CircleInterval.from_values(0.1, 0.2, "projective"))
    assert rep.kappa == 0.0 and rep.slack == 0.0


def test_sum_bound_affine_single():
    fam = MapFamily({"a": affine_map(2.0)}, c_family=0.0)
    I = CircleInterval.from_values(0.1, 0.2)
    rep = check_sum_bound(Word.parse("a"), fam, I)
    assert rep.kappa == 0.0 and rep.bound == 0.0


@given(st.integers(0, 2 ** 32))
def test_sum_bound_random_cases(seed):
    word, I, _ = _random_case(random.Random(seed), G2)
    rep = check_sum_bound(word, G2, I, 400)
    assert rep.slack >= -1e-9


@given(st.integers(0, 2 ** 32))
def test_subadditivity_and_sandwich(seed):
    rng = random.Random(seed)
    word, I, ints = _random_case(rng, G2)
    k = rng.randint(0, len(word))
    whole = distortion_coefficient(WordMap(word, G2), I, 400)
    kf = distortion_coefficient(WordMap(word[:k], G2), I, 400) if k else 0.0
    kg = distortion_coefficient(WordMap(word[k:], G2), ints[k], 400) if k < len(word) else 0.0
    assert kf + kg - whole >= -1e-9
    x0 = I.left.value + rng.random() * I.length
    ders = prefix_derivatives(word, G2, x0)
    lengths = np.array([J.length for J in ints])
    partial = np.concatenate([[0.0], np.cumsum(lengths[:-1])])
    assert np.all(np.abs(np.log(ders * I.length / lengths)) <= G2.c_family * partial + 1e-9)


def test_radius_single_letter():
    x0 = CirclePoint(0.5, "projective")
    rep = local_distortion_radius(x0, Word.parse("f1"), G2)
    assert rep.S == 1.0
    assert rep.delta == pytest.approx(LOG2 / (2 * G2.c_family))
    assert rep.kappa_bound == pytest.approx(LOG2)
    assert rep.measured_kappa <= LOG2


def test_radius_two_letters_sum():
    x0 = CirclePoint(0.5, "projective")
    rep = local_distortion_radius(x0, Word.parse("f1 f1^-1"), G2)
    assert rep.S == pytest.approx(1.0 + F1.derivative(0.5))


def test_radius_greedy_word():
    from circdyn.experiments import generic_direction
    x = generic_direction(random.Random(5), 20)
    rep = local_distortion_radius(x.to_point(), greedy_word(x, 20), G2)
    assert rep.measured_kappa <= LOG2 + 1e-9


def test_radius_overflow():
    fam = MapFamily({"a": affine_map(10.0)}, c_family=1.0)
    with pytest.raises(OverflowError):
        local_distortion_radius(CirclePoint(0.0), Word.parse(" ".join(["a"] * 400)), fam)


def test_radius_empty_word():
    with pytest.raises(ValueError):
        local_distortion_radius(CirclePoint(0.0), Word(), G2)


def test_image_exceeding_half_circle():
    with pytest.raises(ValueError):
        image_interval(affine_map(10.0), CircleInterval.from_values(0.0, 0.1))
    with pytest.raises(ValueError):
        orbit_intervals(Word.parse("f1"), G2, CircleInterval.from_values(0.0, 2.0, "projective"))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonpositive_derivative_rejected():
    bad = FunctionMap(lambda x: x, lambda x: 0 * np.asarray(x, dtype=float))
    with pytest.raises(ValueError):
        distortion_coefficient(bad, CircleInterval.from_values(0.1, 0.2))


def _doubling():
    return FunctionMap(lambda x: 2 * np.asarray(x, dtype=float), lambda x: 2 + 0 * np.asarray(x, dtype=float),
                       lambda y: np.asarray(y, dtype=float) / 2, name="double",
                       d2f=lambda x: 0 * np.asarray(x, dtype=float))


def test_branches_doubling():
    scan = fixed_point_return_branches(_doubling(), CirclePoint(0.0), CirclePoint(0.25), CirclePoint(0.5), 6)
    for k, J, mind, kappa in scan.branches:
        assert J.left.value == pytest.approx(2.0 ** (-k - 2))
        assert J.right.value == pytest.approx(2.0 ** (-k - 1))
        assert mind == pytest.approx(2.0 ** k)
        assert kappa == pytest.approx(0.0, abs=1e-12)
    assert scan.k0 == 1


def _phi_tilde_map():
    return FunctionMap(phi_tilde, phi_tilde_derivative, lambda y: np.asarray(y, dtype=float) / (1 + 2 * np.asarray(y, dtype=float)),
                       name="phi_tilde", d2f=lambda x: 4 / (1 - 2 * np.asarray(x, dtype=float)) ** 3)


def test_branches_parabolic_point():
    a, b = period_two_point()
    scan = fixed_point_return_branches(_phi_tilde_map(), CirclePoint(0.0), CirclePoint(a), CirclePoint(b), 30)
    assert scan.k0 is not None
    for k, J, mind, kappa in scan.branches:
        if k >= scan.k0:
            assert mind >= 2.0
        assert kappa <= scan.kappa_bound + 1e-6
    assert fixed_point_return_branches(_phi_tilde_map(), CirclePoint(0.0), CirclePoint(a),
                                       CirclePoint(b), 0).branches == []


def test_branches_reject_non_fixed():
    with pytest.raises(ValueError):
        fixed_point_return_branches(_doubling(), CirclePoint(0.1), CirclePoint(0.25), CirclePoint(0.5), 3)
