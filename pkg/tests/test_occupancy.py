"""Success-count distributions against enumeration and closed forms."""

import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fsastab.errors import StateSpaceTooLarge
from fsastab.occupancy import (
    SuccessLaw,
    brute_force_xi,
    expected_successes,
    expected_successes_exact,
    occupancy_pmf,
    poisson_occupancy,
    xi,
    xi_mpr,
    xi_spr,
    xi_upper_bound,
)

SPR = SuccessLaw.spr()


def enumerate_xi(h, L, M):
    """Reference: walk every assignment with itertools and tally successes."""
    tally = Counter()
    for assignment in itertools.product(range(L), repeat=h):
        occ = Counter(assignment)
        tally[sum(n for n in occ.values() if n <= M)] += 1
    total = L**h
    return {k: Fraction(c, total) for k, c in tally.items()}


def laws():
    return [SPR, SuccessLaw.mpr(1), SuccessLaw.mpr(2), SuccessLaw.mpr(3)]


class TestSuccessLaw:
    def test_spr_has_unit_capacity(self):
        assert SPR.M == 1 and SPR.capacity == 1

    @pytest.mark.parametrize("M", [0, -1])
    def test_rejects_nonpositive_capacity(self, M):
        with pytest.raises(ValueError):
            SuccessLaw.mpr(M)


class TestOccupancyPmf:
    def test_empty_frame_of_packets(self):
        assert occupancy_pmf(0, 5)(0) == 1.0

    def test_two_packets_two_slots(self):
        p = occupancy_pmf(2, 2)
        assert [p(0), p(1), p(2)] == pytest.approx([0.25, 0.5, 0.25], abs=1e-15)

    def test_three_packets_two_slots(self):
        assert occupancy_pmf(3, 2)(1) == pytest.approx(0.375, abs=1e-15)

    def test_expected_slot_count_is_scaled_pmf(self):
        p = occupancy_pmf(7, 4)
        assert p.b(1) == pytest.approx(4 * p(1))

    def test_zero_above_h(self):
        assert occupancy_pmf(3, 2)(4) == 0.0

    def test_rejects_empty_frame(self):
        with pytest.raises(ValueError):
            occupancy_pmf(3, 0)


class TestHandValues:
    """Values worked out by enumerating assignments by hand."""

    def test_single_packet_single_slot(self):
        assert xi_spr(1, 1).xi.tolist() == [0.0, 1.0]

    def test_spr_two_two(self):
        assert xi_spr(2, 2).xi.tolist() == [0.5, 0.0, 0.5]

    def test_spr_three_two(self):
        assert xi_spr(3, 2).xi.tolist() == [0.25, 0.75, 0.0]

    def test_mpr_three_two_capacity_two(self):
        assert xi_mpr(3, 2, 2).xi.tolist() == [0.25, 0.0, 0.0, 0.75]

    def test_mpr_capacity_covers_everything(self):
        assert xi_mpr(2, 2, 2)(2) == 1.0

    def test_zero_backlog_is_point_mass(self):
        d = xi_spr(0, 4)
        assert d.xi.tolist() == [1.0] and d.method == "trivial"

    def test_exact_rationals_recorded(self):
        assert xi_spr(3, 2).exact == (Fraction(1, 4), Fraction(3, 4), Fraction(0))


@pytest.mark.parametrize("h", range(1, 7))
@pytest.mark.parametrize("L", range(1, 7))
class TestAgainstEnumeration:
    @pytest.mark.parametrize("M", [1, 2, 3])
    def test_mpr_matches_reference(self, h, L, M):
        ref = enumerate_xi(h, L, M)
        got = xi_mpr(h, L, M)
        for k, v in ref.items():
            assert got.exact[k] == v
        assert np.allclose(got.xi, [float(ref.get(k, 0)) for k in range(len(got))], atol=1e-12, rtol=0)

    def test_spr_matches_brute_force(self, h, L):
        assert np.max(np.abs(xi_spr(h, L).xi - brute_force_xi(h, L, SPR).xi)) <= 1e-12

    def test_spr_equals_mpr_one(self, h, L):
        assert xi_spr(h, L).exact == xi_mpr(h, L, 1).exact

    def test_spr_zero_cases(self, h, L):
        d = xi_spr(h, L)
        assert len(d) == min(h, L) + 1
        if L < h:
            assert d(L) == 0.0

    def test_mean_matches_closed_form(self, h, L):
        for law in laws():
            assert abs(xi(h, L, law).mean() - expected_successes(h, L, law)) <= 1e-10

    def test_spr_closed_form_is_exact(self, h, L):
        r = expected_successes_exact(h, L, SPR)
        assert r == h * (1 - Fraction(1, L)) ** (h - 1)
        assert sum(k * p for k, p in enumerate(xi_spr(h, L).exact)) == r

    def test_upper_bound_dominates(self, h, L):
        d = brute_force_xi(h, L, SPR)
        for k in range(min(h, L) + 1):
            assert xi_upper_bound(h, L, k) >= d(k)


class TestPaths:
    @pytest.mark.parametrize("h,L", [(10, 7), (30, 30), (64, 20), (50, 64)])
    @pytest.mark.parametrize("M", [1, 2, 4])
    def test_float_path_agrees_with_exact(self, h, L, M):
        exact = xi_mpr(h, L, M, method="exact")
        flt = xi_mpr(h, L, M, method="float")
        assert flt.method == "log-recurrence"
        assert np.max(np.abs(exact.xi - flt.xi)) <= 1e-13

    @pytest.mark.parametrize("h,L", [(200, 200), (500, 250), (800, 800)])
    def test_large_spr_normalized_and_mean_consistent(self, h, L):
        d = xi_spr(h, L)
        assert d.method == "log-recurrence"
        assert abs(d.total() - 1.0) <= 1e-12
        assert abs(d.mean() - expected_successes(h, L, SPR)) <= 1e-10

    def test_large_mpr_mean_consistent(self):
        law = SuccessLaw.mpr(3)
        d = xi(200, 100, law)
        assert abs(d.mean() - expected_successes(200, 100, law)) <= 1e-10

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            xi_spr(3, 3, method="magic")

    def test_brute_force_cap(self):
        with pytest.raises(StateSpaceTooLarge):
            brute_force_xi(20, 10, SPR)

    def test_brute_force_trivial_cases(self):
        assert brute_force_xi(0, 3, SPR).xi.tolist() == [1.0]
        assert brute_force_xi(3, 3, SuccessLaw.mpr(3))(3) == 1.0


class TestExpectedSuccesses:
    def test_two_two_spr(self):
        assert expected_successes(2, 2, SPR) == pytest.approx(1.0, abs=1e-15)

    def test_three_two_mpr(self):
        assert expected_successes(3, 2, SuccessLaw.mpr(2)) == pytest.approx(2.25, abs=1e-15)
        assert expected_successes_exact(3, 2, SuccessLaw.mpr(2)) == Fraction(9, 4)

    @pytest.mark.parametrize("law", laws())
    def test_zero_backlog(self, law):
        assert expected_successes(0, 5, law) == 0.0

    @given(st.integers(0, 60), st.integers(1, 40))
    def test_nondecreasing_in_capacity(self, h, L):
        r = [expected_successes(h, L, SuccessLaw.mpr(M)) for M in range(1, 7)]
        assert all(b >= a - 1e-12 for a, b in zip(r, r[1:]))


class TestPoissonOccupancy:
    def test_unit_ratio(self):
        assert poisson_occupancy(50, 50, 1).rho[1] == pytest.approx(50 * math.exp(-1), abs=1e-12)

    def test_hundred_slots(self):
        rho1 = poisson_occupancy(100, 100, 1).rho[1]
        exact = 100 * 0.99**99
        assert rho1 == pytest.approx(36.788, abs=1e-3)
        assert abs(rho1 - exact) / exact < 0.01

    def test_triple_occupancy(self):
        assert poisson_occupancy(20, 4, 3).rho[3] == pytest.approx(4 * math.exp(-5) * 125 / 6, abs=1e-12)

    def test_pmf_is_poisson(self):
        approx = poisson_occupancy(30, 10, 2)
        r = approx.rho[2]
        assert approx.pmf(2, 3) == pytest.approx(math.exp(-r) * r**3 / 6, rel=1e-12)

    def test_rejects_zero_jmax(self):
        with pytest.raises(ValueError):
            poisson_occupancy(5, 5, 0)


class TestUpperBound:
    def test_both_collide_or_both_succeed(self):
        assert xi_upper_bound(2, 2, 2) == 0.5 >= xi_spr(2, 2)(2)

    def test_four_four_two(self):
        assert xi_upper_bound(4, 4, 2) == 0.75 >= xi_spr(4, 4)(2)

    def test_zero_successes(self):
        assert xi_upper_bound(5, 3, 0) == 1.0

    def test_single_packet(self):
        assert xi_upper_bound(1, 4, 1) == 1.0

    def test_rejects_k_above_min(self):
        with pytest.raises(ValueError):
            xi_upper_bound(3, 2, 3)

    @settings(max_examples=200)
    @given(st.integers(1, 24), st.integers(1, 24), st.data())
    def test_dominates_exact(self, h, L, data):
        k = data.draw(st.integers(0, min(h, L)))
        assert xi_upper_bound(h, L, k) >= xi_spr(h, L)(k)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 120), st.integers(1, 120), st.integers(1, 5))
def test_distribution_invariants(h, L, M):
    d = xi_mpr(h, L, M)
    assert len(d) == min(h, L * M) + 1
    assert np.all(d.xi >= 0)
    assert abs(d.total() - 1.0) <= 1e-12
    assert abs(d.mean() - expected_successes(h, L, SuccessLaw.mpr(M))) <= 1e-10
