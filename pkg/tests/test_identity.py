"""Volume and boundary forms of h2 - h1 and the lemma checks."""

import math

import numpy as np
import pytest

from errors import IncompatibilityError, InfeasibleFrequencyError
from faddeev import FaddeevGreen, solve_mu
from forward import delta_norm, dtn_map
from geometry import build_domain, make_theta_pair
from identity import (
    boundary_form_bound,
    hdiff_boundary,
    hdiff_volume,
    lemma21_rhs,
    lemma_210_bound,
    verify_lemma21,
    verify_lemma32,
)
from potential import generate


@pytest.fixture(scope="module")
def pair():
    return make_theta_pair(2.0, 1.0, np.zeros(3))


@pytest.fixture(scope="module")
def states(born_pair, green12, pair):
    v1, v2 = born_pair
    return solve_mu(v1, -pair.l, green12), solve_mu(v2, pair.k, green12)


class TestForms:
    def test_equal_potentials_give_zero(self, bump, green12, pair):
        phi = dtn_map(bump.domain, bump, 2.0)
        s1 = solve_mu(bump, -pair.l, green12)
        s2 = solve_mu(bump, pair.k, green12)
        assert hdiff_volume(bump, bump, s1, s2, pair) == 0
        assert hdiff_boundary(phi, phi, s1, s2, pair) == 0

    def test_volume_form_is_antisymmetric(self, born_pair, states, pair):
        v1, v2 = born_pair
        s1, s2 = states
        forward = hdiff_volume(v1, v2, s1, s2, pair)
        assert forward != 0
        assert hdiff_volume(v2, v1, s1, s2, pair) == pytest.approx(-forward, rel=1e-9)

    def test_volume_form_is_linear_in_the_difference(self, born_pair, states, pair):
        v1, v2 = born_pair
        s1, s2 = states
        base = hdiff_volume(v1, v2, s1, s2, pair)
        doubled = v1 + (v2 - v1).scaled(2.0)
        assert hdiff_volume(v1, doubled, s1, s2, pair) == pytest.approx(2.0 * base, rel=1e-9)
        mixed = v2 + (v2 - v1).scaled(-0.5)
        assert hdiff_volume(v1, mixed, s1, s2, pair) == pytest.approx(0.5 * base, rel=1e-9)

    def test_states_must_match_the_pair(self, born_pair, states, pair):
        v1, v2 = born_pair
        s1, s2 = states
        with pytest.raises(IncompatibilityError):
            hdiff_volume(v1, v2, s2, s1, pair)

    def test_energy_mismatch(self, domain12, born_pair, states, pair):
        v1, v2 = born_pair
        s1, s2 = states
        other = dtn_map(domain12, v1, 1.0), dtn_map(domain12, v2, 1.0)
        with pytest.raises(IncompatibilityError):
            hdiff_boundary(*other, s1, s2, pair)

    def test_boundary_form_respects_its_bound(self, born_dtn, states, pair):
        phi1, phi2 = born_dtn
        s1, s2 = states
        value = hdiff_boundary(phi1, phi2, s1, s2, pair)
        assert abs(value) <= boundary_form_bound(phi1, phi2, s1, s2) * (1 + 1e-9)

    def test_forms_agree_in_the_born_regime(self, born_pair, born_dtn, green12, pair):
        check = verify_lemma32(*born_pair, pair, green12, *born_dtn)
        assert check.residual_identity < 0.5

    def test_mismatch_shrinks_under_refinement(self):
        mismatches = []
        for n in (8, 16):
            dom = build_domain(0.5, n)
            v1 = generate("cosine_bump", {"amplitude": 0.2}, 0, dom)
            v2 = v1 + generate("gaussian_bump", {"amplitude": 0.1, "width": 0.1}, 0, dom)
            check = verify_lemma32(v1, v2, make_theta_pair(2.0, 1.0, np.zeros(3)),
                                   FaddeevGreen(dom), dtn_map(dom, v1, 2.0), dtn_map(dom, v2, 2.0))
            mismatches.append(check.residual_identity)
        assert mismatches[1] < mismatches[0]


class TestLemma32:
    def test_identical_potentials(self, bump, green12, pair):
        phi = dtn_map(bump.domain, bump, 2.0)
        check = verify_lemma32(bump, bump, pair, green12, phi, phi)
        assert check.residual_lemma32 == 0.0
        assert check.lemma32_ratio == 0.0
        assert check.residual_identity == 0.0

    def test_ratios_are_finite(self, born_pair, born_dtn, green12, pair):
        check = verify_lemma32(*born_pair, pair, green12, *born_dtn)
        assert 0 < check.lemma32_ratio < math.inf
        assert check.lemma31_ratio > 0


class TestLemma21:
    def test_identical_potentials(self, bump, pair):
        record = verify_lemma21(bump, bump, pair, 0.0, c1=1.0)
        assert record.lhs == 0.0
        assert record.implied_c1 == 0.0
        assert record.holds

    def test_implied_constant(self, born_pair, born_dtn, pair):
        v1, v2 = born_pair
        delta = delta_norm(*born_dtn)
        record = verify_lemma21(v1, v2, pair, delta)
        assert record.holds is None
        assert record.implied_c1 == pytest.approx(record.lhs / record.rhs_without_c1)
        assert verify_lemma21(v1, v2, pair, delta, c1=record.implied_c1 * 1.01).holds
        assert not verify_lemma21(v1, v2, pair, delta, c1=record.implied_c1 * 0.5).holds

    def test_xi_out_of_reach(self, born_pair, pair):
        far = type(pair)(k=pair.k, l=pair.l, xi=np.array([10.0, 0.0, 0.0]), rho=pair.rho, E=pair.E)
        with pytest.raises(InfeasibleFrequencyError):
            verify_lemma21(*born_pair, far, 0.0)

    def test_rhs_closed_form(self):
        # (1+1)^2 (e^0 * 0.5 + 3 / sqrt(9))
        assert lemma21_rhs(1.0, 0.0, 1.0, 0.5, 3.0, 9.0) == pytest.approx(6.0)


def test_lemma_210_bound():
    assert lemma_210_bound(1.0, 0.0, 1.0, 0.25, 1.0, 2.0) == pytest.approx(2.0)
    assert lemma_210_bound(0.0, 1.0, 0.5, 1.0, 1.0, 1.0) == pytest.approx(math.e)
    assert lemma_210_bound(0.0, 1e4, 1.0, 1.0, 1.0, 1.0) == math.inf
    assert lemma_210_bound(5.0, 1e4, 1.0, 0.0, 1.0, 1.0) == 0.0
