"""Parameter choices, splitting, estimate right-hand sides, sampling plans and reconstruction."""

import math

import numpy as np
import pytest

from errors import ConfigurationError, DomainError, IncompleteDataError, InfeasibleParametersError
from estimator import (
    SAMPLING_HEADROOM,
    Constants,
    EstimatorParams,
    c4_integral,
    choose_r_l2,
    choose_r_linf,
    choose_rho,
    fallback_l2,
    fallback_linf,
    holder_factor,
    holder_log_ratio_sup,
    intermediate_l2,
    intermediate_linf,
    q_l2,
    q_linf,
    reconstruct_diff_lowfreq,
    remainder_asymptotics,
    rhs_theorem1,
    rhs_theorem2,
    sampling_plan,
    split_error,
)
from geometry import make_theta_pair
from potential import FrequencyLattice, from_function, norm


def _params(**overrides):
    base = dict(tau=1.0, E=1.0, delta=0.01, N=1.0, N_Hm=1.0, N_Wm=1.0, m=3.0, L=1.0)
    base.update(overrides)
    return EstimatorParams(**base)


class TestConstants:
    def test_closed_forms(self):
        assert q_l2(1.0) == pytest.approx(0.0622, rel=2e-3)
        assert q_linf(1.0, 1.0) == pytest.approx(0.49237, rel=1e-4)
        assert Constants().q == q_l2(1.0)

    def test_round_trip(self):
        c = Constants(c1=2.0, A=3.0)
        assert Constants.from_dict(c.to_dict()) == c

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError):
            Constants.from_dict({"c1": 1.0, "c2": 1.0})

    @pytest.mark.parametrize("name,value", [("c1", 0.0), ("A", -1.0), ("beta", math.inf)])
    def test_rejects_non_positive(self, name, value):
        with pytest.raises(ConfigurationError):
            Constants(**{name: value})

    def test_r_star_may_be_zero(self):
        assert Constants(r_star=0.0).r_star == 0.0


class TestChoices:
    def test_rho_worked_value(self):
        choice = choose_rho(0.5, 0.05, math.sqrt(3) / 2)
        assert choice.gamma == pytest.approx(0.28868, rel=1e-4)
        assert choice.rho == pytest.approx(0.9051, rel=1e-3)
        assert not choice.degenerate

    def test_tau_one_is_degenerate(self):
        assert choose_rho(1.0, 0.1, 1.0) == (0.0, 0.0, True)

    def test_rho_grows_as_delta_shrinks(self):
        rhos = [choose_rho(0.5, d, 1.0).rho for d in (1e-1, 1e-3, 1e-6)]
        assert rhos == sorted(rhos)

    def test_zero_delta_is_floored(self):
        assert math.isfinite(choose_rho(0.5, 0.0, 1.0).rho)

    @pytest.mark.parametrize("tau,delta,L", [(0.0, 0.1, 1.0), (1.5, 0.1, 1.0), (0.5, -1.0, 1.0), (0.5, 0.1, 0.0)])
    def test_rho_rejects(self, tau, delta, L):
        with pytest.raises(DomainError):
            choose_rho(tau, delta, L)

    def test_r_l2_scaling(self):
        r1, q = choose_r_l2(0.0, 1.0, 0.0, 1.0)
        r2, _ = choose_r_l2(0.0, 8.0, 0.0, 1.0)
        assert r1 == pytest.approx(q)
        assert r2 / r1 == pytest.approx(2.0)
        r3, _ = choose_r_l2(7.0, 1.0, 0.0, 1.0)
        assert r3 == pytest.approx(q / 16.0)

    def test_r_linf_scaling(self):
        r1, qt = choose_r_linf(0.0, 1.0, 0.0, 1.0, 1.0)
        r2, _ = choose_r_linf(0.0, 64.0, 0.0, 1.0, 1.0)
        assert r1 == pytest.approx(qt)
        assert r2 / r1 == pytest.approx(2.0)

    def test_energy_must_be_positive(self):
        with pytest.raises(DomainError):
            choose_r_l2(0.0, -1.0, 0.5, 1.0)


class TestSplit:
    def test_parts_recombine(self, born_pair):
        v1, v2 = born_pair
        s = (v2 - v1).spectrum()
        low, high = split_error(s, 5.0)
        total = norm(v2 - v1, "L2") ** 2 / (2 * math.pi) ** 3
        assert low ** 2 + high ** 2 == pytest.approx(total, rel=1e-10)
        assert low > 0 and high > 0

    def test_l1_mode(self, bump):
        s = bump.spectrum()
        low, high = split_error(s, 5.0, "L1")
        assert low + high == pytest.approx(np.abs(s.coefficients).sum() * s.lattice.cell_volume)

    def test_radius_beyond_lattice(self, bump):
        s = bump.spectrum()
        assert split_error(s, 10 * s.lattice.extent)[1] == 0.0

    def test_rejects(self, bump):
        with pytest.raises(DomainError):
            split_error(bump.spectrum(), 0.0)
        with pytest.raises(DomainError):
            split_error(bump.spectrum(), 1.0, "Linf")


class TestRightHandSides:
    def test_theorem1_substitution(self):
        assert rhs_theorem1(_params()) == pytest.approx(16.01)

    def test_theorem2_substitution(self):
        assert rhs_theorem2(_params(N=0.0, m=4.0)) == pytest.approx(1.01)

    def test_theorem2_needs_m_above_three(self):
        with pytest.raises(DomainError):
            rhs_theorem2(_params(m=3.0))

    def test_theorem2_blows_up_near_three(self):
        values = [rhs_theorem2(_params(m=m)) for m in (3.5, 3.1, 3.01)]
        assert values == sorted(values)
        assert values[-1] > 50

    def test_negative_energy_needs_tau_below_one(self):
        with pytest.raises(InfeasibleParametersError):
            rhs_theorem1(_params(E=-1.0))

    def test_negative_energy_with_log_term(self):
        assert math.isfinite(rhs_theorem1(_params(E=-1.0, tau=0.5, delta=1e-6)))

    def test_negative_lambda(self):
        with pytest.raises(InfeasibleParametersError):
            rhs_theorem1(_params(E=-100.0, tau=0.9, delta=0.5))

    def test_zero_lambda_is_vacuous(self):
        assert rhs_theorem1(_params(E=0.0)) == math.inf

    def test_zero_delta_keeps_the_tail(self):
        value = rhs_theorem1(_params(delta=0.0, tau=0.5))
        assert value == pytest.approx(remainder_asymptotics(_params(delta=0.0, tau=0.5))[0])

    def test_remainders(self):
        r, r_t = remainder_asymptotics(_params())
        assert r == pytest.approx(16.0)
        assert r_t is None
        _, r_t = remainder_asymptotics(_params(m=4.0, N=0.0))
        assert r_t == pytest.approx(1.0)

    def test_remainder_decays_logarithmically(self):
        tails = [remainder_asymptotics(_params(tau=0.5, delta=d))[0] for d in (1e-2, 1e-8, 1e-32)]
        assert tails == sorted(tails, reverse=True)

    @pytest.mark.parametrize(
        "E,tau,delta,feasible",
        [
            (1.0, 1.0, 0.01, True),
            (0.0, 1.0, 0.01, True),
            (16.0, 0.3, 0.1, True),
            (-1.0, 1.0, 1e-6, False),
            (-1.0, 0.5, 1e-6, True),
            (-100.0, 0.9, 0.5, False),
            (-0.01, 0.99, 0.5, False),
        ],
    )
    def test_feasibility_table(self, E, tau, delta, feasible):
        for rhs, m in ((rhs_theorem1, 3.0), (rhs_theorem2, 4.0)):
            params = _params(E=E, tau=tau, delta=delta, m=m)
            if feasible:
                assert rhs(params) >= 0
            else:
                with pytest.raises(InfeasibleParametersError):
                    rhs(params)

    @pytest.mark.parametrize("rhs,m", [(rhs_theorem1, 3.0), (rhs_theorem2, 4.0)])
    def test_tail_only_bound_is_monotone(self, rhs, m):
        tail_only = Constants(A=1e-300, A_t=1e-300)
        energies = [0.5, 1.0, 4.0, 16.0, 64.0]
        by_energy = [rhs(_params(E=E, tau=0.5, m=m, constants=tail_only)) for E in energies]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(by_energy, by_energy[1:]))
        deltas = [1e-8, 1e-4, 1e-2, 0.1, 1.0]
        by_delta = [rhs(_params(E=1.0, tau=0.5, delta=d, m=m, constants=tail_only)) for d in deltas]
        assert all(b >= a * (1 - 1e-12) for a, b in zip(by_delta, by_delta[1:]))
        assert by_energy[0] > by_energy[-1] and by_delta[-1] > by_delta[0]

    def test_params_validation(self):
        with pytest.raises(DomainError):
            _params(tau=0.0)
        with pytest.raises(DomainError):
            _params(delta=-1.0)


class TestIntermediateBounds:
    def test_zero_difference(self):
        assert intermediate_l2(1.0, 0.5, 0.0, 1.0, 0.0, 2.0, 1.0, 1.0).value == 0.0
        assert intermediate_linf(1.0, 0.5, 0.0, 1.0, 0.0, 4.0, 1.0, 1.0, 1.0).value == 0.0

    def test_linf_power_law(self):
        m = 5.0
        a = intermediate_linf(1.0, 0.0, 0.0, 0.5, 1.0, m, 1.0, 1.0, 1.0).value
        b = intermediate_linf(64.0, 0.0, 0.0, 0.5, 1.0, m, 1.0, 1.0, 1.0).value
        assert a / b == pytest.approx(2.0 ** (m - 3))

    def test_l2_power_law(self):
        m = 3.0
        a = intermediate_l2(1.0, 0.0, 0.0, 0.5, 1.0, m, 1.0, 1.0).value
        b = intermediate_l2(8.0, 0.0, 0.0, 0.5, 1.0, m, 1.0, 1.0).value
        assert a / b == pytest.approx(2.0 ** m)

    def test_boundary_term_overflows_to_inf(self):
        assert intermediate_l2(1.0, 1e4, 0.1, 0.0, 0.0, 2.0, 1.0, 1.0).value == math.inf

    def test_feasibility_floor(self):
        assert intermediate_l2(1.0, 0.0, 0.1, 1.0, 1.0, 2.0, 1.0, 1.0, floor=1.0).reliable is False
        assert intermediate_l2(4.0, 0.0, 0.1, 1.0, 1.0, 2.0, 1.0, 1.0, floor=1.0).reliable is True
        assert intermediate_l2(1.0, 0.0, 0.1, 1.0, 1.0, 2.0, 1.0, 1.0).reliable is True

    def test_holder_factor_matches_prescribed_rho(self):
        tau, delta, L = 0.5, 0.05, 1.0
        rho = choose_rho(tau, delta, L).rho
        assert holder_factor(delta, tau) == pytest.approx(math.exp(2 * rho * L) * delta)
        assert holder_factor(0.0, tau) == 0.0
        assert holder_factor(0.3, 1.0) == pytest.approx(0.3)


class TestFallbacks:
    def test_l2(self):
        small, large = fallback_l2(4.0, 1.0, 0.0, 1.0, 3.0, 0.01, 1.0, 1.0)
        assert small == pytest.approx(0.25)
        assert large == pytest.approx(0.04)

    def test_linf(self):
        small, large = fallback_linf(4.0, 1.0, 1.0, 4.0, 0.01, 1.0, 1.0)
        assert small == pytest.approx(math.e)
        assert large == pytest.approx(0.04)

    def test_rejects(self):
        with pytest.raises(DomainError):
            fallback_l2(0.0, 1.0, 0.0, 1.0, 3.0, 0.01, 1.0, 1.0)
        with pytest.raises(DomainError):
            fallback_linf(4.0, 1.0, 1.0, 3.0, 0.01, 1.0, 1.0)


class TestIntegrals:
    def test_c4(self):
        assert c4_integral(4.0) == pytest.approx(math.pi ** 2, rel=1e-8)
        with pytest.raises(DomainError):
            c4_integral(3.0)

    def test_holder_log_sup(self):
        sup, arg = holder_log_ratio_sup(0.1, 1.0)
        assert sup == pytest.approx(10 / math.e, rel=1e-3)
        assert math.log(arg) == pytest.approx(-10.0, abs=0.1)

    def test_holder_log_sup_at_tau_one(self):
        sup, _ = holder_log_ratio_sup(1.0, 1.0)
        assert sup >= math.log(4.0)


class TestReconstruction:
    def test_missing_sample(self, small_domain):
        lattice = FrequencyLattice.for_domain(small_domain)
        with pytest.raises(IncompleteDataError):
            reconstruct_diff_lowfreq({(0, 0, 0): 1.0}, 2 * lattice.dxi, lattice, small_domain)

    def test_zero_samples(self, small_domain):
        lattice = FrequencyLattice.for_domain(small_domain)
        offsets, _ = lattice.points_within(2 * lattice.dxi)
        samples = {tuple(int(p) for p in o): 0j for o in offsets}
        recon, residue = reconstruct_diff_lowfreq(samples, 2 * lattice.dxi, lattice, small_domain)
        assert not np.any(recon.values)
        assert residue == 0.0

    def test_full_lattice_is_exact(self, small_domain):
        dom = small_domain
        truth = from_function(dom, lambda x1, x2, x3: np.exp(-8 * (x1 ** 2 + x2 ** 2 + x3 ** 2)), margin=0)
        s = truth.spectrum()
        r = math.sqrt(3) * s.lattice.extent + s.lattice.dxi
        offsets, _ = s.lattice.points_within(r)
        samples = {tuple(int(p) for p in o): s.at(tuple(o)) for o in offsets}
        recon, residue = reconstruct_diff_lowfreq(samples, r, s.lattice, dom)
        assert np.allclose(recon.values, truth.values, atol=1e-10)
        assert residue < 1e-10

    def test_radius_must_be_positive(self, small_domain):
        lattice = FrequencyLattice.for_domain(small_domain)
        with pytest.raises(DomainError):
            reconstruct_diff_lowfreq({}, 0.0, lattice, small_domain)


class TestSamplingPlan:
    def test_small_radius_grows_to_the_first_shell(self, small_domain):
        lattice = FrequencyLattice.for_domain(small_domain)
        plan = sampling_plan(4.0, 2.0, 0.1 * lattice.dxi, lattice)
        assert plan.radius == lattice.dxi
        assert len(plan.offsets) == 7
        assert (0, 0, 0) in {tuple(int(p) for p in o) for o in plan.offsets}
        assert plan.rho == 2.0

    def test_large_radius_is_kept(self, small_domain):
        lattice = FrequencyLattice.for_domain(small_domain)
        plan = sampling_plan(100.0, 2.0, 2.5 * lattice.dxi, lattice)
        assert plan.radius == 2.5 * lattice.dxi
        assert len(plan.offsets) == len(lattice.points_within(2.5 * lattice.dxi)[0])

    def test_rho_is_raised_only_when_the_shell_is_out_of_reach(self, small_domain):
        lattice = FrequencyLattice.for_domain(small_domain)
        plan = sampling_plan(0.0, 0.1, 0.01, lattice)
        assert plan.rho == pytest.approx(SAMPLING_HEADROOM * 0.5 * lattice.dxi)
        for xi in plan.xis:
            make_theta_pair(0.0, plan.rho, xi)

    def test_without_minimum_only_the_origin_is_sampled(self, small_domain):
        lattice = FrequencyLattice.for_domain(small_domain)
        plan = sampling_plan(1.0, 1.0, 0.1, lattice, min_cells=0)
        assert plan.radius == 0.1
        assert [tuple(o) for o in plan.offsets] == [(0, 0, 0)]

    @pytest.mark.parametrize("rho,r,cells", [(0.0, 1.0, 1), (1.0, 0.0, 1), (1.0, 1.0, -1)])
    def test_rejects_bad_input(self, small_domain, rho, r, cells):
        lattice = FrequencyLattice.for_domain(small_domain)
        with pytest.raises(DomainError):
            sampling_plan(1.0, rho, r, lattice, min_cells=cells)
