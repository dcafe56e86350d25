"""Lattice Faddeev Green function, mu and the scattering amplitude h."""

import math

import numpy as np
import pytest

from errors import (
    ConfigurationError,
    IncompatibilityError,
    InvalidStateError,
    NoConvergenceError,
    SingularityError,
)
from faddeev import (
    FaddeevGreen,
    apply_green,
    green_reference,
    implied_c7,
    lemma31_ratio,
    faddeev_symbol,
    min_symbol_denominator,
    mu_l2_defect,
    psi_boundary,
    scattering_h,
    solve_mu,
    sup_mu_defect,
)
from geometry import build_domain, make_theta_pair
from potential import fourier_at, generate, zero_potential


class TestGreenReference:
    def test_value_off_axis(self):
        assert green_reference((0, 0, 0.5), 2.0, (0, 0, 1)).real == pytest.approx(-1 / (2 * math.pi))

    def test_parallel_to_omega_is_rho_free(self):
        a = green_reference((0, 0, 0.3), 1.0, (0, 0, 1))
        b = green_reference((0, 0, 0.3), 9.0, (0, 0, 1))
        assert a == pytest.approx(b)
        assert a.real == pytest.approx(-1 / (4 * math.pi * 0.3))

    def test_antiparallel_decays(self):
        value = green_reference((0, 0, -0.3), 2.0, (0, 0, 1))
        assert value.real == pytest.approx(-math.exp(-1.2) / (4 * math.pi * 0.3))

    def test_origin_is_singular(self):
        with pytest.raises(SingularityError):
            green_reference((0, 0, 0), 1.0, (0, 0, 1))


class TestLattice:
    def test_padding_too_small(self, small_domain):
        with pytest.raises(ConfigurationError):
            FaddeevGreen(small_domain, padding=1.5)

    def test_even_grid_covering_the_padding(self, small_domain):
        green = FaddeevGreen(small_domain, padding=4.0)
        assert green.size % 2 == 0
        assert green.period >= 4.0 * 2 * small_domain.half_width - 1e-12

    def test_symbol_denominator_stays_away_from_zero(self, domain12):
        green = FaddeevGreen(domain12)
        for k in (np.array([0, -3j, 0]), make_theta_pair(1.0, 2.0, (1.0, 0, 0)).k):
            low = min_symbol_denominator(k, green)
            assert 0 < low < math.inf

    def test_apply_is_linear(self, domain12, green12, rng):
        k = np.array([0.0, -2j, 0.0])
        f1 = rng.standard_normal(domain12.shape)
        f2 = rng.standard_normal(domain12.shape)
        lhs = apply_green(k, 2.0 * f1 - 3.0 * f2, green12)
        rhs = 2.0 * apply_green(k, f1, green12) - 3.0 * apply_green(k, f2, green12)
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_symbol_at_the_shifted_origin(self, green12):
        k = make_theta_pair(1.0, 2.0, (1.0, 0, 0)).k
        shift = green12.shifts(k)[0]
        symbol = faddeev_symbol(k, green12, shift)
        assert symbol.shape == (green12.size,) * 3
        assert np.all(np.isfinite(symbol))
        expected = -1.0 / (shift @ shift + 2.0 * (k @ shift))
        assert symbol[0, 0, 0] == pytest.approx(expected)

    def test_zero_source(self, domain12, green12):
        assert not np.any(apply_green(np.array([0, -1j, 0]), np.zeros(domain12.shape), green12))

    def test_wrong_field_shape(self, green12):
        with pytest.raises(IncompatibilityError):
            apply_green(np.array([0, -1j, 0]), np.zeros((3, 3, 3)), green12)


def _direct_sum_error(domain, padding):
    """Relative mismatch of the lattice convolution against direct summation."""
    green = FaddeevGreen(domain, padding=padding)
    rho, omega = 2.0, np.array([0.0, -1.0, 0.0])
    k = 1j * rho * omega
    x1, x2, x3 = domain.mesh()
    c = domain.axis[domain.n // 2]
    r2 = (x1 - c) ** 2 + (x2 - c) ** 2 + (x3 - c) ** 2
    source = np.where(r2 <= (4 * domain.h) ** 2, np.exp(-0.5 * r2 / (1.5 * domain.h) ** 2), 0.0)
    lattice = apply_green(k, source, green)

    points = np.stack([x1.ravel(), x2.ravel(), x3.ravel()], axis=1)
    src = np.flatnonzero(source.ravel())
    dist = np.sqrt(r2.ravel())
    far = np.flatnonzero((dist >= 8 * domain.h) & (dist <= 11 * domain.h))
    d = points[far][:, None, :] - points[src][None, :, :]
    r = np.linalg.norm(d, axis=-1)
    kernel = -np.exp(rho * (d @ omega - r)) / (4 * math.pi * r)
    assert kernel[0, 0] == pytest.approx(green_reference(d[0, 0], rho, omega).real)
    direct = kernel @ source.ravel()[src] * domain.cell_volume
    err = np.linalg.norm(lattice.ravel()[far] - direct) / np.linalg.norm(direct)
    return float(err)


def test_lattice_green_matches_direct_sum():
    dom = build_domain(0.5, 16)
    coarse = _direct_sum_error(dom, 4.0)
    fine = _direct_sum_error(dom, 8.0)
    assert coarse < 0.12
    assert fine < coarse


class TestMu:
    def test_free_potential(self, domain12, green12):
        pair = make_theta_pair(1.0, 2.0, np.zeros(3))
        state = solve_mu(zero_potential(domain12), pair.k, green12)
        assert state.iterations == 1
        assert np.array_equal(state.mu, np.ones(domain12.shape))
        assert scattering_h(zero_potential(domain12), state, pair) == 0

    def test_converges_with_contraction_below_one(self, bump, green12):
        state = solve_mu(bump, make_theta_pair(1.0, 2.0, (1.0, 0, 0)).k, green12)
        assert state.converged
        assert 0 <= state.contraction_estimate < 1
        assert mu_l2_defect(state) <= state.neumann_bound() * (1 + 1e-6)
        assert sup_mu_defect(state) > 0
        assert lemma31_ratio(state, bump.linf_norm) > 0
        assert 0 < implied_c7(state, bump.linf_norm) < math.inf

    def test_strong_potential_does_not_converge(self, domain12, green12):
        v = generate("cosine_bump", {"amplitude": 400.0}, 0, domain12)
        with pytest.raises(NoConvergenceError) as info:
            solve_mu(v, np.array([0.0, -0.5j, 0.0]), green12, max_iterations=50)
        assert info.value.k_modulus == pytest.approx(0.5)

    def test_defect_decays_like_inverse_modulus(self):
        dom = build_domain(0.5, 16)
        green = FaddeevGreen(dom)
        v = generate("cosine_bump", {"amplitude": 1.0, "radius": 0.35}, 0, dom)
        rhos = np.array([4.0, 8.0, 16.0, 32.0])
        defects = [mu_l2_defect(solve_mu(v, np.array([0.0, -1j * r, 0.0]), green)) for r in rhos]
        slope = np.polyfit(np.log(rhos), np.log(defects), 1)[0]
        assert slope == pytest.approx(-1.0, abs=0.3)

    def test_conjugate_symmetry(self, bump, green12):
        k = make_theta_pair(1.0, 1.5, (1.0, 0, 0)).k
        a = solve_mu(bump, k, green12)
        b = solve_mu(bump, -np.conj(k), green12)
        assert np.allclose(b.mu, np.conj(a.mu), atol=1e-9)

    def test_unconverged_state_is_refused(self, bump, green12):
        state = solve_mu(bump, np.array([0.0, -2j, 0.0]), green12)
        stale = type(state)(state.domain, state.k, state.mu, state.mu_boundary,
                            state.iterations, state.contraction_estimate, False)
        with pytest.raises(InvalidStateError):
            stale.require_converged()

    def test_grid_mismatch(self, small_domain, green12):
        with pytest.raises(IncompatibilityError):
            solve_mu(zero_potential(small_domain), np.array([0, -1j, 0]), green12)


class TestScattering:
    def test_born_correction_is_quadratic(self, domain12, green12):
        pair = make_theta_pair(1.0, 2.0, (1.0, 0.0, 0.0))
        gaps = []
        for amplitude in (0.05, 0.1):
            v = generate("cosine_bump", {"amplitude": amplitude}, 0, domain12)
            h = scattering_h(v, solve_mu(v, pair.k, green12), pair)
            gaps.append(abs(h - fourier_at(v, pair.xi)))
        assert gaps[1] / gaps[0] == pytest.approx(4.0, abs=0.5)

    def test_h_needs_the_matching_state(self, bump, green12):
        pair = make_theta_pair(1.0, 2.0, (1.0, 0.0, 0.0))
        other = solve_mu(bump, -pair.l, green12)
        with pytest.raises(IncompatibilityError):
            scattering_h(bump, other, pair)

    def test_psi_boundary_is_log_scaled(self, bump, green12, domain12):
        pair = make_theta_pair(1.0, 2.0, np.zeros(3))
        state = solve_mu(bump, pair.k, green12)
        log_scale, values = psi_boundary(state)
        assert log_scale == pytest.approx(2.0 * domain12.L)
        assert values.shape == (domain12.num_boundary,)
        assert np.max(np.abs(values)) <= np.max(np.abs(state.mu_boundary)) * (1 + 1e-12)

    def test_h_under_conjugate_reflection(self, bump, green12):
        pair = make_theta_pair(1.0, 2.0, (1.0, 0.0, 0.0))
        ref = pair.conjugate_reflection()
        h = scattering_h(bump, solve_mu(bump, pair.k, green12), pair)
        h_ref = scattering_h(bump, solve_mu(bump, ref.k, green12), ref)
        assert abs(h_ref - np.conj(h)) <= 1e-6 * abs(h)
