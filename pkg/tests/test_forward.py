"""Dirichlet solver, eigenvalue guard, DtN map and delta."""

import math

import numpy as np
import pytest

from errors import ConfigurationError, IncompatibilityError, NearEigenvalueError
from forward import (
    DirichletSolver,
    DtnMap,
    check_not_eigenvalue,
    delta_norm,
    discrete_dirichlet_eigenvalue,
    dtn_map,
    interior_operator,
    solve_dirichlet,
)
from geometry import build_domain
from potential import generate


def _harmonic(p):
    return np.exp(p[:, 0]) * np.cos(p[:, 1])


def _harmonic_normal_derivative(p, normals):
    grad = np.stack([np.exp(p[:, 0]) * np.cos(p[:, 1]),
                     -np.exp(p[:, 0]) * np.sin(p[:, 1]),
                     np.zeros(len(p))], axis=1)
    return np.einsum("ij,ij->i", grad, normals)


@pytest.fixture(scope="module")
def free_dtn(small_domain):
    return dtn_map(small_domain, None, 0.0)


class TestOperator:
    def test_symmetric(self, small_domain):
        op = interior_operator(small_domain, None, 1.5)
        assert abs(op - op.T).max() == 0.0

    def test_potential_and_energy_enter_the_diagonal(self, domain12, bump):
        base = interior_operator(domain12, None, 0.0)
        shifted = interior_operator(domain12, bump, 2.0)
        diag = (shifted - base).diagonal()
        assert np.allclose(diag, bump.values.ravel() - 2.0)


class TestEigenvalueGuard:
    def test_negative_energy_is_coercive(self, small_domain):
        assert check_not_eigenvalue(small_domain, None, -5.0) >= 5.0

    def test_margin_at_zero_is_first_eigenvalue(self, small_domain):
        lam = discrete_dirichlet_eigenvalue(small_domain)
        assert check_not_eigenvalue(small_domain, None, 0.0) == pytest.approx(lam, rel=1e-6)
        assert lam == pytest.approx(3 * math.pi ** 2, rel=0.02)

    def test_exact_eigenvalue_is_rejected(self, small_domain):
        lam = discrete_dirichlet_eigenvalue(small_domain)
        with pytest.raises(NearEigenvalueError) as info:
            check_not_eigenvalue(small_domain, None, lam)
        assert info.value.margin < info.value.threshold

    def test_report_only_mode(self, small_domain):
        lam = discrete_dirichlet_eigenvalue(small_domain)
        assert check_not_eigenvalue(small_domain, None, lam, raise_on_failure=False) < 1e-4

    def test_solver_runs_the_guard(self, small_domain):
        with pytest.raises(NearEigenvalueError):
            DirichletSolver(small_domain, None, discrete_dirichlet_eigenvalue(small_domain))


class TestDirichletSolver:
    def test_linear_data_is_reproduced(self, small_domain):
        x1, x2, x3 = small_domain.mesh()
        p = small_domain.boundary_points
        assert np.allclose(solve_dirichlet(small_domain, None, 0.0, p[:, 2]), x3, atol=1e-12)

    def test_bilinear_data_is_reproduced(self, small_domain):
        x1, x2, x3 = small_domain.mesh()
        p = small_domain.boundary_points
        u = solve_dirichlet(small_domain, None, 0.0, p[:, 0] * p[:, 1])
        assert np.allclose(u, x1 * x2, atol=1e-12)

    def test_zero_data(self, small_domain):
        u = solve_dirichlet(small_domain, None, 0.0, np.zeros(small_domain.num_boundary))
        assert not np.any(u)

    def test_complex_data_is_linear(self, domain12, bump, rng):
        solver = DirichletSolver(domain12, bump, 1.0)
        a = rng.standard_normal(domain12.num_boundary)
        b = rng.standard_normal(domain12.num_boundary)
        assert np.allclose(solver.solve(a + 1j * b), solver.solve(a) + 1j * solver.solve(b))

    def test_wrong_data_length(self, small_domain):
        solver = DirichletSolver(small_domain, None, 0.0)
        with pytest.raises(IncompatibilityError):
            solver.solve(np.zeros(7))


class TestDtnMap:
    def test_linear_trace_gives_normal_component(self, small_domain, free_dtn):
        p = small_domain.boundary_points
        flux = free_dtn.apply(p[:, 2])
        assert np.allclose(flux, small_domain.boundary_normals[:, 2], atol=1e-9)

    def test_constant_has_no_flux(self, small_domain, free_dtn):
        assert np.max(np.abs(free_dtn.apply(np.ones(small_domain.num_boundary)))) < 1e-8

    def test_matches_neumann_data(self, domain12, bump, rng):
        solver = DirichletSolver(domain12, bump, 1.0)
        phi = dtn_map(domain12, bump, 1.0, solver=solver)
        g = rng.standard_normal(domain12.num_boundary)
        assert np.allclose(phi.apply(g), solver.neumann_data(g), atol=1e-8)
        assert np.allclose(phi.matrix() @ g, phi.apply(g))

    def test_green_form_is_symmetric(self, domain12):
        dom = domain12
        phi = dtn_map(dom, None, 0.0)
        w = dom.boundary_weights
        p = dom.boundary_points
        g1, g2 = p[:, 0], _harmonic(p)
        lhs = np.sum(w * g1 * phi.apply(g2))
        rhs = np.sum(w * phi.apply(g1) * g2)
        assert lhs == pytest.approx(rhs, rel=0.02)

    def test_second_order_convergence(self):
        errors = []
        for n in (8, 16):
            dom = build_domain(0.5, n)
            p = dom.boundary_points
            flux = dtn_map(dom, None, 0.0).apply(_harmonic(p))
            exact = _harmonic_normal_derivative(p, dom.boundary_normals)
            errors.append(math.sqrt(np.sum(dom.boundary_weights * (flux - exact) ** 2)))
        assert errors[1] < errors[0] / 2

    def test_threads_give_identical_kernels(self, domain12, bump):
        a = dtn_map(domain12, bump, 1.0, workers=1, chunk=100)
        b = dtn_map(domain12, bump, 1.0, workers=3, chunk=100)
        assert np.array_equal(a.kernel, b.kernel)
        assert a.checksum() == b.checksum()

    def test_file_round_trip(self, tmp_path, small_domain, free_dtn):
        path = free_dtn.save(tmp_path / "phi.dtn")
        assert path.read_bytes().startswith(b"GELFAND-DTN v1 n=10 ")
        loaded = DtnMap.load(path, small_domain)
        assert np.array_equal(loaded.kernel, free_dtn.kernel)
        assert loaded.E == free_dtn.E

    def test_corrupted_file(self, tmp_path, small_domain, free_dtn):
        path = free_dtn.save(tmp_path / "phi.dtn")
        raw = bytearray(path.read_bytes())
        raw[-1] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ConfigurationError):
            DtnMap.load(path, small_domain)

    def test_file_for_other_grid(self, tmp_path, domain12, free_dtn):
        path = free_dtn.save(tmp_path / "phi.dtn")
        with pytest.raises(IncompatibilityError):
            DtnMap.load(path, domain12)


class TestDelta:
    def test_identical_maps(self, free_dtn):
        assert delta_norm(free_dtn, free_dtn) == 0.0

    def test_symmetric_and_triangle(self, born_dtn, domain12):
        phi1, phi2 = born_dtn
        phi0 = dtn_map(domain12, None, 2.0)
        d12 = delta_norm(phi1, phi2)
        assert d12 > 0
        assert d12 == pytest.approx(delta_norm(phi2, phi1))
        assert d12 <= delta_norm(phi1, phi0) + delta_norm(phi0, phi2) + 1e-12

    def test_rank_one_perturbation(self, small_domain, free_dtn, rng):
        u = rng.uniform(0.0, 2.0, small_domain.num_boundary)
        shifted = DtnMap(small_domain, free_dtn.E, free_dtn.kernel + u[:, None],
                         free_dtn.quadrature)
        expected = u.max() * free_dtn.quadrature.sum()
        assert delta_norm(free_dtn, shifted) == pytest.approx(expected, rel=1e-10)

    def test_energies_must_match(self, small_domain, free_dtn):
        other = dtn_map(small_domain, None, -1.0)
        with pytest.raises(IncompatibilityError):
            delta_norm(free_dtn, other)

    def test_monotone_in_amplitude(self, domain12, bump):
        extra = generate("gaussian_bump", {"amplitude": 1.0, "width": 0.1}, 0, domain12)
        phi0 = dtn_map(domain12, bump, 1.0)
        deltas = [delta_norm(phi0, dtn_map(domain12, bump + extra.scaled(eps), 1.0))
                  for eps in (0.0, 0.25, 0.5, 1.0)]
        assert deltas[0] == 0.0
        assert all(b >= a - 1e-8 for a, b in zip(deltas, deltas[1:]))
