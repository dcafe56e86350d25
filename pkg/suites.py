"""Named verification suites behind ``verify --suite``.

Each check is a small function returning ``(passed, detail)``. Checks are
registered per suite with the ``check`` decorator and run in registration
order; a lab error inside a check counts as a failure, not a crash.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Tuple

import numpy as np

import harness
from errors import DomainError, GelfandError, NearEigenvalueError, NoConvergenceError
from estimator import (
    EstimatorParams,
    choose_r_l2,
    choose_rho,
    intermediate_l2,
    q_l2,
    q_linf,
    rhs_theorem1,
    rhs_theorem2,
    split_error,
)
from faddeev import (
    FaddeevGreen,
    green_reference,
    lemma31_ratio,
    min_symbol_denominator,
    mu_l2_defect,
    scattering_h,
    solve_mu,
    sup_mu_defect,
)
from forward import (
    DirichletSolver,
    check_not_eigenvalue,
    delta_norm,
    discrete_dirichlet_eigenvalue,
    dtn_map,
)
from geometry import build_domain, make_theta_pair, max_xi_radius, momentum_modulus
from identity import hdiff_boundary, hdiff_volume, verify_lemma21, verify_lemma32
from potential import (
    fourier_at,
    fourier_transform,
    from_function,
    generate,
    l1_tail_bound,
    l2_tail_bound,
    norm,
    tail_l1,
    tail_l2,
    zero_potential,
)
from run_config import DomainConfig, SweepConfig, default_config

logger = logging.getLogger(__name__)

CheckFn = Callable[[], Tuple[bool, str]]

SUITES: Dict[str, List[Tuple[str, CheckFn]]] = {
    name: [] for name in ("trivial", "geometry", "potential", "forward", "faddeev",
                          "identity", "estimator", "acceptance")
}


def check(*suites: str):
    """Register the decorated function in each named suite."""
    def decorator(fn: CheckFn) -> CheckFn:
        for suite in suites:
            SUITES[suite].append((fn.__name__, fn))
        return fn
    return decorator


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


def run_suite(name: str) -> List[CheckResult]:
    if name not in SUITES:
        raise DomainError(f"unknown suite {name!r}; expected one of {sorted(SUITES)}")
    results = []
    for check_name, fn in SUITES[name]:
        started = time.perf_counter()
        try:
            passed, detail = fn()
        except GelfandError as exc:
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        elapsed = time.perf_counter() - started
        results.append(CheckResult(check_name, bool(passed), detail, elapsed))
        level = logging.INFO if passed else logging.WARNING
        logger.log(level, "%s.%s %s: %s", name, check_name, "pass" if passed else "FAIL", detail)
    return results


def _close(value: float, expected: float, rel: float) -> bool:
    return abs(value - expected) <= rel * max(abs(expected), 1e-300)


def _bump(domain, amplitude=0.3, radius=None):
    params = {"amplitude": amplitude}
    if radius is not None:
        params["radius"] = radius
    return generate("cosine_bump", params, 0, domain)


def _default_fixtures(domain) -> List[harness.Fixture]:
    """The built-in fixtures at unit scale."""
    return [harness.build_fixture(fx, domain, 1.0) for fx in default_config().fixtures]


# ---------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------
@check("trivial", "geometry")
def box_geometry() -> Tuple[bool, str]:
    d1 = build_domain(0.5, 16)
    d2 = build_domain(1.0, 8)
    ok = (_close(d1.L, math.sqrt(3) / 2, 1e-12) and _close(d1.volume, 1.0, 1e-12)
          and _close(d2.L, math.sqrt(3), 1e-12) and _close(d2.volume, 8.0, 1e-12))
    return ok, f"L={d1.L:.4f}, volume={d1.volume:g}; L={d2.L:.4f}, volume={d2.volume:g}"


@check("trivial", "geometry")
def xi_radius() -> Tuple[bool, str]:
    ok = _close(max_xi_radius(0, 1), 2.0, 1e-12) and _close(max_xi_radius(4, 3), 2 * math.sqrt(13), 1e-12)
    try:
        max_xi_radius(-1, 1)
        ok = False
    except DomainError:
        pass
    return ok, "radius 2, 2 sqrt(13) and E + rho^2 = 0 rejected"


@check("trivial", "geometry")
def theta_pair_invariants() -> Tuple[bool, str]:
    worst = 0.0
    for E, rho, xi in ((0.0, 1.0, (0, 0, 0)), (0.0, 1.0, (2.0, 0, 0)),
                       (2.5, 1.3, (1.0, 0.7, -0.4))):
        pair = make_theta_pair(E, rho, xi)
        worst = max(worst,
                    abs(pair.k @ pair.k - E), abs(pair.l @ pair.l - E),
                    float(np.max(np.abs((pair.k - pair.l) - np.asarray(xi)))),
                    abs(np.linalg.norm(pair.k.imag) - rho),
                    abs(momentum_modulus(pair) - math.sqrt(E + 2 * rho ** 2)))
    return worst < 1e-10, f"largest invariant defect {worst:.2e}"


# ---------------------------------------------------------------------
# potential
# ---------------------------------------------------------------------
@check("trivial", "potential")
def zero_spectrum() -> Tuple[bool, str]:
    dom = build_domain(0.5, 12)
    s = fourier_transform(zero_potential(dom))
    return not np.any(s.coefficients), "w = 0 gives a zero spectrum"


@check("trivial", "potential")
def hermitian_spectrum() -> Tuple[bool, str]:
    dom = build_domain(0.5, 12)
    w = generate("random_bandlimited", {"amplitude": 1.0, "modes": 2}, 7, dom)
    c = w.spectrum().coefficients
    defect = float(np.max(np.abs(c - np.conj(c[::-1, ::-1, ::-1]))))
    return defect < 1e-12 * float(np.max(np.abs(c))), f"conjugate symmetry defect {defect:.2e}"


@check("trivial", "potential")
def h0_equals_l2() -> Tuple[bool, str]:
    dom = build_domain(0.5, 12)
    w = _bump(dom)
    a, b = norm(w, "Hm", 0.0), norm(w, "L2")
    return _close(a, b, 1e-8), f"H^0 {a:.10g} vs L2 {b:.10g}"


@check("trivial", "potential")
def seeded_generator() -> Tuple[bool, str]:
    dom = build_domain(0.5, 12)
    a = generate("random_bandlimited", {"modes": 2}, 7, dom)
    b = generate("random_bandlimited", {"modes": 2}, 7, dom)
    peak = generate("cosine_bump", {"amplitude": 0.7}, 0, dom).linf_norm
    zero = generate("gaussian_bump", {"amplitude": 0.0}, 0, dom).linf_norm
    ok = np.array_equal(a.values, b.values) and _close(peak, 0.7, 1e-12) and zero == 0.0
    return ok, f"seed 7 reproducible, cosine peak {peak:g}, zero amplitude {zero:g}"


@check("potential")
def gaussian_transform() -> Tuple[bool, str]:
    dom = build_domain(7.0, 33)
    w = from_function(dom, lambda x1, x2, x3: np.exp(-0.5 * (x1 ** 2 + x2 ** 2 + x3 ** 2)), 0)
    s = w.spectrum()
    xi = s.lattice.xi_norm()
    near = xi <= 4.0
    exact = (2 * math.pi) ** -1.5 * np.exp(-0.5 * xi[near] ** 2)
    err = float(np.max(np.abs(s.coefficients[near] - exact)) / np.max(exact))
    return err < 1e-3, f"relative error {err:.2e} for |xi| <= 4"


# ---------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------
@check("trivial", "forward")
def linear_data_is_exact() -> Tuple[bool, str]:
    dom = build_domain(0.5, 10)
    solver = DirichletSolver(dom, None, 0.0)
    x1, x2, x3 = dom.mesh()
    p = dom.boundary_points
    err3 = float(np.max(np.abs(solver.solve(p[:, 2]) - x3)))
    err12 = float(np.max(np.abs(solver.solve(p[:, 0] * p[:, 1]) - x1 * x2)))
    zero = float(np.max(np.abs(solver.solve(np.zeros(dom.num_boundary)))))
    ok = err3 < 1e-10 and err12 < 1e-10 and zero == 0.0
    return ok, f"x3 error {err3:.1e}, x1 x2 error {err12:.1e}, zero data {zero:g}"


@check("trivial", "forward")
def constant_has_zero_flux() -> Tuple[bool, str]:
    dom = build_domain(0.5, 10)
    phi = dtn_map(dom, None, 0.0)
    flux = float(np.max(np.abs(phi.apply(np.ones(dom.num_boundary)))))
    same = delta_norm(phi, phi)
    return flux < 1e-8 and same == 0.0, f"|Phi 1| = {flux:.1e}, delta(Phi, Phi) = {same:g}"


@check("forward")
def eigenvalue_guard() -> Tuple[bool, str]:
    dom = build_domain(0.5, 10)
    lam = discrete_dirichlet_eigenvalue(dom)
    try:
        check_not_eigenvalue(dom, None, lam)
        hit = False
    except NearEigenvalueError:
        hit = True
    margin = check_not_eigenvalue(dom, None, -5.0)
    zero_margin = check_not_eigenvalue(dom, None, 0.0)
    ok = hit and margin >= 5.0 and _close(zero_margin, lam, 1e-6)
    return ok, f"lambda_1 = {lam:.4f} (continuum {3 * math.pi ** 2:.4f}), margin at E=-5 {margin:.3f}"


@check("forward")
def delta_monotone_in_amplitude() -> Tuple[bool, str]:
    dom = build_domain(0.5, 10)
    base = _bump(dom, 0.5)
    bump = generate("gaussian_bump", {"amplitude": 1.0, "width": 0.1}, 0, dom)
    phi0 = dtn_map(dom, base, 1.0)
    deltas = [delta_norm(phi0, dtn_map(dom, base + bump.scaled(eps), 1.0))
              for eps in (0.25, 0.5, 1.0)]
    ok = all(b >= a - 1e-8 for a, b in zip(deltas, deltas[1:]))
    return ok, "delta " + ", ".join(f"{d:.3e}" for d in deltas)


# ---------------------------------------------------------------------
# faddeev
# ---------------------------------------------------------------------
@check("trivial", "faddeev")
def free_mu_is_one() -> Tuple[bool, str]:
    dom = build_domain(0.5, 10)
    green = FaddeevGreen(dom)
    pair = make_theta_pair(1.0, 2.0, np.zeros(3))
    state = solve_mu(zero_potential(dom), pair.k, green)
    h = scattering_h(zero_potential(dom), state, pair)
    ok = state.iterations == 1 and float(np.max(np.abs(state.mu - 1))) == 0.0 and h == 0
    return ok, f"v = 0: mu = 1 after {state.iterations} iteration(s), h = {abs(h):g}"


@check("trivial", "faddeev")
def green_closed_form() -> Tuple[bool, str]:
    value = green_reference((0, 0, 0.5), 2.0, (0, 0, 1))
    along = green_reference((0, 0, 0.3), 5.0, (0, 0, 1))
    ok = _close(value.real, -1 / (2 * math.pi), 1e-12) and _close(along.real, -1 / (4 * math.pi * 0.3), 1e-12)
    return ok, f"g = {value.real:.6f} at |x| = 0.5"


@check("faddeev")
def symbol_stays_finite() -> Tuple[bool, str]:
    dom = build_domain(0.5, 12)
    green = FaddeevGreen(dom)
    k = np.array([0.0, -3.0j, 0.0])
    low = min_symbol_denominator(k, green)
    return low > 0 and math.isfinite(low), f"smallest |zeta^2 + 2 k.zeta| = {low:.3e}"


@check("faddeev")
def mu_defect_decays() -> Tuple[bool, str]:
    dom = build_domain(0.5, 16)
    green = FaddeevGreen(dom)
    v = generate("cosine_bump", {"amplitude": 1.0, "radius": 0.35}, 0, dom)
    rhos = np.array([4.0, 8.0, 16.0, 32.0])
    defects = []
    for rho in rhos:
        k = np.array([0.0, -1j * rho, 0.0])
        defects.append(mu_l2_defect(solve_mu(v, k, green)))
    slope = float(np.polyfit(np.log(rhos), np.log(defects), 1)[0])
    return abs(slope + 1.0) <= 0.3, f"log-log slope of ||mu - 1|| vs |k|: {slope:.3f}"


# ---------------------------------------------------------------------
# identity
# ---------------------------------------------------------------------
@check("trivial", "identity")
def equal_potentials() -> Tuple[bool, str]:
    dom = build_domain(0.5, 10)
    green = FaddeevGreen(dom)
    v = _bump(dom)
    phi = dtn_map(dom, v, 2.0)
    pair = make_theta_pair(2.0, 1.0, np.zeros(3))
    s1 = solve_mu(v, -pair.l, green)
    s2 = solve_mu(v, pair.k, green)
    vol = hdiff_volume(v, v, s1, s2, pair)
    bnd = hdiff_boundary(phi, phi, s1, s2, pair)
    rec = verify_lemma21(v, v, pair, 0.0)
    ok = vol == 0 and bnd == 0 and rec.lhs == 0.0
    return ok, "v1 = v2 gives zero on both forms"


@check("identity")
def volume_matches_boundary() -> Tuple[bool, str]:
    mismatches = []
    for n in (8, 12, 16):
        dom = build_domain(0.5, n)
        green = FaddeevGreen(dom)
        v1 = _bump(dom, 0.2)
        v2 = v1 + generate("gaussian_bump", {"amplitude": 0.1, "width": 0.1}, 0, dom)
        check_result = verify_lemma32(v1, v2, make_theta_pair(2.0, 1.0, np.zeros(3)), green,
                                      dtn_map(dom, v1, 2.0), dtn_map(dom, v2, 2.0))
        mismatches.append(check_result.residual_identity)
    ok = mismatches[-1] < mismatches[0] and mismatches[-1] < 0.1
    return ok, "mismatch " + ", ".join(f"{m:.3e}" for m in mismatches)


# ---------------------------------------------------------------------
# estimator
# ---------------------------------------------------------------------
@check("trivial", "estimator")
def closed_form_constants() -> Tuple[bool, str]:
    rho = choose_rho(0.5, 0.05, math.sqrt(3) / 2).rho
    ok = (_close(q_l2(1.0), 0.06220, 1e-3) and _close(q_linf(1.0, 1.0), 0.49237, 1e-4)
          and _close(rho, 0.90514, 1e-4) and choose_rho(1.0, 0.1, 1.0).degenerate)
    r, q = choose_r_l2(0.0, 1.0, 0.0, 1.0)
    ok = ok and _close(r, q, 1e-12)
    return ok, f"q = {q_l2(1.0):.5f}, q~ = {q_linf(1.0, 1.0):.5f}, rho = {rho:.5f}"


@check("trivial", "estimator")
def theorem_substitutions() -> Tuple[bool, str]:
    rhs1 = rhs_theorem1(EstimatorParams(1.0, 1.0, 0.01, 1.0, 1.0, 0.0, 3.0, 1.0))
    rhs2 = rhs_theorem2(EstimatorParams(1.0, 1.0, 0.01, 0.0, 0.0, 1.0, 4.0, 1.0))
    zero = intermediate_l2(1.0, 1.0, 0.0, 0.0, 0.0, 3.0, 1.0, 1.0).value
    ok = _close(rhs1, 16.01, 1e-12) and _close(rhs2, 1.01, 1e-12) and zero == 0.0
    return ok, f"rhs1 = {rhs1:g}, rhs2 = {rhs2:g}"


@check("trivial", "estimator")
def split_partitions_norm() -> Tuple[bool, str]:
    dom = build_domain(0.5, 12)
    s = generate("random_bandlimited", {"modes": 2}, 3, dom).spectrum()
    total = math.sqrt(float(np.sum(np.abs(s.coefficients) ** 2)) * s.lattice.cell_volume)
    worst = 0.0
    for r in (0.5, 5.0, 20.0, 1e6):
        low, high = split_error(s, r, "L2")
        worst = max(worst, abs(math.hypot(low, high) - total) / total)
    return worst < 1e-12, f"largest partition defect {worst:.1e}"


# ---------------------------------------------------------------------
# acceptance (desk-scale studies)
# ---------------------------------------------------------------------
@check("acceptance")
def forward_order() -> Tuple[bool, str]:
    steps, errors = [], []
    for n in (16, 24, 32):
        dom = build_domain(0.5, n)
        p, nu = dom.boundary_points, dom.boundary_normals
        # exp(x3) cos(x1) is harmonic; its flux is known in closed form.
        g = np.exp(p[:, 2]) * np.cos(p[:, 0])
        grad = np.stack([-np.exp(p[:, 2]) * np.sin(p[:, 0]), np.zeros(len(g)), g], axis=1)
        flux = dtn_map(dom, None, 0.0, workers=4).apply(g)
        steps.append(dom.h)
        errors.append(float(np.max(np.abs(flux - np.sum(grad * nu, axis=1)))))
    order = float(np.polyfit(np.log(steps), np.log(errors), 1)[0])
    return order >= 1.8, ("max flux error " + ", ".join(f"{e:.2e}" for e in errors)
                          + f", observed order {order:.2f}")


@check("acceptance")
def eigenvalue_oracle() -> Tuple[bool, str]:
    dom = build_domain(0.5, 32)
    measured = check_not_eigenvalue(dom, None, 0.0)
    continuum = 3.0 * math.pi ** 2
    ok = _close(measured, continuum, 0.05) and _close(measured, discrete_dirichlet_eigenvalue(dom), 1e-6)
    return ok, f"lambda_1 = {measured:.4f} vs 3 pi^2 = {continuum:.4f}"


def _green_direct_error(n: int, padding: float, rho: float) -> float:
    """Lattice convolution against a direct sum of the closed-form kernel."""
    dom = build_domain(0.5, n)
    green = FaddeevGreen(dom, padding=padding)
    omega = np.array([0.0, -1.0, 0.0])
    x1, x2, x3 = dom.mesh()
    c = dom.axis[n // 2]
    r2 = (x1 - c) ** 2 + (x2 - c) ** 2 + (x3 - c) ** 2
    source = np.where(r2 <= (4 * dom.h) ** 2, np.exp(-0.5 * r2 / (1.5 * dom.h) ** 2), 0.0)
    lattice = green.apply(1j * rho * omega, source)

    points = np.stack([x1.ravel(), x2.ravel(), x3.ravel()], axis=1)
    src = np.flatnonzero(source.ravel())
    dist = np.sqrt(r2.ravel())
    # At least three cells beyond the edge of the source.
    far = np.flatnonzero((dist >= 8 * dom.h) & (dist <= 11 * dom.h))
    d = points[far][:, None, :] - points[src][None, :, :]
    r = np.linalg.norm(d, axis=-1)
    kernel = -np.exp(rho * (d @ omega - r)) / (4 * math.pi * r)
    direct = kernel @ source.ravel()[src] * dom.cell_volume
    return float(np.linalg.norm(lattice.ravel()[far] - direct) / np.linalg.norm(direct))


@check("acceptance")
def green_oracle() -> Tuple[bool, str]:
    ok = True
    parts = []
    for rho in (1.0, 2.0, 4.0):
        coarse = _green_direct_error(16, 4.0, rho)
        fine = _green_direct_error(20, 6.0, rho)
        ok = ok and fine < coarse and fine <= 0.02
        parts.append(f"rho={rho:g}: {coarse:.2e} -> {fine:.2e}")
    return ok, "; ".join(parts)


@check("acceptance")
def scattering_limit() -> Tuple[bool, str]:
    dom = build_domain(0.5, 12)
    green = FaddeevGreen(dom)
    v = _bump(dom, 0.2)
    rho0 = 2.0
    monotone = True
    worst = 0.0
    for xi in ((0, 0, 0), (1.0, 0, 0), (0, 1.0, 0), (0, 0, 1.5), (1.0, 1.0, 0)):
        vhat = fourier_at(v, xi)
        errors = []
        for rho in (rho0, 2 * rho0, 4 * rho0):
            pair = make_theta_pair(1.0, rho, xi)
            errors.append(abs(scattering_h(v, solve_mu(v, pair.k, green), pair) - vhat))
        monotone = monotone and all(b < a for a, b in zip(errors, errors[1:]))
        worst = max(worst, errors[-1] / abs(vhat))
    return monotone and worst <= 0.05, f"largest relative |h - v^| at 4 rho0: {worst:.2e}"


@check("acceptance")
def tail_bounds() -> Tuple[bool, str]:
    dom = build_domain(0.5, 16)
    fixtures = (_bump(dom, 0.5),
                generate("gaussian_bump", {"amplitude": 0.3, "width": 0.08}, 0, dom),
                generate("random_bandlimited", {"modes": 2}, 3, dom))
    grid_factor = 1.05
    worst_l2 = worst_l1 = oracle = 0.0
    for w in fixtures:
        s = w.spectrum()
        for m in (4.0, 5.0):
            n_hm, n_wm = norm(w, "Hm", m), norm(w, "Wm", m)
            for r in (5.0, 10.0, 20.0):
                worst_l2 = max(worst_l2, tail_l2(s, r) / l2_tail_bound(n_hm, m, r))
                worst_l1 = max(worst_l1, tail_l1(s, r, m) / l1_tail_bound(n_wm, m, r))
        peak = float(np.max(np.abs(s.coefficients)))
        for offset in ((0, 0, 0), (1, 0, 0), (2, -1, 0), (3, 2, 1)):
            direct = fourier_at(w, np.asarray(offset) * s.lattice.dxi)
            oracle = max(oracle, abs(s.at(offset) - direct) / peak)
    ok = worst_l2 <= grid_factor and worst_l1 <= grid_factor and oracle <= 0.01
    return ok, (f"tail/bound L2 {worst_l2:.3f}, L1 {worst_l1:.3f}; "
                f"FFT vs direct quadrature {oracle:.1e}")


@check("acceptance")
def residual_scaling() -> Tuple[bool, str]:
    dom = build_domain(0.5, 12)
    green = FaddeevGreen(dom)
    v1 = _bump(dom, 0.3)
    v2 = v1 + generate("gaussian_bump", {"amplitude": 0.2, "width": 0.1}, 0, dom)
    E = 1.0
    xi = np.array([1.0, 0.0, 0.0])
    target = fourier_at(v2 - v1, xi)
    levels, scattering, volume = [], [], []
    for rho in (2.0, 4.0, 8.0, 16.0):
        pair = make_theta_pair(E, rho, xi)
        s2 = solve_mu(v2, pair.k, green)
        h1 = scattering_h(v1, solve_mu(v1, pair.k, green), pair)
        h2 = scattering_h(v2, s2, pair)
        levels.append(E + rho ** 2)
        scattering.append(abs(target - (h2 - h1)))
        volume.append(abs(target - hdiff_volume(v1, v2, solve_mu(v1, -pair.l, green), s2, pair)))
    slopes = [float(np.polyfit(np.log(levels), np.log(res), 1)[0]) for res in (scattering, volume)]
    ok = all(abs(s + 0.5) <= 0.2 for s in slopes)
    return ok, (f"log-log slope vs E + rho^2: h difference {slopes[0]:.3f}, "
                f"volume form {slopes[1]:.3f}")


@check("acceptance")
def mu_defect_decays_per_fixture() -> Tuple[bool, str]:
    rhos = np.array([4.0, 8.0, 16.0, 24.0])
    dom = build_domain(0.5, 32)
    green = FaddeevGreen(dom)
    ok = True
    parts = []
    ratios = []
    for fx in _default_fixtures(dom):
        try:
            states = [solve_mu(fx.v2, np.array([0.0, -1j * rho, 0.0]), green) for rho in rhos]
        except NoConvergenceError as exc:
            ok = False
            parts.append(f"{fx.id}: {exc}")
            continue
        defects = [sup_mu_defect(state) for state in states]
        slope = float(np.polyfit(np.log(rhos), np.log(defects), 1)[0])
        ok = ok and abs(slope + 1.0) <= 0.3
        ratios.append([lemma31_ratio(state, fx.N) for state in states])
        parts.append(f"{fx.id} slope {slope:.3f}")
    if ratios:
        # One c5 for every fixture, fitted at the smallest |k|.
        c5 = 1.5 * max(levels[0] for levels in ratios)
        ok = ok and all(level <= c5 for levels in ratios for level in levels)
        parts.append(f"c5 = {c5:.3f}")
    return ok, "sup |mu - 1| vs |k|: " + ", ".join(parts)


@check("acceptance")
def identity_refinement() -> Tuple[bool, str]:
    E = 4.0
    pair = make_theta_pair(E, 2.0, np.zeros(3))
    mismatches: Dict[str, List[float]] = {}
    for n in (16, 24, 32):
        dom = build_domain(0.5, n)
        green = FaddeevGreen(dom)
        for fx in _default_fixtures(dom):
            result = verify_lemma32(fx.v1, fx.v2, pair, green,
                                    dtn_map(dom, fx.v1, E, workers=4),
                                    dtn_map(dom, fx.v2, E, workers=4))
            mismatches.setdefault(fx.id, []).append(result.residual_identity)
    ok = all(all(b < a for a, b in zip(m, m[1:])) and m[1] <= 0.1 for m in mismatches.values())
    return ok, "; ".join(f"{name} " + ", ".join(f"{m:.3e}" for m in values)
                         for name, values in mismatches.items())


@check("acceptance")
def reconstruction_improves_with_energy() -> Tuple[bool, str]:
    base = default_config()
    cfg = replace(base, domain=DomainConfig(n=16), fixtures=base.fixtures[:1], reconstruct=True,
                  sweep=SweepConfig(energies=(1.0, 4.0, 16.0), taus=(0.6,), ms_l2=(2.0,),
                                    ms_linf=()))
    rows = harness.sweep(cfg)
    if not all(r.ok for r in rows):
        return False, "; ".join(f"E={r.E:g}: {r.note}" for r in rows if not r.ok)
    if any(r.reconstruction_error is None for r in rows):
        return False, "; ".join(f"E={r.E:g}: no reconstruction ({r.note})"
                                for r in rows if r.reconstruction_error is None)
    errors = [r.reconstruction_error for r in rows]
    ok = all(b <= 1.1 * a for a, b in zip(errors, errors[1:]))
    return ok, ", ".join(f"E={r.E:g}: {r.reconstruction_error:.3e} "
                         f"(r={r.r_sample:.3g}, rho={r.rho_sample:.3g}, {r.xi_samples} samples)"
                         for r in rows)


@check("acceptance")
def calibrated_holdout() -> Tuple[bool, str]:
    base = default_config()
    grid = dict(energies=(1.0, 4.0, 16.0), taus=(0.3, 0.6, 0.9), ms_l2=(2.0, 4.0),
                ms_linf=(3.5, 5.0))
    training = replace(base, domain=DomainConfig(n=12), reconstruct=False, seed=0,
                       sweep=SweepConfig(scales=(0.5, 1.0, 1.5), **grid))
    holdout = replace(training, seed=7, sweep=SweepConfig(scales=(0.75, 1.25), **grid))
    constants, _ = harness.calibrate(training, harness.sweep(training))
    dom = build_domain(holdout.domain.half_width, holdout.domain.n)
    rates = harness.evaluate_holdout(harness.sweep(holdout), constants, dom.L)
    shares = ("theorem1", "theorem2", "lemma21", "lemma32")
    ok = rates["rows"] >= 200 and all(rates[key] == 1.0 for key in shares)
    return ok, f"{rates['rows']:.0f} holdout rows: " + ", ".join(
        f"{key} {rates[key]:.1%}" for key in shares)
