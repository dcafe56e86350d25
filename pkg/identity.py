"""Volume and boundary forms of h2 - h1 and the lemma checks built on them."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from errors import IncompatibilityError, InfeasibleFrequencyError
from faddeev import (
    MU_MAX_ITERATIONS,
    MU_TOLERANCE,
    FaddeevGreen,
    FaddeevState,
    lemma31_ratio,
    psi_boundary,
    scattering_h,
    solve_mu,
)
from forward import DtnMap, delta_norm
from geometry import MomentumPair
from potential import FOURIER_SCALE, Potential, fourier_at, norm

logger = logging.getLogger(__name__)

# Relative floor of the identity mismatch denominator.
MISMATCH_FLOOR = 1e-14
# exp() arguments above this are reported as infinite bounds.
LOG_OVERFLOW = math.log(1e300)


def _exp_times(log_factor: float, value: float) -> float:
    """exp(log_factor) * value without overflow faults."""
    if value == 0.0:
        return 0.0
    log_total = log_factor + math.log(abs(value))
    if log_total > LOG_OVERFLOW:
        return math.inf
    return math.copysign(math.exp(log_total), value)


def _require(state: FaddeevState, k: np.ndarray, label: str):
    state.require_converged()
    if not np.allclose(state.k, k, rtol=1e-12, atol=1e-12):
        raise IncompatibilityError(f"{label} was solved at k={state.k}, expected {k}")


def volume_form(difference: np.ndarray, s1: FaddeevState, s2: FaddeevState,
                pair: MomentumPair) -> complex:
    """(2 pi)^-3 * integral exp(i xi x) mu1(x, -l) d(x) mu2(x, k) dx for a grid field d."""
    dom = s2.domain
    ax = dom.axis
    e = [np.exp(1j * pair.xi[a] * ax) for a in range(3)]
    integrand = difference * s1.mu * s2.mu
    total = np.einsum("ijk,i,j,k->", integrand, e[0], e[1], e[2])
    return complex(FOURIER_SCALE * dom.cell_volume * total)


def hdiff_volume(v1: Potential, v2: Potential, s1: FaddeevState, s2: FaddeevState,
                 pair: MomentumPair) -> complex:
    """(2 pi)^-3 * integral psi1(x, -l) (v2 - v1)(x) psi2(x, k) dx.

    ``s1`` is mu for v1 at -l and ``s2`` is mu for v2 at k; the exponentials
    combine into exp(i xi x) with real xi.
    """
    _require(s1, -pair.l, "s1")
    _require(s2, pair.k, "s2")
    return volume_form((v2 - v1).values, s1, s2, pair)


def _check_energy(phi: DtnMap, pair: MomentumPair):
    if not math.isclose(phi.E, pair.E, rel_tol=1e-12, abs_tol=1e-12):
        raise IncompatibilityError(f"DtN map at E={phi.E} used with a pair at E={pair.E}")


def hdiff_boundary(phi1: DtnMap, phi2: DtnMap, s1: FaddeevState, s2: FaddeevState,
                   pair: MomentumPair) -> complex:
    """(2 pi)^-3 * boundary integral of psi1(., -l) [(Phi2 - Phi1) psi2(., k)]."""
    _check_energy(phi1, pair)
    _check_energy(phi2, pair)
    if not phi1.domain.same_grid(phi2.domain):
        raise IncompatibilityError("DtN maps built on different grids")
    _require(s1, -pair.l, "s1")
    _require(s2, pair.k, "s2")
    scale1, trace1 = psi_boundary(s1)
    scale2, trace2 = psi_boundary(s2)
    w = phi1.quadrature
    jump = (phi2.kernel - phi1.kernel) @ (w * trace2)
    scaled = FOURIER_SCALE * complex(np.sum(w * trace1 * jump))
    log_scale = scale1 + scale2
    if scaled == 0:
        return 0j
    if log_scale + math.log(abs(scaled)) > LOG_OVERFLOW:
        return complex(math.inf, math.inf)
    return scaled * math.exp(log_scale)


def boundary_form_bound(phi1: DtnMap, phi2: DtnMap, s1: FaddeevState,
                        s2: FaddeevState) -> float:
    """c9 * sup|psi1| * delta * sup|psi2| over the boundary nodes."""
    scale1, trace1 = psi_boundary(s1)
    scale2, trace2 = psi_boundary(s2)
    sup = float(np.max(np.abs(trace1)) * np.max(np.abs(trace2)))
    return _exp_times(scale1 + scale2, phi1.domain.c9 * sup * delta_norm(phi1, phi2))


def lemma_210_bound(N: float, rho: float, L: float, delta: float, c5: float, c9: float) -> float:
    """c9 c5^2 (1+N)^2 exp(2 rho L) delta."""
    return _exp_times(2.0 * rho * L, c9 * c5 ** 2 * (1.0 + N) ** 2 * delta)


# ---------------------------------------------------------------------
# Lemma checks
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class IdentityCheck:
    pair: MomentumPair
    h_diff_volume: complex
    h_diff_boundary: complex
    vhat_diff: complex
    h_diff_direct: complex
    residual_lemma32: float
    residual_identity: float
    lemma32_ratio: float
    lemma31_ratio: float


def _mismatch(a: complex, b: complex) -> float:
    floor = MISMATCH_FLOOR * max(1.0, abs(a), abs(b))
    return abs(a - b) / max(abs(a), floor)


def verify_lemma32(v1: Potential, v2: Potential, pair: MomentumPair, green: FaddeevGreen,
                   phi1: DtnMap, phi2: DtnMap, tol: float = MU_TOLERANCE,
                   max_iterations: int = MU_MAX_ITERATIONS) -> IdentityCheck:
    """Compare v2^ - v1^ with h2 - h1 at xi and both forms of h2 - h1.

    ``lemma32_ratio`` is |v1^ - v2^ - h1 + h2| divided by
    N (1+N) ||v1 - v2||_L2 / (E + rho^2)^(1/2), an implied c6 sample.
    """
    s1_k = solve_mu(v1, pair.k, green, tol, max_iterations)
    s2_k = solve_mu(v2, pair.k, green, tol, max_iterations)
    s1_ml = solve_mu(v1, -pair.l, green, tol, max_iterations)
    h1 = scattering_h(v1, s1_k, pair)
    h2 = scattering_h(v2, s2_k, pair)
    diff = v2 - v1
    vhat_diff = fourier_at(diff, pair.xi)
    h_volume = hdiff_volume(v1, v2, s1_ml, s2_k, pair)
    h_boundary = hdiff_boundary(phi1, phi2, s1_ml, s2_k, pair)

    residual = abs(vhat_diff - (h2 - h1))
    N = max(v1.linf_norm, v2.linf_norm)
    denom = N * (1.0 + N) * norm(diff, "L2") / math.sqrt(pair.E + pair.rho ** 2)
    ratio = residual / denom if denom > 0 else 0.0
    check = IdentityCheck(
        pair=pair,
        h_diff_volume=h_volume,
        h_diff_boundary=h_boundary,
        vhat_diff=vhat_diff,
        h_diff_direct=h2 - h1,
        residual_lemma32=residual,
        residual_identity=_mismatch(h_volume, h_boundary),
        lemma32_ratio=ratio,
        lemma31_ratio=max(lemma31_ratio(s, N) for s in (s1_k, s2_k, s1_ml)),
    )
    logger.debug("identity check xi=%s rho=%g: mismatch %.3g, c6 sample %.3g",
                 pair.xi.tolist(), pair.rho, check.residual_identity, ratio)
    return check


@dataclass(frozen=True)
class Lemma21Record:
    lhs: float
    rhs_without_c1: float
    implied_c1: float
    holds: Optional[bool]


def lemma21_rhs(N: float, rho: float, L: float, delta: float, l2_diff: float,
                E: float) -> float:
    """(1+N)^2 (exp(2 rho L) delta + ||v1 - v2||_L2 / sqrt(E + rho^2))."""
    boundary_term = _exp_times(2.0 * rho * L, delta)
    return (1.0 + N) ** 2 * (boundary_term + l2_diff / math.sqrt(E + rho ** 2))


def verify_lemma21(v1: Potential, v2: Potential, pair: MomentumPair, delta: float,
                   c1: Optional[float] = None, L: Optional[float] = None) -> Lemma21Record:
    """Evaluate |v2^(xi) - v1^(xi)| against the boundary-data bound with constant c1."""
    reach = 2.0 * math.sqrt(pair.E + pair.rho ** 2)
    if float(np.linalg.norm(pair.xi)) > reach * (1.0 + 1e-12):
        raise InfeasibleFrequencyError(f"|xi| exceeds 2 sqrt(E + rho^2) = {reach:.6g}")
    L = v1.domain.L if L is None else L
    diff = v2 - v1
    lhs = abs(fourier_at(diff, pair.xi))
    N = max(v1.linf_norm, v2.linf_norm)
    rhs = lemma21_rhs(N, pair.rho, L, delta, norm(diff, "L2"), pair.E)
    if lhs == 0.0:
        implied = 0.0
    else:
        implied = lhs / rhs if rhs > 0 else math.inf
    holds = None if c1 is None else lhs <= c1 * rhs
    return Lemma21Record(lhs=lhs, rhs_without_c1=rhs, implied_c1=implied, holds=holds)
