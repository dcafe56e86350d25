"""Parameter choices, frequency splitting and the stability right-hand sides.

L2 mode (H^m smoothness, m > 0)::

    ||v2 - v1||_L2 <= A (Lambda)^(1/2) delta^tau
                      + B (1+N)^(4m/3) N_Hm Lambda^(-m/3),
    Lambda = alpha E + beta (1-tau)^2 ln(3 + 1/delta)^2

L-infinity mode (W^m smoothness, m > 3) has the same shape with
(A~, B~, alpha~, beta~), the factor (1+N)^(2(m-3)/3) N_Wm / (m-3) and the
power -(m-3)/6.

Every exp(2 rho L) and every power of (1+N) is combined in log space;
anything above 1e300 comes back as ``math.inf``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Mapping, NamedTuple, Optional, Tuple

import numpy as np
from scipy import integrate

from errors import (
    ConfigurationError,
    DomainError,
    IncompleteDataError,
    InfeasibleParametersError,
)
from geometry import Domain
from potential import FrequencyLattice, Potential, Spectrum

logger = logging.getLogger(__name__)

DELTA_FLOOR = 1e-300
LOG_OVERFLOW = math.log(1e300)


@dataclass(frozen=True)
class Constants:
    """Calibrated witnesses for the domain-dependent constants."""

    c1: float = 1.0
    c3: float = 1.0
    c4: float = 1.0
    c5: float = 1.0
    c6: float = 1.0
    r_star: float = 0.0
    A: float = 1.0
    B: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    A_t: float = 1.0
    B_t: float = 1.0
    alpha_t: float = 1.0
    beta_t: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise ConfigurationError(f"constant {f.name} must be a finite number >= 0")
            if f.name != "r_star" and value == 0:
                raise ConfigurationError(f"constant {f.name} must be positive")

    @property
    def q(self) -> float:
        return q_l2(self.c1)

    @property
    def q_tilde(self) -> float:
        return q_linf(self.c1, self.c3)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Constants":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown constants: {unknown}")
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass(frozen=True)
class EstimatorParams:
    tau: float
    E: float
    delta: float
    N: float
    N_Hm: float
    N_Wm: float
    m: float
    L: float
    constants: Constants = Constants()

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise DomainError(f"tau must lie in (0, 1], got {self.tau}")
        if self.delta < 0:
            raise DomainError(f"delta must be non-negative, got {self.delta}")
        if self.m <= 0:
            raise DomainError(f"m must be positive, got {self.m}")
        if self.L <= 0:
            raise DomainError(f"L must be positive, got {self.L}")


def _pow_log(log_value: float) -> float:
    if log_value > LOG_OVERFLOW:
        return math.inf
    return math.exp(log_value)


def _product(*factors: float, log_extra: float = 0.0) -> float:
    """Product of non-negative factors times exp(log_extra), overflow-guarded."""
    total = log_extra
    for f in factors:
        if f == 0:
            return 0.0
        if math.isinf(f):
            return math.inf
        total += math.log(f)
    return _pow_log(total)


def log_term(delta: float) -> float:
    """ln(3 + 1/delta) with delta floored at DELTA_FLOOR."""
    return math.log(3.0 + 1.0 / max(delta, DELTA_FLOOR))


# ---------------------------------------------------------------------
# Parameter choices
# ---------------------------------------------------------------------
class RhoChoice(NamedTuple):
    gamma: float
    rho: float
    degenerate: bool


def choose_rho(tau: float, delta: float, L: float) -> RhoChoice:
    """gamma = (1 - tau) / (2L), rho = gamma ln(3 + 1/delta).

    tau = 1 has no rho prescription and returns (0, 0, degenerate=True).
    """
    if not 0 < tau <= 1:
        raise DomainError(f"tau must lie in (0, 1], got {tau}")
    if not L > 0:
        raise DomainError(f"L must be positive, got {L}")
    if delta < 0:
        raise DomainError(f"delta must be non-negative, got {delta}")
    if tau == 1:
        return RhoChoice(0.0, 0.0, True)
    gamma = (1.0 - tau) / (2.0 * L)
    return RhoChoice(gamma, gamma * log_term(delta), False)


def q_l2(c1: float) -> float:
    """q = (1/(2 pi)) (16 pi c1^2 / 3)^(-1/3)."""
    if not c1 > 0:
        raise DomainError(f"c1 must be positive, got {c1}")
    return (16.0 * math.pi * c1 ** 2 / 3.0) ** (-1.0 / 3.0) / (2.0 * math.pi)


def q_linf(c1: float, c3: float) -> float:
    """q~ = (8 pi c1 c3 / 3)^(-1/3)."""
    if not (c1 > 0 and c3 > 0):
        raise DomainError("c1 and c3 must be positive")
    return (8.0 * math.pi * c1 * c3 / 3.0) ** (-1.0 / 3.0)


def _energy(E: float, rho: float) -> float:
    s = E + rho ** 2
    if not s > 0:
        raise DomainError(f"E + rho^2 must be positive, got {s}")
    return s


def choose_r_l2(N: float, E: float, rho: float, c1: float) -> Tuple[float, float]:
    """r = q (1+N)^(-4/3) (E + rho^2)^(1/3); returns (r, q)."""
    s = _energy(E, rho)
    q = q_l2(c1)
    return q * (1.0 + N) ** (-4.0 / 3.0) * s ** (1.0 / 3.0), q


def choose_r_linf(N: float, E: float, rho: float, c1: float, c3: float) -> Tuple[float, float]:
    """r = q~ (1+N)^(-2/3) (E + rho^2)^(1/6); returns (r, q~)."""
    s = _energy(E, rho)
    qt = q_linf(c1, c3)
    return qt * (1.0 + N) ** (-2.0 / 3.0) * s ** (1.0 / 6.0), qt


# ---------------------------------------------------------------------
# Frequency splitting
# ---------------------------------------------------------------------
def split_error(spectrum_diff: Spectrum, r: float, mode: str = "L2") -> Tuple[float, float]:
    """Split the lattice norm of a spectrum at |xi| = r.

    ``L2``: (I1, I2) with I1^2 + I2^2 the squared l2 norm.
    ``L1``: (I1~, I2~) summing to the l1 norm. Low part is |xi| <= r.
    """
    if not r > 0:
        raise DomainError(f"split radius must be positive, got {r}")
    lattice = spectrum_diff.lattice
    low = lattice.xi_norm() <= r
    mag = np.abs(spectrum_diff.coefficients)
    cell = lattice.cell_volume
    if mode == "L2":
        sq = mag ** 2
        return (math.sqrt(float(np.sum(sq[low])) * cell),
                math.sqrt(float(np.sum(sq[~low])) * cell))
    if mode == "L1":
        return float(np.sum(mag[low])) * cell, float(np.sum(mag[~low])) * cell
    raise DomainError(f"unknown split mode {mode!r}; expected 'L2' or 'L1'")


# ---------------------------------------------------------------------
# Theorem right-hand sides
# ---------------------------------------------------------------------
def _lambda(E: float, tau: float, delta: float, alpha: float, beta: float) -> float:
    if E < 0 and tau >= 1:
        raise InfeasibleParametersError("E < 0 requires tau < 1")
    lam = alpha * E + beta * (1.0 - tau) ** 2 * log_term(delta) ** 2
    if E < 0 and not lam > 0:
        raise InfeasibleParametersError(
            f"alpha E + beta (1-tau)^2 ln(3+1/delta)^2 = {lam:.4g} must be positive for E < 0"
        )
    return lam


def _holder_term(coefficient: float, lam: float, delta: float, tau: float) -> float:
    if delta == 0:
        return 0.0
    return _product(coefficient, math.sqrt(lam), log_extra=tau * math.log(delta))


def _tail_l2(p: EstimatorParams, lam: float) -> float:
    return _product(p.constants.B, p.N_Hm, log_extra=(4.0 * p.m / 3.0) * math.log1p(p.N)
                    - (p.m / 3.0) * math.log(lam))


def _tail_linf(p: EstimatorParams, lam: float) -> float:
    return _product(p.constants.B_t, p.N_Wm / (p.m - 3.0),
                    log_extra=(2.0 * (p.m - 3.0) / 3.0) * math.log1p(p.N)
                    - ((p.m - 3.0) / 6.0) * math.log(lam))


def rhs_theorem1(p: EstimatorParams) -> float:
    """A Lambda^(1/2) delta^tau + B (1+N)^(4m/3) N_Hm Lambda^(-m/3)."""
    c = p.constants
    lam = _lambda(p.E, p.tau, p.delta, c.alpha, c.beta)
    if lam == 0:
        return math.inf
    return _holder_term(c.A, lam, p.delta, p.tau) + _tail_l2(p, lam)


def rhs_theorem2(p: EstimatorParams) -> float:
    """A~ Lambda~^(1/2) delta^tau + B~ (1+N)^(2(m-3)/3) N_Wm/(m-3) Lambda~^(-(m-3)/6)."""
    if not p.m > 3:
        raise DomainError(f"the L-infinity estimate needs m > 3, got {p.m}")
    c = p.constants
    lam = _lambda(p.E, p.tau, p.delta, c.alpha_t, c.beta_t)
    if lam == 0:
        return math.inf
    return _holder_term(c.A_t, lam, p.delta, p.tau) + _tail_linf(p, lam)


def remainder_asymptotics(p: EstimatorParams) -> Tuple[float, Optional[float]]:
    """The logarithmic remainders (R, R~) of both estimates; R~ is None for m <= 3."""
    c = p.constants
    lam = _lambda(p.E, p.tau, p.delta, c.alpha, c.beta)
    r = math.inf if lam == 0 else _tail_l2(p, lam)
    r_t = None
    if p.m > 3:
        lam_t = _lambda(p.E, p.tau, p.delta, c.alpha_t, c.beta_t)
        r_t = math.inf if lam_t == 0 else _tail_linf(p, lam_t)
    return r, r_t


# ---------------------------------------------------------------------
# Intermediate and fallback bounds
# ---------------------------------------------------------------------
class Bound(NamedTuple):
    value: float
    reliable: bool


def holder_factor(delta: float, tau: float) -> float:
    """exp(2 rho L) delta at the prescribed rho: (1 + 3 delta)^(1-tau) delta^tau."""
    if delta == 0:
        return 0.0
    return (1.0 + 3.0 * delta) ** (1.0 - tau) * delta ** tau


def _feasible(E: float, rho: float, N: float, floor: Optional[float]) -> bool:
    return floor is None or E + rho ** 2 >= floor * (1.0 + N) ** 2


def intermediate_l2(E: float, rho: float, delta: float, N: float, N_Hm: float, m: float,
                    c1: float, L: float, floor: Optional[float] = None) -> Bound:
    """2 [sqrt(E+rho^2) exp(2 rho L) delta / 2 + (1+N)^(4m/3) N_Hm q^-m (E+rho^2)^(-m/3)]."""
    s = _energy(E, rho)
    q = q_l2(c1)
    boundary = _product(math.sqrt(s), delta / 2.0, log_extra=2.0 * rho * L)
    tail = _product(N_Hm, log_extra=(4.0 * m / 3.0) * math.log1p(N) - m * math.log(q)
                    - (m / 3.0) * math.log(s))
    return Bound(2.0 * (boundary + tail), _feasible(E, rho, N, floor))


def intermediate_linf(E: float, rho: float, delta: float, N: float, N_Wm: float, m: float,
                      c1: float, c3: float, L: float, floor: Optional[float] = None) -> Bound:
    """2 [sqrt(E+rho^2) e^(2 rho L) delta/(2 c3) + 4 pi (1+N)^(2(m-3)/3) N_Wm q~^(3-m)/(m-3) (E+rho^2)^(-(m-3)/6)]."""
    if not m > 3:
        raise DomainError(f"the L-infinity bound needs m > 3, got {m}")
    s = _energy(E, rho)
    qt = q_linf(c1, c3)
    boundary = _product(math.sqrt(s), delta / (2.0 * c3), log_extra=2.0 * rho * L)
    tail = _product(4.0 * math.pi, N_Wm / (m - 3.0),
                    log_extra=(2.0 * (m - 3.0) / 3.0) * math.log1p(N)
                    + (3.0 - m) * math.log(qt) - ((m - 3.0) / 6.0) * math.log(s))
    return Bound(2.0 * (boundary + tail), _feasible(E, rho, N, floor))


class FallbackBounds(NamedTuple):
    small_energy: float
    large_delta: float


def fallback_l2(Lambda: float, r2: float, N: float, N_Hm: float, m: float,
                delta: float, tau: float, c3: float) -> FallbackBounds:
    """Branches of the L2 proof outside the main regime.

    small Lambda: (1+N)^(4m/3) N_Hm (Lambda / r2^2)^(-m/3)
    large delta:  2 c3 (Lambda / r2^2)^(1/2) delta^tau
    """
    if not (Lambda > 0 and r2 > 0):
        raise DomainError("Lambda and r2 must be positive")
    ratio = Lambda / r2 ** 2
    small = _product(N_Hm, log_extra=(4.0 * m / 3.0) * math.log1p(N) - (m / 3.0) * math.log(ratio))
    large = 2.0 * c3 * math.sqrt(ratio) * delta ** tau
    return FallbackBounds(small, large)


def fallback_linf(Lambda: float, r2: float, N_Wm: float, m: float, delta: float,
                  tau: float, c4: float) -> FallbackBounds:
    """small Lambda: c4 e^(m-3)/(m-3) N_Wm; large delta: 2 (Lambda / r2^2)^(1/2) delta^tau."""
    if not m > 3:
        raise DomainError(f"needs m > 3, got {m}")
    if not (Lambda > 0 and r2 > 0):
        raise DomainError("Lambda and r2 must be positive")
    small = c4 * math.exp(m - 3.0) / (m - 3.0) * N_Wm
    large = 2.0 * math.sqrt(Lambda / r2 ** 2) * delta ** tau
    return FallbackBounds(small, large)


def c4_integral(m: float) -> float:
    """integral_0^inf 4 pi t^2 (1 + t^2)^(-m/2) dt (finite for m > 3)."""
    if not m > 3:
        raise DomainError(f"integral diverges for m <= 3, got {m}")
    value, _ = integrate.quad(lambda t: 4.0 * math.pi * t ** 2 * (1.0 + t * t) ** (-0.5 * m),
                              0.0, np.inf, limit=200)
    return float(value)


def holder_log_ratio_sup(tau: float, mu: float, samples: int = 20001) -> Tuple[float, float]:
    """sup over delta in (0, 1] of delta^tau ln(3 + 1/delta)^mu, by a log-spaced scan.

    Returns (sup, argmax delta).
    """
    if not (0 < tau <= 1 and mu > 0):
        raise DomainError("need 0 < tau <= 1 and mu > 0")
    log_delta = np.linspace(-690.0, 0.0, samples)
    delta = np.exp(log_delta)
    values = tau * log_delta + mu * np.log(np.log(3.0 + 1.0 / delta))
    best = int(np.argmax(values))
    return float(np.exp(values[best])), float(delta[best])


# ---------------------------------------------------------------------
# Low-frequency reconstruction
# ---------------------------------------------------------------------
RECONSTRUCTION_MIN_CELLS = 1
# Headroom on rho so the outermost sample stays strictly inside the reach of Theta_E.
SAMPLING_HEADROOM = 1.001


class SamplingPlan(NamedTuple):
    radius: float
    rho: float
    offsets: np.ndarray
    xis: np.ndarray


def sampling_plan(E: float, rho: float, r: float, lattice: FrequencyLattice,
                  min_cells: int = RECONSTRUCTION_MIN_CELLS) -> SamplingPlan:
    """Lattice points used for h2 - h1 samples and the rho that reaches them.

    The radius is ``max(r, min_cells * dxi)`` so the ball always holds the
    nearest lattice shell; rho is raised only when 2 sqrt(E + rho^2) falls
    short of that radius.
    """
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    if not r > 0:
        raise DomainError(f"sampling radius must be positive, got {r}")
    if min_cells < 0:
        raise DomainError(f"min_cells must be non-negative, got {min_cells}")
    radius = max(float(r), min_cells * lattice.dxi)
    offsets, xis = lattice.points_within(radius)
    reach = float(np.max(np.linalg.norm(xis, axis=1))) if len(xis) else 0.0
    needed = 0.25 * reach ** 2 - float(E)
    sample_rho = float(rho)
    if needed > 0 and sample_rho ** 2 < needed:
        sample_rho = SAMPLING_HEADROOM * math.sqrt(needed)
    return SamplingPlan(radius, sample_rho, offsets, xis)


def reconstruct_diff_lowfreq(hdiff_samples: Mapping[Tuple[int, int, int], complex], r: float,
                             lattice: FrequencyLattice, domain: Domain) -> Tuple[Potential, float]:
    """Inverse lattice transform of samples of v2^ - v1^ on |xi| <= r.

    ``hdiff_samples`` is keyed by integer lattice offsets. Returns the real
    part as a Potential and the relative size of the discarded imaginary part.
    """
    if not r > 0:
        raise DomainError(f"reconstruction radius must be positive, got {r}")
    offsets, xi = lattice.points_within(r)
    missing = [tuple(int(p) for p in o) for o in offsets
               if tuple(int(p) for p in o) not in hdiff_samples]
    if missing:
        raise IncompleteDataError(
            f"{len(missing)} of {len(offsets)} lattice points with |xi| <= {r:.4g} have no sample"
        )
    coeffs = np.array([hdiff_samples[tuple(int(p) for p in o)] for o in offsets], dtype=complex)
    ax = domain.axis
    e = [np.exp(-1j * np.outer(xi[:, a], ax)) for a in range(3)]
    values = np.einsum("s,si,sj,sk->ijk", coeffs * lattice.cell_volume, e[0], e[1], e[2])
    real = values.real
    peak = float(np.max(np.abs(real)))
    residue = float(np.max(np.abs(values.imag))) / peak if peak > 0 else 0.0
    logger.debug("reconstructed from %d samples (r=%.3g), imaginary residue %.2e",
                 len(offsets), r, residue)
    return Potential(domain, real, margin=0), residue
