"""Faddeev Green function, the mu integral equation and scattering amplitude h.

For complex k with Im k != 0 the Faddeev Green function is

    g(x, k) = -(2 pi)^-3 * integral exp(i xi x) / (xi^2 + 2 k xi) d xi

and mu(x, k) solves mu = 1 + g(., k) * (v mu). Convolutions run on a
zero-padded periodic grid of spacing h. The frequency lattice is shifted
off xi = 0 along Im k / |Im k| so no lattice point hits the singular set;
with ``oversample`` sub-shifts the lattice spacing along that direction is
refined, which pushes the first non-decaying periodic image further out.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.fft

from errors import (
    ConfigurationError,
    DomainError,
    IncompatibilityError,
    InvalidStateError,
    NoConvergenceError,
    SingularityError,
)
from geometry import Domain, MomentumPair
from potential import FOURIER_SCALE, Potential

logger = logging.getLogger(__name__)

DEFAULT_PADDING = 4.0
DEFAULT_OVERSAMPLE = 2
MU_TOLERANCE = 1e-8
MU_MAX_ITERATIONS = 200
# Largest rho * L the identity checks evaluate directly (e^{2 rho L} < 1e22).
RHO_L_CEILING = 25.0


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _as_momentum(k) -> np.ndarray:
    k = np.asarray(k, dtype=complex).reshape(3)
    if not np.any(k.imag):
        raise DomainError("Faddeev functions need Im k != 0")
    return k


def green_reference(x, rho: float, omega) -> complex:
    """Closed form g(x, i rho omega) = -exp(rho (omega.x - |x|)) / (4 pi |x|)."""
    x = np.asarray(x, dtype=float).reshape(3)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise SingularityError("green_reference is singular at x = 0")
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    omega = np.asarray(omega, dtype=float).reshape(3)
    omega = omega / np.linalg.norm(omega)
    return complex(-math.exp(rho * (float(omega @ x) - r)) / (4.0 * math.pi * r))


class FaddeevGreen:
    """Periodic convolution grid for g(., k) around a domain."""

    def __init__(self, domain: Domain, padding: float = DEFAULT_PADDING,
                 oversample: int = DEFAULT_OVERSAMPLE):
        if padding < 2.0:
            raise ConfigurationError(
                f"padding {padding} < 2: period must be at least twice the domain width"
            )
        if int(oversample) != oversample or oversample < 1:
            raise ConfigurationError(f"oversample must be a positive integer, got {oversample}")
        self.domain = domain
        self.padding = float(padding)
        self.oversample = int(oversample)
        size = int(math.ceil(padding * 2.0 * domain.half_width / domain.h))
        self.size = size + (size % 2)
        self.dxi = 2.0 * math.pi / (self.size * domain.h)
        self.nyquist = math.pi / domain.h
        self.freqs = 2.0 * math.pi * scipy.fft.fftfreq(self.size, d=domain.h)

        n = domain.n
        q = np.arange(self.size)
        signed = np.where(q - 0.5 * (n - 1) < 0.5 * self.size, q, q - self.size)
        self.positions = domain.axis[0] + domain.h * signed
        index = np.asarray(domain.boundary_index) % self.size
        self._trace_index = (index[:, 0], index[:, 1], index[:, 2])

    @property
    def period(self) -> float:
        return self.size * self.domain.h

    def shifts(self, k) -> List[np.ndarray]:
        """Lattice offsets (s + 1/2) dxi / S along Im k / |Im k|."""
        k = _as_momentum(k)
        omega = k.imag / np.linalg.norm(k.imag)
        step = self.dxi / self.oversample
        return [(s + 0.5) * step * omega for s in range(self.oversample)]

    def _axis_frequencies(self, offset: float) -> Tuple[np.ndarray, np.ndarray]:
        # Representative of each shifted frequency inside [-pi/h, pi/h).
        span = 2.0 * self.nyquist
        zeta = np.mod(self.freqs + offset + self.nyquist, span) - self.nyquist
        keep = np.abs(zeta) <= self.nyquist - 0.25 * self.dxi
        return zeta, keep

    def _phase(self, shift: np.ndarray) -> np.ndarray:
        # exp(i shift . x) over the whole periodic grid.
        e = [np.exp(1j * shift[a] * self.positions) for a in range(3)]
        return e[0][:, None, None] * e[1][None, :, None] * e[2][None, None, :]

    def convolve(self, k, f: np.ndarray) -> np.ndarray:
        """g(., k) * f on the full periodic grid; f lives on the interior grid."""
        k = _as_momentum(k)
        f = np.asarray(f, dtype=complex)
        n = self.domain.n
        if f.shape != self.domain.shape:
            raise IncompatibilityError(f"field shape {f.shape} does not match the grid")
        out = np.zeros((self.size,) * 3, dtype=complex)
        if not np.any(f):
            return out
        padded = np.zeros_like(out)
        for shift in self.shifts(k):
            phase = self._phase(shift)
            padded[:n, :n, :n] = np.conj(phase[:n, :n, :n]) * f
            spectrum = scipy.fft.fftn(padded, workers=-1)
            spectrum *= faddeev_symbol(k, self, shift)
            out += phase * scipy.fft.ifftn(spectrum, workers=-1)
        return out / self.oversample

    def apply(self, k, f: np.ndarray) -> np.ndarray:
        n = self.domain.n
        return self.convolve(k, f)[:n, :n, :n]

    def boundary_trace(self, full: np.ndarray) -> np.ndarray:
        """Values of a full-grid convolution at the boundary nodes."""
        return full[self._trace_index]


def faddeev_symbol(k, green: FaddeevGreen, shift: Optional[np.ndarray] = None) -> np.ndarray:
    """-1 / (zeta^2 + 2 k.zeta) on the shifted lattice, in FFT order.

    Entries on an unpaired Nyquist plane are set to zero so the lattice stays
    symmetric under zeta -> -zeta.
    """
    k = _as_momentum(k)
    if shift is None:
        shift = green.shifts(k)[0]
    z = []
    keep = None
    for a in range(3):
        zeta, ok = green._axis_frequencies(float(shift[a]))
        shape = [1, 1, 1]
        shape[a] = green.size
        z.append(zeta.reshape(shape))
        mask = ok.reshape(shape)
        keep = mask if keep is None else keep & mask
    denom = (z[0] ** 2 + z[1] ** 2 + z[2] ** 2
             + 2.0 * (k[0] * z[0] + k[1] * z[1] + k[2] * z[2]))
    return np.where(keep, -1.0 / np.where(keep, denom, 1.0), 0.0)


def min_symbol_denominator(k, green: FaddeevGreen) -> float:
    """Smallest |zeta^2 + 2 k.zeta| over every shifted lattice used for k."""
    smallest = math.inf
    for shift in green.shifts(k):
        symbol = faddeev_symbol(k, green, shift)
        smallest = min(smallest, float(np.min(1.0 / np.abs(symbol[symbol != 0]))))
    return smallest


def apply_green(k, f: np.ndarray, green: FaddeevGreen) -> np.ndarray:
    """Convolution g(., k) * f restricted to the interior grid."""
    return green.apply(k, f)


# ---------------------------------------------------------------------
# mu and its Neumann series
# ---------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class FaddeevState:
    domain: Domain
    k: np.ndarray
    mu: np.ndarray = field(repr=False)
    mu_boundary: np.ndarray = field(repr=False)
    iterations: int
    contraction_estimate: float
    converged: bool
    increments: Tuple[float, ...] = field(repr=False, default=())

    @property
    def k_modulus(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.k) ** 2)))

    @property
    def rho(self) -> float:
        return float(np.linalg.norm(self.k.imag))

    def require_converged(self):
        if not self.converged:
            raise InvalidStateError(f"mu at |k|={self.k_modulus:.3g} did not converge")

    def neumann_bound(self) -> float:
        """Geometric-series bound ||mu - 1|| <= ||mu^1 - mu^0|| / (1 - q)."""
        if not self.increments:
            return 0.0
        return self.increments[0] / (1.0 - self.contraction_estimate)


def _grid_norm(field_values: np.ndarray, h: float) -> float:
    return float(math.sqrt(h ** 3 * np.sum(np.abs(field_values) ** 2)))


def solve_mu(v: Potential, k, green: FaddeevGreen, tol: float = MU_TOLERANCE,
             max_iterations: int = MU_MAX_ITERATIONS) -> FaddeevState:
    """Neumann series mu^(j+1) = 1 + g(., k) * (v mu^(j)) from mu^(0) = 1.

    The contraction estimate is the largest ratio of successive increment
    norms; a ratio >= 1 stops the series.
    """
    k = _as_momentum(k)
    if not v.domain.same_grid(green.domain):
        raise IncompatibilityError("potential and Green grid differ")
    dom = v.domain
    n, h = dom.n, dom.h
    k_mod = float(np.sqrt(np.sum(np.abs(k) ** 2)))
    mu = np.ones(dom.shape, dtype=complex)
    increments: List[float] = []
    contraction = 0.0
    converged = False
    full = np.zeros((green.size,) * 3, dtype=complex)

    for iteration in range(1, max_iterations + 1):
        full = green.convolve(k, v.values * mu)
        new_mu = 1.0 + full[:n, :n, :n]
        step = _grid_norm(new_mu - mu, h)
        mu = new_mu
        if increments and increments[-1] > 0:
            ratio = step / increments[-1]
            contraction = max(contraction, ratio)
            if contraction >= 1.0:
                raise NoConvergenceError(contraction, iteration, k_mod)
        increments.append(step)
        if step <= tol * _grid_norm(mu, h):
            converged = True
            break

    if not converged:
        raise NoConvergenceError(contraction, max_iterations, k_mod)
    logger.debug("mu converged at |k|=%.3g in %d iterations (q=%.3g)",
                 k_mod, iteration, contraction)
    return FaddeevState(
        domain=dom,
        k=_frozen(k.copy()),
        mu=_frozen(mu),
        mu_boundary=_frozen(1.0 + green.boundary_trace(full)),
        iterations=iteration,
        contraction_estimate=contraction,
        converged=converged,
        increments=tuple(increments),
    )


def _check_pair(state: FaddeevState, k: np.ndarray, what: str):
    if not np.allclose(state.k, k, rtol=1e-12, atol=1e-12):
        raise IncompatibilityError(f"state was solved at k={state.k}, not at {what}={k}")


def scattering_h(v: Potential, state: FaddeevState, pair: MomentumPair) -> complex:
    """h(k, l) = (2 pi)^-3 * integral exp(i xi x) v(x) mu(x, k) dx on the grid."""
    state.require_converged()
    _check_pair(state, pair.k, "k")
    dom = v.domain
    ax = dom.axis
    e = [np.exp(1j * pair.xi[a] * ax) for a in range(3)]
    total = np.einsum("ijk,i,j,k->", v.values * state.mu, e[0], e[1], e[2])
    return complex(FOURIER_SCALE * dom.cell_volume * total)


def psi_boundary(state: FaddeevState) -> Tuple[float, np.ndarray]:
    """psi = exp(i k x) mu on the boundary nodes as (log_scale, values).

    ``psi = exp(log_scale) * values`` with log_scale = rho * L, which bounds
    |exp(i k x)| on the box.
    """
    dom = state.domain
    log_scale = state.rho * dom.L
    exponent = 1j * (dom.boundary_points @ state.k) - log_scale
    return log_scale, np.exp(exponent) * state.mu_boundary


def lemma31_ratio(state: FaddeevState, N: float) -> float:
    """sup |mu| / (1 + N): one sample of the constant c5."""
    return float(np.max(np.abs(state.mu))) / (1.0 + N)


def mu_l2_defect(state: FaddeevState) -> float:
    """||mu - 1|| in L2(D)."""
    return _grid_norm(state.mu - 1.0, state.domain.h)


def implied_c7(state: FaddeevState, N: float) -> float:
    """c7 sample from ||mu - 1|| <= c7 N |k|^-1 ||mu||."""
    if N <= 0:
        return 0.0
    return mu_l2_defect(state) * state.k_modulus / (N * _grid_norm(state.mu, state.domain.h))


def sup_mu_defect(state: FaddeevState) -> float:
    return float(np.max(np.abs(state.mu - 1.0)))
