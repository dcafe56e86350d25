"""Potentials on the interior grid, their Fourier transforms and norms.

Fourier convention (forward transform carries the prefactor)::

    F w(xi) = (2 pi)^-3 * integral exp(i xi.x) w(x) dx

Transforms are lattice sums over the grid (rectangle rule, h^3 weights)
evaluated on a symmetric frequency lattice by FFT with zero padding to the
lattice period. Integrals over xi use (d xi)^3 weights.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np
import scipy.fft

from errors import ConfigurationError, DomainError, IncompatibilityError
from geometry import Domain

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
FOURIER_SCALE = TWO_PI ** -3
# Tail-bound constants: L2 tail (2 pi)^(-3/2), L1 tail 4 pi.
C2 = TWO_PI ** -1.5
C2_TILDE = 4.0 * math.pi

DEFAULT_MARGIN = 2
DEFAULT_PERIOD_FACTOR = 4.0

NORM_KINDS = ("Linf", "L2", "Hm", "Wm")
GENERATOR_KINDS = ("gaussian_bump", "cosine_bump", "random_bandlimited")

GRID_MAGIC = "GELFAND-GRID"
GRID_VERSION = "v1"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


# ---------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Potential:
    """Real field on the interior grid, zero outside D.

    ``margin`` counts the grid layers next to the boundary that are forced
    to zero, so ``support_margin = margin * h``.
    """

    domain: Domain
    values: np.ndarray = field(repr=False)
    margin: int = DEFAULT_MARGIN
    _cache: Dict[Any, Any] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != self.domain.shape:
            raise ConfigurationError(
                f"potential shape {values.shape} does not match grid {self.domain.shape}"
            )
        if np.iscomplexobj(values):
            raise ConfigurationError("potentials are real-valued")
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("potential values must be finite")
        values = np.array(values, dtype=float)
        object.__setattr__(self, "values", _frozen(values))

    @property
    def linf_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    @property
    def support_margin(self) -> float:
        return self.margin * self.domain.h

    def spectrum(self, period_factor: float = DEFAULT_PERIOD_FACTOR) -> "Spectrum":
        key = ("spectrum", float(period_factor))
        if key not in self._cache:
            self._cache[key] = fourier_transform(self, period_factor=period_factor)
        return self._cache[key]

    def _check_compatible(self, other: "Potential"):
        if not self.domain.same_grid(other.domain):
            raise IncompatibilityError("potentials live on different grids")

    def __sub__(self, other: "Potential") -> "Potential":
        self._check_compatible(other)
        return Potential(self.domain, self.values - other.values, min(self.margin, other.margin))

    def __add__(self, other: "Potential") -> "Potential":
        self._check_compatible(other)
        return Potential(self.domain, self.values + other.values, min(self.margin, other.margin))

    def scaled(self, factor: float) -> "Potential":
        return Potential(self.domain, float(factor) * self.values, self.margin)


def zero_potential(domain: Domain, margin: int = DEFAULT_MARGIN) -> Potential:
    return Potential(domain, np.zeros(domain.shape), margin)


def margin_mask(domain: Domain, margin: int) -> np.ndarray:
    """True on interior points farther than ``margin`` cells from the boundary."""
    idx = np.arange(domain.n)
    keep = (idx >= margin) & (idx < domain.n - margin)
    return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]


def from_function(domain: Domain, func, margin: int = DEFAULT_MARGIN) -> Potential:
    """Sample ``func(x1, x2, x3)`` on the grid and zero the margin layers."""
    x1, x2, x3 = domain.mesh()
    values = np.asarray(func(x1, x2, x3), dtype=float) * margin_mask(domain, margin)
    return Potential(domain, values, margin)


# ---------------------------------------------------------------------
# Frequency lattice and spectra
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class FrequencyLattice:
    """Symmetric lattice xi = dxi * p, p in [-K, K]^3, tied to grid spacing h."""

    dxi: float
    half_count: int
    h: float

    @property
    def size(self) -> int:
        return 2 * self.half_count + 1

    @property
    def period(self) -> float:
        return TWO_PI / self.dxi

    @property
    def extent(self) -> float:
        return self.half_count * self.dxi

    @property
    def axis(self) -> np.ndarray:
        return self.dxi * np.arange(-self.half_count, self.half_count + 1)

    @property
    def cell_volume(self) -> float:
        return self.dxi ** 3

    def xi_norm(self) -> np.ndarray:
        ax2 = self.axis ** 2
        return np.sqrt(ax2[:, None, None] + ax2[None, :, None] + ax2[None, None, :])

    def points_within(self, r: float) -> Tuple[np.ndarray, np.ndarray]:
        """Integer offsets and xi vectors of the lattice points with |xi| <= r."""
        reach = min(int(math.floor(r / self.dxi * (1.0 + 1e-12))), self.half_count)
        p = np.arange(-reach, reach + 1)
        grid = np.stack(np.meshgrid(p, p, p, indexing="ij"), axis=-1).reshape(-1, 3)
        xi = grid * self.dxi
        inside = np.sqrt(np.sum(xi ** 2, axis=1)) <= r * (1.0 + 1e-12)
        return grid[inside], xi[inside]

    @classmethod
    def for_domain(cls, domain: Domain, period_factor: float = DEFAULT_PERIOD_FACTOR):
        if period_factor < 1.0:
            raise ConfigurationError(
                f"period factor {period_factor} < 1: lattice period shorter than the domain"
            )
        cells = int(math.ceil(period_factor * 2.0 * domain.half_width / domain.h))
        size = max(cells, domain.n + 1)
        if size % 2 == 0:
            size += 1
        return cls(dxi=TWO_PI / (size * domain.h), half_count=size // 2, h=domain.h)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Values of F w on a frequency lattice (prefactor (2 pi)^-3 included)."""

    lattice: FrequencyLattice
    coefficients: np.ndarray = field(repr=False)
    convention_scale: float = FOURIER_SCALE

    def at(self, offset) -> complex:
        """Coefficient at integer lattice offset ``(p1, p2, p3)`` from the origin."""
        K = self.lattice.half_count
        i, j, k = (int(p) + K for p in offset)
        return complex(self.coefficients[i, j, k])

    def __sub__(self, other: "Spectrum") -> "Spectrum":
        if self.lattice != other.lattice:
            raise IncompatibilityError("spectra live on different lattices")
        return Spectrum(self.lattice, _frozen(self.coefficients - other.coefficients))


def fourier_transform(w: Potential, period_factor: float = DEFAULT_PERIOD_FACTOR) -> Spectrum:
    """Lattice approximation of (2 pi)^-3 * integral exp(i xi x) w(x) dx by FFT."""
    dom = w.domain
    lattice = FrequencyLattice.for_domain(dom, period_factor)
    size = lattice.size
    # Unnormalised inverse FFT = sum_j exp(+2 pi i p j / size) w_j.
    sums = scipy.fft.ifftn(w.values, s=(size, size, size), norm="forward", workers=-1)
    sums = scipy.fft.fftshift(sums)
    x0 = dom.axis[0]
    phase = np.exp(1j * lattice.axis * x0)
    coeffs = FOURIER_SCALE * dom.cell_volume * sums
    coeffs *= phase[:, None, None] * phase[None, :, None] * phase[None, None, :]
    return Spectrum(lattice, _frozen(coeffs))


def fourier_at(w: Potential, xi) -> complex:
    """F w at an arbitrary real xi by direct grid quadrature."""
    xi = np.asarray(xi, dtype=float).reshape(3)
    ax = w.domain.axis
    e = [np.exp(1j * xi[a] * ax) for a in range(3)]
    total = np.einsum("ijk,i,j,k->", w.values, e[0], e[1], e[2])
    return complex(FOURIER_SCALE * w.domain.cell_volume * total)


# ---------------------------------------------------------------------
# Norms and spectral tails
# ---------------------------------------------------------------------
def _weight(lattice: FrequencyLattice, m: float) -> np.ndarray:
    ax2 = lattice.axis ** 2
    return (1.0 + ax2[:, None, None] + ax2[None, :, None] + ax2[None, None, :]) ** (0.5 * m)


def norm(w: Potential, kind: str, m: float = 0.0,
         period_factor: float = DEFAULT_PERIOD_FACTOR) -> float:
    """Linf, L2, H^m or W^m norm of ``w``.

    H^m uses Parseval with the (2 pi)^(-3/2) factor, so H^0 equals L2 on the
    lattice; W^m is the lattice max of (1+|xi|^2)^(m/2) |F w|.
    """
    if kind not in NORM_KINDS:
        raise DomainError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")
    if kind == "Linf":
        return w.linf_norm
    if kind == "L2":
        return float(math.sqrt(w.domain.cell_volume * np.sum(w.values ** 2)))
    if m < 0:
        raise DomainError(f"Sobolev index m must be non-negative, got {m}")
    spec = w.spectrum(period_factor)
    weight = _weight(spec.lattice, m)
    mag = np.abs(spec.coefficients)
    if kind == "Hm":
        total = np.sum((weight * mag) ** 2) * spec.lattice.cell_volume
        return float(TWO_PI ** 1.5 * math.sqrt(total))
    return float(np.max(weight * mag))


def tail_l2(s: Spectrum, r: float) -> float:
    """(integral over |xi| >= r of |F w|^2)^(1/2) on the lattice."""
    if not r > 0:
        raise DomainError(f"tail radius must be positive, got {r}")
    outside = s.lattice.xi_norm() >= r
    return float(math.sqrt(np.sum(np.abs(s.coefficients[outside]) ** 2) * s.lattice.cell_volume))


def tail_l1(s: Spectrum, r: float, m: float) -> float:
    """integral over |xi| >= r of |F w| on the lattice (W^m context, m > 3)."""
    if not m > 3:
        raise DomainError(f"L1 tail needs m > 3, got {m}")
    if not r > 0:
        raise DomainError(f"tail radius must be positive, got {r}")
    outside = s.lattice.xi_norm() >= r
    return float(np.sum(np.abs(s.coefficients[outside])) * s.lattice.cell_volume)


def l2_tail_bound(n_hm: float, m: float, r: float) -> float:
    """c2 * N_Hm * r^-m."""
    return C2 * n_hm * r ** (-m)


def l1_tail_bound(n_wm: float, m: float, r: float) -> float:
    """4 pi * N_Wm / (m - 3) * r^(3 - m)."""
    if not m > 3:
        raise DomainError(f"L1 tail bound needs m > 3, got {m}")
    return C2_TILDE * n_wm / (m - 3.0) * r ** (3.0 - m)


# ---------------------------------------------------------------------
# Fixture generators
# ---------------------------------------------------------------------
def _snap_center(domain: Domain, center) -> np.ndarray:
    center = np.zeros(3) if center is None else np.asarray(center, dtype=float).reshape(3)
    idx = np.clip(np.rint((center - domain.axis[0]) / domain.h), 0, domain.n - 1)
    return domain.axis[0] + domain.h * idx


def _support_limit(domain: Domain, margin: int) -> float:
    return domain.half_width - margin * domain.h


def generate(kind: str, params: Optional[Mapping[str, Any]], seed: int,
             domain: Domain, margin: int = DEFAULT_MARGIN) -> Potential:
    """Deterministic fixture potential.

    ``gaussian_bump``: amplitude, width, center (snapped to the grid).
    ``cosine_bump``: amplitude * cos^2(pi |x-c| / (2 radius)) inside radius.
    ``random_bandlimited``: amplitude, modes, radius; random low modes under a
    cos^2 window, rescaled so the max equals amplitude.
    """
    params = dict(params or {})
    if kind not in GENERATOR_KINDS:
        raise ConfigurationError(f"unknown generator {kind!r}; expected one of {GENERATOR_KINDS}")
    if margin < 0:
        raise ConfigurationError(f"margin must be non-negative, got {margin}")
    limit = _support_limit(domain, margin)
    if limit <= 0:
        raise ConfigurationError("margin leaves no interior support")
    amplitude = float(params.pop("amplitude", 1.0))
    x1, x2, x3 = domain.mesh()

    if kind == "gaussian_bump":
        width = float(params.pop("width", 0.2 * domain.half_width))
        center = _snap_center(domain, params.pop("center", None))
        if width <= 0:
            raise ConfigurationError("gaussian width must be positive")
        if np.any(np.abs(center) >= limit):
            raise ConfigurationError(f"gaussian center {center.tolist()} lies in the margin")
        r2 = (x1 - center[0]) ** 2 + (x2 - center[1]) ** 2 + (x3 - center[2]) ** 2
        values = amplitude * np.exp(-0.5 * r2 / width ** 2)

    elif kind == "cosine_bump":
        radius = float(params.pop("radius", 0.6 * limit))
        center = _snap_center(domain, params.pop("center", None))
        if radius <= 0 or np.any(np.abs(center) + radius > limit + 1e-12):
            raise ConfigurationError(
                f"cosine bump (center {center.tolist()}, radius {radius}) leaves the support box"
            )
        r = np.sqrt((x1 - center[0]) ** 2 + (x2 - center[1]) ** 2 + (x3 - center[2]) ** 2)
        values = np.where(r < radius, amplitude * np.cos(0.5 * math.pi * r / radius) ** 2, 0.0)

    else:
        modes = int(params.pop("modes", 3))
        radius = float(params.pop("radius", 0.9 * limit))
        if modes < 0 or radius <= 0 or radius > limit + 1e-12:
            raise ConfigurationError("random_bandlimited needs modes >= 0 and 0 < radius <= support")
        rng = np.random.default_rng(seed)
        base = math.pi / domain.half_width
        field_values = np.zeros(domain.shape)
        for j1 in range(-modes, modes + 1):
            for j2 in range(-modes, modes + 1):
                for j3 in range(0, modes + 1):
                    a, b = rng.standard_normal(2)
                    phase = base * (j1 * x1 + j2 * x2 + j3 * x3)
                    field_values += a * np.cos(phase) + b * np.sin(phase)
        r = np.sqrt(x1 ** 2 + x2 ** 2 + x3 ** 2)
        window = np.where(r < radius, np.cos(0.5 * math.pi * r / radius) ** 2, 0.0)
        values = field_values * window
        peak = np.max(np.abs(values))
        values = amplitude * values / peak if peak > 0 else values

    if params:
        raise ConfigurationError(f"unexpected parameters for {kind}: {sorted(params)}")
    values = values * margin_mask(domain, margin)
    return Potential(domain, values, margin)


# ---------------------------------------------------------------------
# Grid file format
# ---------------------------------------------------------------------
_HEADER_RE = re.compile(r"(\w+)=(\S+)")


def save_grid(path: Union[str, Path], values: np.ndarray, domain: Domain,
              margin: int = DEFAULT_MARGIN) -> Path:
    """Write ``values`` (real or complex grid field) in the GELFAND-GRID format."""
    path = Path(path)
    values = np.asarray(values)
    dtype = "complex128" if np.iscomplexobj(values) else "float64"
    header = (f"{GRID_MAGIC} {GRID_VERSION} n={domain.n} half_width={domain.half_width!r} "
              f"margin={margin} dtype={dtype}\n")
    payload = np.ascontiguousarray(values, dtype="<c16" if dtype == "complex128" else "<f8")
    with path.open("wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload.tobytes(order="C"))
    return path


def load_grid(path: Union[str, Path]) -> Tuple[Dict[str, Any], np.ndarray]:
    """Read a GELFAND-GRID file; returns (header, values)."""
    raw = Path(path).read_bytes()
    line, sep, body = raw.partition(b"\n")
    text = line.decode("ascii", errors="replace")
    if not sep or not text.startswith(f"{GRID_MAGIC} {GRID_VERSION}"):
        raise ConfigurationError(f"{path}: not a {GRID_MAGIC} {GRID_VERSION} file")
    fields = dict(_HEADER_RE.findall(text))
    try:
        header = {
            "n": int(fields["n"]),
            "half_width": float(fields["half_width"]),
            "margin": int(fields["margin"]),
            "dtype": fields["dtype"],
        }
    except (KeyError, ValueError) as exc:
        raise ConfigurationError(f"{path}: malformed header {text!r}") from exc
    dtype = {"float64": "<f8", "complex128": "<c16"}.get(header["dtype"])
    if dtype is None:
        raise ConfigurationError(f"{path}: unsupported dtype {header['dtype']}")
    n = header["n"]
    values = np.frombuffer(body, dtype=dtype)
    if values.size != n ** 3:
        raise ConfigurationError(f"{path}: expected {n ** 3} values, found {values.size}")
    return header, values.reshape((n, n, n)).copy()


def save_potential(path: Union[str, Path], w: Potential) -> Path:
    return save_grid(path, w.values, w.domain, w.margin)


def load_potential(path: Union[str, Path], domain: Domain) -> Potential:
    header, values = load_grid(path)
    if header["n"] != domain.n or header["half_width"] != domain.half_width:
        raise IncompatibilityError(f"{path}: grid (n={header['n']}, w={header['half_width']}) "
                                   f"does not match domain (n={domain.n}, w={domain.half_width})")
    if header["dtype"] != "float64":
        raise ConfigurationError(f"{path}: potentials must be real")
    return Potential(domain, values, header["margin"])
