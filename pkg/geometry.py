"""Computational domain, boundary mesh and complex-momentum geometry.

The domain D is the box [-w, w]^3 sampled on an n^3 interior lattice with
spacing h = 2w/(n+1). Boundary nodes are the lattice points on the six faces
that touch the 7-point stencil (edges and corners are never referenced), so
every boundary node has exactly one interior neighbour along its normal.

Boundary nodes are ordered face by face::

    (x1=-w), (x1=+w), (x2=-w), (x2=+w), (x3=-w), (x3=+w)

and, inside a face, row-major over the two tangential axes in increasing
axis order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from errors import ConfigurationError, DomainError, InfeasibleFrequencyError

logger = logging.getLogger(__name__)

MIN_GRID_POINTS = 8
FACES: Tuple[Tuple[int, int], ...] = ((0, -1), (0, 1), (1, -1), (1, 1), (2, -1), (2, 1))

# Relative slack when |xi| sits on the feasibility sphere.
_FEASIBILITY_RTOL = 1e-12


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Domain:
    """Box domain with its interior grid and boundary quadrature."""

    half_width: float
    n: int
    h: float
    boundary_points: np.ndarray = field(repr=False)
    boundary_normals: np.ndarray = field(repr=False)
    boundary_weights: np.ndarray = field(repr=False)
    # Lattice index of each node, interior indices run 0..n-1, faces sit at -1 and n.
    boundary_index: np.ndarray = field(repr=False)
    # Flat interior indices of the first and second interior points along -normal.
    inner1: np.ndarray = field(repr=False)
    inner2: np.ndarray = field(repr=False)

    @property
    def axis(self) -> np.ndarray:
        """Interior coordinates along one axis."""
        return -self.half_width + self.h * np.arange(1, self.n + 1)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @property
    def num_boundary(self) -> int:
        return int(self.boundary_weights.shape[0])

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    @property
    def L(self) -> float:
        """max |x| over the boundary (the box corner)."""
        return self.half_width * math.sqrt(3.0)

    @property
    def volume(self) -> float:
        return (2.0 * self.half_width) ** 3

    @property
    def surface_area(self) -> float:
        return 6.0 * (2.0 * self.half_width) ** 2

    @property
    def c3(self) -> float:
        return math.sqrt(self.volume)

    @property
    def c9(self) -> float:
        return self.surface_area / (2.0 * math.pi) ** 3

    def mesh(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Interior coordinate arrays, ``indexing="ij"``."""
        a = self.axis
        return np.meshgrid(a, a, a, indexing="ij")

    def same_grid(self, other: "Domain") -> bool:
        return self.n == other.n and self.half_width == other.half_width


def _face_weights(n: int, h: float) -> np.ndarray:
    # End cells reach the face edge: [-w, -w + 1.5h] and its mirror.
    w1 = np.full(n, h)
    w1[0] = w1[-1] = 1.5 * h
    return w1


def build_domain(half_width: float, n: int) -> Domain:
    """Build the box domain [-w, w]^3 with n interior points per axis."""
    try:
        half_width = float(half_width)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"half_width must be a number, got {half_width!r}") from exc
    if not math.isfinite(half_width) or half_width <= 0:
        raise ConfigurationError(f"half_width must be positive, got {half_width}")
    if int(n) != n or n < MIN_GRID_POINTS:
        raise ConfigurationError(f"n must be an integer >= {MIN_GRID_POINTS}, got {n}")
    n = int(n)
    h = 2.0 * half_width / (n + 1)

    tangential = np.arange(n)
    ti, tj = np.meshgrid(tangential, tangential, indexing="ij")
    ti, tj = ti.ravel(), tj.ravel()
    w1 = _face_weights(n, h)
    face_w = (w1[ti] * w1[tj])

    indices, normals, weights, inner1, inner2 = [], [], [], [], []
    for axis, side in FACES:
        others = [a for a in range(3) if a != axis]
        idx = np.empty((ti.size, 3), dtype=np.int64)
        idx[:, others[0]] = ti
        idx[:, others[1]] = tj
        idx[:, axis] = -1 if side < 0 else n
        nrm = np.zeros((ti.size, 3))
        nrm[:, axis] = float(side)

        first = idx.copy()
        second = idx.copy()
        first[:, axis] = 0 if side < 0 else n - 1
        second[:, axis] = 1 if side < 0 else n - 2

        indices.append(idx)
        normals.append(nrm)
        weights.append(face_w)
        inner1.append(np.ravel_multi_index(first.T, (n, n, n)))
        inner2.append(np.ravel_multi_index(second.T, (n, n, n)))

    index = np.concatenate(indices)
    points = -half_width + h * (index + 1).astype(float)
    domain = Domain(
        half_width=half_width,
        n=n,
        h=h,
        boundary_points=_frozen(points),
        boundary_normals=_frozen(np.concatenate(normals)),
        boundary_weights=_frozen(np.concatenate(weights)),
        boundary_index=_frozen(index),
        inner1=_frozen(np.concatenate(inner1)),
        inner2=_frozen(np.concatenate(inner2)),
    )
    logger.debug("Built domain w=%g n=%d h=%.4g with %d boundary nodes",
                 half_width, n, h, domain.num_boundary)
    return domain


# ---------------------------------------------------------------------
# Complex momenta
# ---------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class MomentumPair:
    """(k, l) in Theta_E: k^2 = l^2 = E, Im k = Im l, xi = k - l real."""

    k: np.ndarray
    l: np.ndarray
    xi: np.ndarray
    rho: float
    E: float

    @property
    def modulus(self) -> float:
        """|k| = (|Re k|^2 + |Im k|^2)^(1/2)."""
        return float(np.sqrt(np.sum(self.k.real ** 2) + np.sum(self.k.imag ** 2)))

    @property
    def omega(self) -> np.ndarray:
        """Unit direction of Im k."""
        return self.k.imag / self.rho

    def conjugate_reflection(self) -> "MomentumPair":
        """The pair (-conj k, -conj l) at -xi with the same rho."""
        k = -np.conj(self.k)
        l = -np.conj(self.l)
        return MomentumPair(k=_frozen(k), l=_frozen(l), xi=_frozen(-self.xi.copy()),
                            rho=self.rho, E=self.E)


def max_xi_radius(E: float, rho: float) -> float:
    """Largest |xi| reachable by a pair in Theta_E with |Im k| = rho."""
    s = float(E) + float(rho) ** 2
    if not s > 0:
        raise DomainError(f"E + rho^2 must be positive, got {s}")
    return 2.0 * math.sqrt(s)


def _frame(xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norm = float(np.linalg.norm(xi))
    if norm == 0.0:
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])
    e1 = xi / norm
    u = np.zeros(3)
    u[int(np.argmin(np.abs(e1)))] = 1.0
    e2 = np.cross(e1, u)
    e2 /= np.linalg.norm(e2)
    e3 = np.cross(e1, e2)
    return e2, e3


def make_theta_pair(E: float, rho: float, xi) -> MomentumPair:
    """Construct (k, l) in Theta_E with k - l = xi and |Im k| = rho.

    k = xi/2 + a e2 + i rho e3 with a = sqrt(E + rho^2 - |xi|^2/4) and
    (xi/|xi|, e2, e3) a right-handed orthonormal frame.
    """
    E = float(E)
    rho = float(rho)
    if not rho > 0:
        raise DomainError(f"rho must be positive, got {rho}")
    xi = np.asarray(xi, dtype=float).reshape(3)
    s = E + rho ** 2
    a2 = s - 0.25 * float(xi @ xi)
    if a2 < 0:
        if a2 < -_FEASIBILITY_RTOL * max(abs(s), 1.0):
            raise InfeasibleFrequencyError(
                f"|xi|={np.linalg.norm(xi):.6g} exceeds 2*sqrt(E+rho^2) for E={E:g}, rho={rho:g}"
            )
        a2 = 0.0
    e2, e3 = _frame(xi)
    a = math.sqrt(a2)
    k = 0.5 * xi + a * e2 + 1j * rho * e3
    l = k - xi
    return MomentumPair(k=_frozen(k), l=_frozen(l), xi=_frozen(xi.copy()), rho=rho, E=E)


def momentum_modulus(pair: MomentumPair) -> float:
    """|k| for a Theta_E pair; equals sqrt(E + 2 rho^2)."""
    expected = math.sqrt(pair.E + 2.0 * pair.rho ** 2)
    actual = pair.modulus
    if not math.isclose(actual, expected, rel_tol=1e-9, abs_tol=1e-12):
        raise DomainError(f"pair is off Theta_E: |k|={actual} but sqrt(E+2rho^2)={expected}")
    return actual
