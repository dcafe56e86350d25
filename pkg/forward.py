"""Finite-difference Dirichlet solver and the Dirichlet-to-Neumann map.

The interior operator is the 7-point ``-Laplace_h + v - E`` on the n^3 grid.
A boundary node couples to its single interior neighbour with weight 1/h^2,
so Dirichlet data enters the right-hand side through a sparse n^3 x M
coupling matrix. Normal derivatives use the one-sided second-order stencil

    d psi / d nu ~ (3 g - 4 u(x - h nu) + u(x - 2 h nu)) / (2 h).

DtN kernels are stored as densities with respect to the boundary
quadrature: ``(Phi g)_i = sum_j kernel[i, j] * w_j * g_j``.
"""

from __future__ import annotations

import hashlib
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, onenormest, splu

from errors import ConfigurationError, IncompatibilityError, NearEigenvalueError, SolverError
from geometry import Domain
from potential import Potential

logger = logging.getLogger(__name__)

EIGEN_GUARD_RTOL = 1e-8
RESIDUAL_RTOL = 1e-10
DEFAULT_CHUNK = 256

DTN_MAGIC = "GELFAND-DTN"
DTN_VERSION = "v1"


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _potential_values(domain: Domain, v: Optional[Potential]) -> np.ndarray:
    if v is None:
        return np.zeros(domain.n ** 3)
    if not v.domain.same_grid(domain):
        raise IncompatibilityError("potential and domain use different grids")
    return v.values.ravel()


def interior_operator(domain: Domain, v: Optional[Potential], E: float) -> sp.csc_matrix:
    """Sparse ``-Laplace_h + v - E`` on the flattened (C-order) interior grid."""
    n, h = domain.n, domain.h
    main = np.full(n, 2.0 / h ** 2)
    off = np.full(n - 1, -1.0 / h ** 2)
    t = sp.diags([off, main, off], [-1, 0, 1], format="csr")
    eye = sp.identity(n, format="csr")
    lap = (sp.kron(sp.kron(t, eye), eye)
           + sp.kron(sp.kron(eye, t), eye)
           + sp.kron(sp.kron(eye, eye), t))
    shift = sp.diags(_potential_values(domain, v) - float(E))
    return sp.csc_matrix(lap + shift)


def boundary_coupling(domain: Domain) -> sp.csc_matrix:
    """n^3 x M matrix moving boundary data into the interior right-hand side."""
    m = domain.num_boundary
    data = np.full(m, 1.0 / domain.h ** 2)
    return sp.csc_matrix((data, (domain.inner1, np.arange(m))), shape=(domain.n ** 3, m))


def _guard_threshold(op: sp.spmatrix) -> float:
    return EIGEN_GUARD_RTOL * float(np.max(np.abs(op.diagonal())))


def _smallest_eigenvalue_modulus(op: sp.csc_matrix) -> float:
    try:
        vals = eigsh(op, k=1, sigma=0.0, which="LM", v0=np.ones(op.shape[0]),
                     return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        if exc.eigenvalues is None or len(exc.eigenvalues) == 0:
            raise SolverError("eigenvalue guard did not converge") from exc
        vals = exc.eigenvalues
    except RuntimeError as exc:
        # Exactly singular factorisation during shift-invert.
        logger.debug("shift-invert failed (%s); treating operator as singular", exc)
        return 0.0
    return float(np.min(np.abs(vals)))


def check_not_eigenvalue(domain: Domain, v: Optional[Potential], E: float,
                         raise_on_failure: bool = True) -> float:
    """Distance from E to the Dirichlet spectrum of the discrete operator.

    The operator is symmetric, so the smallest singular value of
    ``-Laplace_h + v - E`` is the smallest eigenvalue modulus.
    """
    op = interior_operator(domain, v, E)
    margin = _smallest_eigenvalue_modulus(op)
    threshold = _guard_threshold(op)
    if margin < threshold and raise_on_failure:
        raise NearEigenvalueError(margin, threshold, float(E))
    return margin


def discrete_dirichlet_eigenvalue(domain: Domain) -> float:
    """Smallest eigenvalue of -Laplace_h on the box (closed form)."""
    n, h = domain.n, domain.h
    return 3.0 * (4.0 / h ** 2) * np.sin(np.pi / (2.0 * (n + 1))) ** 2


# ---------------------------------------------------------------------
# Dirichlet solver
# ---------------------------------------------------------------------
class DirichletSolver:
    """One LU factorisation of the interior operator for a fixed (v, E)."""

    def __init__(self, domain: Domain, v: Optional[Potential], E: float,
                 check: bool = True, residual_rtol: float = RESIDUAL_RTOL):
        self.domain = domain
        self.E = float(E)
        self.residual_rtol = residual_rtol
        self.operator = interior_operator(domain, v, E)
        self.coupling = boundary_coupling(domain)
        self.margin = check_not_eigenvalue(domain, v, E) if check else None
        try:
            self._lu = splu(self.operator)
        except RuntimeError as exc:
            raise SolverError(f"factorisation failed at E={self.E:g}: {exc}",
                              self.condition_estimate()) from exc

    def condition_estimate(self) -> Optional[float]:
        try:
            lu = splu(self.operator)
            inv = LinearOperator(self.operator.shape, matvec=lu.solve,
                                 rmatvec=lambda x: lu.solve(x, trans="T"), dtype=float)
            return float(onenormest(self.operator) * onenormest(inv))
        except RuntimeError:
            return float("inf")

    def _solve_real(self, rhs: np.ndarray) -> np.ndarray:
        u = self._lu.solve(rhs)
        residual = self.operator @ u - rhs
        scale = max(float(np.max(np.abs(rhs))), np.finfo(float).tiny)
        rel = float(np.max(np.abs(residual))) / scale
        if not np.all(np.isfinite(u)) or rel > self.residual_rtol:
            raise SolverError(f"residual {rel:.2e} above {self.residual_rtol:.0e}",
                              self.condition_estimate())
        return u

    def solve_flat(self, g: np.ndarray) -> np.ndarray:
        """Interior solution (flattened) for boundary data g, real or complex.

        ``g`` may be a vector of length M or an M x b block of columns.
        """
        g = np.asarray(g)
        if g.shape[0] != self.domain.num_boundary:
            raise IncompatibilityError(
                f"boundary data has {g.shape[0]} values, domain has {self.domain.num_boundary}"
            )
        if not np.any(g):
            return np.zeros((self.domain.n ** 3,) + g.shape[1:], dtype=g.dtype)
        if np.iscomplexobj(g):
            re_part = self._solve_real(np.asarray(self.coupling @ g.real))
            im_part = self._solve_real(np.asarray(self.coupling @ g.imag))
            return re_part + 1j * im_part
        return self._solve_real(np.asarray(self.coupling @ g.astype(float)))

    def solve(self, g: np.ndarray) -> np.ndarray:
        return self.solve_flat(g).reshape(self.domain.shape)

    def normal_derivative(self, u_flat: np.ndarray, g: np.ndarray) -> np.ndarray:
        dom = self.domain
        return (3.0 * g - 4.0 * u_flat[dom.inner1] + u_flat[dom.inner2]) / (2.0 * dom.h)

    def neumann_data(self, g: np.ndarray) -> np.ndarray:
        """Outward normal derivative of the solution with Dirichlet data g."""
        g = np.asarray(g)
        return self.normal_derivative(self.solve_flat(g), g)

    def _dtn_block(self, start: int, stop: int) -> np.ndarray:
        dom = self.domain
        cols = np.arange(start, stop)
        rhs = self.coupling[:, start:stop].toarray()
        u = self._solve_real(rhs)
        block = -4.0 * u[dom.inner1] + u[dom.inner2]
        block[cols, cols - start] += 3.0
        block /= 2.0 * dom.h
        return block / dom.boundary_weights[start:stop]


def solve_dirichlet(domain: Domain, v: Optional[Potential], E: float,
                    g: np.ndarray) -> np.ndarray:
    """Interior grid field solving the discrete Dirichlet problem with data g."""
    return DirichletSolver(domain, v, E).solve(g)


# ---------------------------------------------------------------------
# DtN map
# ---------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class DtnMap:
    domain: Domain
    E: float
    kernel: np.ndarray = field(repr=False)
    quadrature: np.ndarray = field(repr=False)

    def apply(self, g: np.ndarray) -> np.ndarray:
        return self.kernel @ (self.quadrature * np.asarray(g))

    def matrix(self) -> np.ndarray:
        """Plain matrix K with (Phi g)_i = sum_j K_ij g_j."""
        return self.kernel * self.quadrature[None, :]

    def checksum(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.kernel, dtype="<f8").tobytes())
        digest.update(np.ascontiguousarray(self.quadrature, dtype="<f8").tobytes())
        return digest.hexdigest()

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        header = (f"{DTN_MAGIC} {DTN_VERSION} n={self.domain.n} "
                  f"half_width={self.domain.half_width!r} E={self.E!r} "
                  f"checksum={self.checksum()}\n")
        with path.open("wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(np.ascontiguousarray(self.kernel, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.quadrature, dtype="<f8").tobytes())
        return path

    @classmethod
    def load(cls, path: Union[str, Path], domain: Domain) -> "DtnMap":
        raw = Path(path).read_bytes()
        line, sep, body = raw.partition(b"\n")
        text = line.decode("ascii", errors="replace")
        if not sep or not text.startswith(f"{DTN_MAGIC} {DTN_VERSION}"):
            raise ConfigurationError(f"{path}: not a {DTN_MAGIC} {DTN_VERSION} file")
        fields = dict(re.findall(r"(\w+)=(\S+)", text))
        try:
            n, half_width, E = int(fields["n"]), float(fields["half_width"]), float(fields["E"])
            checksum = fields["checksum"]
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"{path}: malformed header {text!r}") from exc
        if n != domain.n or half_width != domain.half_width:
            raise IncompatibilityError(f"{path}: stored grid (n={n}, w={half_width}) "
                                       f"does not match the domain")
        m = domain.num_boundary
        values = np.frombuffer(body, dtype="<f8")
        if values.size != m * m + m:
            raise ConfigurationError(f"{path}: truncated kernel payload")
        dtn = cls(domain, E, _frozen(values[: m * m].reshape(m, m).copy()),
                  _frozen(values[m * m:].copy()))
        if dtn.checksum() != checksum:
            raise ConfigurationError(f"{path}: checksum mismatch")
        return dtn


def dtn_map(domain: Domain, v: Optional[Potential], E: float, workers: int = 1,
            chunk: int = DEFAULT_CHUNK, solver: Optional[DirichletSolver] = None) -> DtnMap:
    """Assemble the DtN kernel column by column from boundary impulses."""
    started = time.perf_counter()
    solver = solver or DirichletSolver(domain, v, E)
    m = domain.num_boundary
    kernel = np.empty((m, m))
    bounds = [(s, min(s + chunk, m)) for s in range(0, m, chunk)]

    def _fill(span: Tuple[int, int]):
        start, stop = span
        kernel[:, start:stop] = solver._dtn_block(start, stop)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_fill, bounds))
    else:
        for span in bounds:
            _fill(span)
    if not np.all(np.isfinite(kernel)):
        raise SolverError("DtN kernel has non-finite entries")
    logger.info("DtN map n=%d E=%g assembled (%d nodes) in %.2fs",
                domain.n, E, m, time.perf_counter() - started)
    return DtnMap(domain, float(E), _frozen(kernel), domain.boundary_weights)


def delta_norm(phi1: DtnMap, phi2: DtnMap) -> float:
    """Quadrature-weighted induced infinity-norm of phi2 - phi1."""
    if not phi1.domain.same_grid(phi2.domain):
        raise IncompatibilityError("DtN maps built on different grids")
    if phi1.E != phi2.E:
        raise IncompatibilityError(f"DtN maps at different energies {phi1.E} and {phi2.E}")
    rows = np.abs(phi2.kernel - phi1.kernel) @ phi1.quadrature
    return float(np.max(rows))
