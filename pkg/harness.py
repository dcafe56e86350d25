"""End-to-end experiments: fixtures, sweep rows, CSV output and calibration."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linprog

from errors import (
    CalibrationError,
    ConfigurationError,
    GelfandError,
    InfeasibleParametersError,
    NearEigenvalueError,
    NoConvergenceError,
)
from estimator import (
    DELTA_FLOOR,
    Constants,
    EstimatorParams,
    SamplingPlan,
    choose_r_l2,
    choose_rho,
    intermediate_l2,
    intermediate_linf,
    log_term,
    reconstruct_diff_lowfreq,
    rhs_theorem1,
    rhs_theorem2,
    sampling_plan,
)
from faddeev import FaddeevGreen
from forward import DirichletSolver, DtnMap, check_not_eigenvalue, delta_norm, dtn_map
from geometry import Domain, build_domain, make_theta_pair
from identity import verify_lemma21, verify_lemma32
from potential import FrequencyLattice, Potential, generate, norm
from run_config import FixtureConfig, RunConfig

logger = logging.getLogger(__name__)

CSV_SCHEMA_TAG = "# gelfand-sweep schema v"
CSV_SCHEMA_VERSION = 2
CONSTANTS_SCHEMA = "gelfand-constants v1"
CALIBRATION_INFLATION = 1.5
FIT_MARGIN = 1.1
MIN_TRAINING_ROWS = 30
MIN_TRAINING_ENERGIES = 3
MIN_TRAINING_FIXTURES = 3
JITTER_STEP = 1e-3
FIT_GRID = tuple(float(x) for x in np.logspace(-2, 2, 9))

NOT_APPLICABLE = "n/a"
MODE_L2 = "L2"
MODE_LINF = "Linf"


# ---------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Fixture:
    """A pair of potentials v1, v2 = v1 + scale * perturbation on one domain."""

    id: str
    scale: float
    v1: Potential
    v2: Potential

    @property
    def row_id(self) -> str:
        return f"{self.id}@{self.scale:g}"

    @property
    def N(self) -> float:
        return max(self.v1.linf_norm, self.v2.linf_norm)


def build_fixture(cfg: FixtureConfig, domain: Domain, scale: float, seed: int = 0) -> Fixture:
    base = generate(cfg.base.kind, cfg.base.params, cfg.seed + seed, domain, cfg.margin)
    bump = generate(cfg.perturbation.kind, cfg.perturbation.params, cfg.seed + seed + 1,
                    domain, cfg.margin)
    return Fixture(cfg.id, float(scale), base, base + bump.scaled(scale))


# ---------------------------------------------------------------------
# Report rows
# ---------------------------------------------------------------------
@dataclass
class EstimateReport:
    """One sweep row; field order is the CSV column order."""

    fixture_id: str
    scale: float
    E: float
    E_used: Optional[float] = None
    tau: float = 1.0
    m: float = 2.0
    mode: str = MODE_L2
    N: Optional[float] = None
    N_Hm: Optional[float] = None
    N_Wm: Optional[float] = None
    delta: Optional[float] = None
    rho: Optional[float] = None
    r: Optional[float] = None
    r_sample: Optional[float] = None
    rho_sample: Optional[float] = None
    xi_samples: Optional[int] = None
    error_l2: Optional[float] = None
    error_linf: Optional[float] = None
    rhs_theorem1: Optional[float] = None
    rhs_theorem2: Optional[float] = None
    intermediate_l2: Optional[float] = None
    intermediate_linf: Optional[float] = None
    identity_residual: Optional[float] = None
    lemma32_residual: Optional[float] = None
    implied_c1: Optional[float] = None
    implied_c5: Optional[float] = None
    implied_c6: Optional[float] = None
    reconstruction_error: Optional[float] = None
    pass_theorem1: str = ""
    pass_theorem2: str = ""
    status: str = "ok"
    note: str = ""
    timing: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def csv_columns(record_timing: bool = False) -> List[str]:
    names = [f.name for f in fields(EstimateReport)]
    return names if record_timing else [n for n in names if n != "timing"]


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.12g}"
    return str(value)


_INT_FIELDS = {"xi_samples"}
_FLOAT_FIELDS = {f.name for f in fields(EstimateReport)} - _INT_FIELDS - {
    "fixture_id", "mode", "pass_theorem1", "pass_theorem2", "status", "note"}


def report_from_row(row: Dict[str, str]) -> EstimateReport:
    values: Dict[str, Any] = {}
    for f in fields(EstimateReport):
        raw = row.get(f.name)
        if raw is None:
            continue
        if f.name in _FLOAT_FIELDS:
            values[f.name] = float(raw) if raw != "" else None
        elif f.name in _INT_FIELDS:
            values[f.name] = int(raw) if raw != "" else None
        else:
            values[f.name] = raw
    if "fixture_id" not in values or values.get("E") is None or values.get("scale") is None:
        raise ConfigurationError("CSV row lacks fixture_id, scale or E")
    return EstimateReport(**values)


def write_csv(rows: Sequence[EstimateReport], path: Union[str, Path],
              record_timing: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = csv_columns(record_timing)
    buffer = io.StringIO()
    buffer.write(f"{CSV_SCHEMA_TAG}{CSV_SCHEMA_VERSION}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        data = asdict(row)
        writer.writerow([_format(data[c]) for c in columns])
    path.write_text(buffer.getvalue(), encoding="utf-8")
    return path


def read_csv(path: Union[str, Path]) -> List[EstimateReport]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigurationError(f"rows file not found: {path}") from exc
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    for tag in (line for line in text.splitlines() if line.startswith(CSV_SCHEMA_TAG)):
        if tag != f"{CSV_SCHEMA_TAG}{CSV_SCHEMA_VERSION}":
            raise ConfigurationError(f"{path}: unsupported {tag[2:]!r}, "
                                     f"this version reads v{CSV_SCHEMA_VERSION}")
    return [report_from_row(r) for r in csv.DictReader(lines)]


# ---------------------------------------------------------------------
# Shared per-run state
# ---------------------------------------------------------------------
class _Memo:
    """Thread-safe compute-once cache keyed by tuples."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: Dict[Tuple, Tuple[threading.Lock, List[Any]]] = {}

    def get(self, key: Tuple, build: Callable[[], Any]) -> Any:
        with self._lock:
            entry = self._entries.get(key)
            if entry is None:
                entry = self._entries[key] = (threading.Lock(), [])
        lock, slot = entry
        with lock:
            if not slot:
                try:
                    slot.append((True, build()))
                except GelfandError as exc:
                    slot.append((False, exc))
        ok, value = slot[0]
        if not ok:
            raise value
        return value


@dataclass
class RunContext:
    cfg: RunConfig
    constants: Constants
    domain: Domain
    green: FaddeevGreen
    memo: _Memo = field(default_factory=_Memo)

    @classmethod
    def create(cls, cfg: RunConfig, constants: Optional[Constants] = None) -> "RunContext":
        domain = build_domain(cfg.domain.half_width, cfg.domain.n)
        constants = constants or Constants(c3=domain.c3)
        green = FaddeevGreen(domain, cfg.tolerances.padding, cfg.tolerances.oversample)
        return cls(cfg, constants, domain, green)

    def fixture(self, fixture_cfg: FixtureConfig, scale: float) -> Fixture:
        return self.memo.get(("fixture", fixture_cfg.id, scale),
                             lambda: build_fixture(fixture_cfg, self.domain, scale, self.cfg.seed))

    def resolve_energy(self, fx: Fixture, E: float) -> Tuple[float, int]:
        """First energy E + j * 1e-3 (1 + |E|) that is not a Dirichlet eigenvalue of v1 or v2."""
        def _search():
            attempts = self.cfg.tolerances.rejitter_attempts
            energy = float(E)
            last: Optional[NearEigenvalueError] = None
            for attempt in range(attempts + 1):
                try:
                    check_not_eigenvalue(self.domain, fx.v1, energy)
                    check_not_eigenvalue(self.domain, fx.v2, energy)
                    return energy, attempt
                except NearEigenvalueError as exc:
                    last = exc
                    energy += JITTER_STEP * (1.0 + abs(E))
                    logger.warning("E=%g is near an eigenvalue for %s; re-jittering to %g",
                                   exc.energy, fx.row_id, energy)
            raise last
        return self.memo.get(("energy", fx.row_id, float(E)), _search)

    def dtn(self, label: str, v: Potential, E: float) -> DtnMap:
        def _build():
            solver = DirichletSolver(self.domain, v, E, check=False,
                                     residual_rtol=self.cfg.tolerances.residual_rtol)
            return dtn_map(self.domain, v, E, workers=self.cfg.workers, solver=solver)
        return self.memo.get(("dtn", label, E), _build)


# ---------------------------------------------------------------------
# One sweep point
# ---------------------------------------------------------------------
@dataclass(frozen=True)
class SweepPoint:
    fixture_id: str
    scale: float
    E: float
    tau: float
    m: float
    mode: str = MODE_L2


def _identity_stage(ctx: RunContext, fx: Fixture, E: float, plan: SamplingPlan,
                    phi1: DtnMap, phi2: DtnMap, delta: float) -> Dict[str, Any]:
    """Identity residuals, implied constants and the low-frequency reconstruction.

    Every lattice point of ``plan`` is sampled; residuals are reported at
    xi = 0 and implied constants are the largest over all samples.
    """
    out: Dict[str, Any] = {}
    if fx.scale == 0:
        out.update(identity_residual=0.0, lemma32_residual=0.0, implied_c1=0.0,
                   reconstruction_error=0.0 if ctx.cfg.reconstruct else None)
        return out
    tol = ctx.cfg.tolerances
    samples: Dict[Tuple[int, int, int], complex] = {}
    c1_samples, c5_samples, c6_samples = [], [], []
    for offset, xi in zip(plan.offsets, plan.xis):
        key = tuple(int(p) for p in offset)
        pair = make_theta_pair(E, plan.rho, xi)
        check = verify_lemma32(fx.v1, fx.v2, pair, ctx.green, phi1, phi2,
                               tol.mu_tolerance, tol.mu_max_iterations)
        samples[key] = check.h_diff_boundary
        c5_samples.append(check.lemma31_ratio)
        c6_samples.append(check.lemma32_ratio)
        c1_samples.append(verify_lemma21(fx.v1, fx.v2, pair, delta).implied_c1)
        if key == (0, 0, 0):
            out.update(identity_residual=check.residual_identity,
                       lemma32_residual=check.residual_lemma32)
    out.update(implied_c1=max(c1_samples), implied_c5=max(c5_samples),
               implied_c6=max(c6_samples))
    logger.debug("%s: %d identity samples at rho=%g", fx.row_id, len(samples), plan.rho)

    if ctx.cfg.reconstruct:
        lattice = FrequencyLattice.for_domain(ctx.domain, tol.period_factor)
        recon, _ = reconstruct_diff_lowfreq(samples, plan.radius, lattice, ctx.domain)
        out["reconstruction_error"] = norm(recon - (fx.v2 - fx.v1), "L2")
    return out


def run_experiment(ctx: RunContext, fixture_cfg: FixtureConfig, point: SweepPoint) -> EstimateReport:
    """Full pipeline for one sweep point; failures come back as skipped rows."""
    started = time.perf_counter()
    report = EstimateReport(fixture_id=fixture_cfg.id, scale=point.scale, E=point.E,
                            tau=point.tau, m=point.m, mode=point.mode)
    notes: List[str] = []
    try:
        fx = ctx.fixture(fixture_cfg, point.scale)
        E, attempts = ctx.resolve_energy(fx, point.E)
        if attempts:
            notes.append(f"E re-jittered {attempts}x")
        report.E_used = E
        diff = fx.v2 - fx.v1
        N = fx.N
        report.N = N
        report.N_Hm = max(norm(fx.v1, "Hm", point.m), norm(fx.v2, "Hm", point.m))
        report.N_Wm = max(norm(fx.v1, "Wm", point.m), norm(fx.v2, "Wm", point.m))
        report.error_l2 = norm(diff, "L2")
        report.error_linf = norm(diff, "Linf")

        phi1 = ctx.dtn(f"{fixture_cfg.id}:base", fx.v1, E)
        phi2 = phi1 if point.scale == 0 else ctx.dtn(fx.row_id, fx.v2, E)
        delta = delta_norm(phi1, phi2)
        report.delta = delta
        if delta < DELTA_FLOOR:
            notes.append("delta floor binds")

        L = ctx.domain.L
        choice = choose_rho(point.tau, delta, L)
        rho = choice.rho
        report.rho = rho
        c = ctx.constants
        params = EstimatorParams(point.tau, E, delta, N, report.N_Hm, report.N_Wm,
                                 point.m, L, c)
        linf = point.mode == MODE_LINF
        report.pass_theorem1 = report.pass_theorem2 = NOT_APPLICABLE
        if not linf:
            try:
                report.rhs_theorem1 = rhs_theorem1(params)
                report.pass_theorem1 = _flag(report.error_l2 <= report.rhs_theorem1)
            except InfeasibleParametersError as exc:
                notes.append(f"theorem 1: {exc}")
        elif point.m > 3:
            try:
                report.rhs_theorem2 = rhs_theorem2(params)
                report.pass_theorem2 = _flag(report.error_linf <= report.rhs_theorem2)
            except InfeasibleParametersError as exc:
                notes.append(f"theorem 2: {exc}")

        if choice.degenerate:
            notes.append("statement mode (tau = 1)")
        elif E + rho ** 2 > 0:
            report.r = choose_r_l2(N, E, rho, c.c1)[0]
            if not linf:
                report.intermediate_l2 = intermediate_l2(E, rho, delta, N, report.N_Hm, point.m,
                                                         c.c1, L, c.r_star or None).value
            elif point.m > 3:
                report.intermediate_linf = intermediate_linf(
                    E, rho, delta, N, report.N_Wm, point.m, c.c1, c.c3, L, c.r_star or None
                ).value
            lattice = FrequencyLattice.for_domain(ctx.domain, ctx.cfg.tolerances.period_factor)
            plan = sampling_plan(E, rho, report.r, lattice)
            report.r_sample = plan.radius
            report.rho_sample = plan.rho
            report.xi_samples = len(plan.offsets)
            if plan.rho > rho:
                notes.append(f"sampling rho raised to {plan.rho:.4g}")
            if plan.rho * L > ctx.cfg.tolerances.rho_l_ceiling:
                notes.append("rho above ceiling")
            else:
                stage = ctx.memo.get(
                    ("identity", fx.row_id, E, plan.rho, plan.radius),
                    lambda: _identity_stage(ctx, fx, E, plan, phi1, phi2, delta),
                )
                for key, value in stage.items():
                    setattr(report, key, value)
    except NoConvergenceError as exc:
        report.status = "skipped"
        notes.append(f"faddeev: {exc}")
        logger.warning("%s@%g E=%g tau=%g m=%g skipped, Faddeev series diverges: %s",
                       report.fixture_id, point.scale, point.E, point.tau, point.m, exc)
    except GelfandError as exc:
        report.status = "skipped"
        notes.append(str(exc))
        logger.warning("%s@%g E=%g tau=%g m=%g skipped: %s",
                       report.fixture_id, point.scale, point.E, point.tau, point.m, exc)
    report.note = "; ".join(notes)
    report.timing = time.perf_counter() - started
    return report


def _flag(value: bool) -> str:
    return "pass" if value else "fail"


def sweep_points(cfg: RunConfig) -> List[Tuple[FixtureConfig, SweepPoint]]:
    """Sweep points in config order: fixture, scale, E, tau, then the L2 and L-infinity m axes."""
    axis = ([(m, MODE_L2) for m in cfg.sweep.ms_l2]
            + [(m, MODE_LINF) for m in cfg.sweep.ms_linf])
    points = []
    for fx in cfg.fixtures:
        for scale in cfg.sweep.scales:
            for E in cfg.sweep.energies:
                for tau in cfg.sweep.taus:
                    for m, mode in axis:
                        points.append((fx, SweepPoint(fx.id, scale, E, tau, m, mode)))
    return points


def sweep(cfg: RunConfig, constants: Optional[Constants] = None,
          workers: Optional[int] = None) -> List[EstimateReport]:
    """Run every sweep point; rows come back in config order."""
    if not cfg.fixtures:
        raise ConfigurationError("config defines no fixtures")
    ctx = RunContext.create(cfg, constants)
    points = sweep_points(cfg)
    workers = workers or cfg.workers
    logger.info("Sweep: %d points on n=%d with %d worker(s)", len(points), cfg.domain.n, workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda item: run_experiment(ctx, *item), points))
    else:
        rows = [run_experiment(ctx, fx, point) for fx, point in points]
    skipped = sum(1 for r in rows if not r.ok)
    logger.info("Sweep finished: %d rows, %d skipped", len(rows), skipped)
    return rows


# ---------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------
def _usable(rows: Iterable[EstimateReport]) -> List[EstimateReport]:
    return [r for r in rows if r.ok and r.error_l2 is not None and r.delta is not None]


def _check_training_set(rows: List[EstimateReport]):
    energies = {r.E for r in rows}
    fixtures = {r.fixture_id for r in rows}
    if len(rows) < MIN_TRAINING_ROWS or len(energies) < MIN_TRAINING_ENERGIES \
            or len(fixtures) < MIN_TRAINING_FIXTURES:
        raise CalibrationError(
            f"training set too small: {len(rows)} rows, {len(energies)} energies, "
            f"{len(fixtures)} fixtures (need {MIN_TRAINING_ROWS}, {MIN_TRAINING_ENERGIES}, "
            f"{MIN_TRAINING_FIXTURES})"
        )
    if all((r.error_l2 or 0.0) == 0.0 for r in rows):
        raise CalibrationError("training set is degenerate: every row has v1 = v2")


def _inflated_max(samples: Iterable[Optional[float]], default: float) -> float:
    values = [s for s in samples if s is not None and math.isfinite(s) and s > 0]
    return CALIBRATION_INFLATION * max(values) if values else default


def _energy_of(r: EstimateReport) -> float:
    return r.E_used if r.E_used is not None else r.E


def _label(r: EstimateReport) -> str:
    return f"{r.fixture_id}@{r.scale:g} E={r.E:g} tau={r.tau:g} m={r.m:g}"


def _fit_pair(rows: List[EstimateReport], error: Callable[[EstimateReport], float],
              terms: Callable[[EstimateReport, float, float], Optional[Tuple[float, float]]],
              label: str) -> Tuple[float, float, float, float]:
    """Minimise A + B over an (alpha, beta) grid subject to every row passing with margin."""
    best: Optional[Tuple[float, float, float, float]] = None
    worst: List[str] = []
    for alpha in FIT_GRID:
        for beta in FIT_GRID:
            a_ub, b_ub, bad = [], [], []
            for row in rows:
                coeffs = terms(row, alpha, beta)
                target = FIT_MARGIN * error(row)
                # None: the estimate is vacuous or n/a for this row at (alpha, beta)
                if coeffs is None or target == 0:
                    continue
                if not all(math.isfinite(c) for c in coeffs) or (coeffs[0] <= 0 and coeffs[1] <= 0):
                    bad.append(_label(row))
                    continue
                a_ub.append([-coeffs[0], -coeffs[1]])
                b_ub.append(-target)
            if bad:
                worst = bad
                continue
            if not a_ub:
                candidate = (1.0, 1.0, alpha, beta)
            else:
                res = linprog([1.0, 1.0], A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                              bounds=[(1e-12, None), (1e-12, None)], method="highs")
                if res.status != 0:
                    continue
                candidate = (float(res.x[0]), float(res.x[1]), alpha, beta)
            if best is None or candidate[0] + candidate[1] < best[0] + best[1]:
                best = candidate
    if best is None:
        raise CalibrationError(f"no {label} constants satisfy the training rows", sorted(set(worst)))
    return best


def _lambda_of(row: EstimateReport, alpha: float, beta: float) -> Optional[float]:
    E = _energy_of(row)
    if E < 0 and row.tau >= 1:
        return None
    lam = alpha * E + beta * (1.0 - row.tau) ** 2 * log_term(row.delta) ** 2
    return lam if lam > 0 else None


def _terms_l2(row: EstimateReport, alpha: float, beta: float) -> Optional[Tuple[float, float]]:
    lam = _lambda_of(row, alpha, beta)
    if lam is None:
        return None
    holder = math.sqrt(lam) * row.delta ** row.tau if row.delta > 0 else 0.0
    tail = (1.0 + row.N) ** (4.0 * row.m / 3.0) * row.N_Hm * lam ** (-row.m / 3.0)
    return holder, tail


def _terms_linf(row: EstimateReport, alpha: float, beta: float) -> Optional[Tuple[float, float]]:
    lam = _lambda_of(row, alpha, beta)
    if lam is None:
        return None
    holder = math.sqrt(lam) * row.delta ** row.tau if row.delta > 0 else 0.0
    tail = ((1.0 + row.N) ** (2.0 * (row.m - 3.0) / 3.0) * row.N_Wm / (row.m - 3.0)
            * lam ** (-(row.m - 3.0) / 6.0))
    return holder, tail


def calibrate(cfg: RunConfig, training_rows: Sequence[EstimateReport]) -> Tuple[Constants, Dict[str, Any]]:
    """Fit witnesses for the constants and return them with a JSON-ready record."""
    rows = _usable(training_rows)
    _check_training_set(rows)
    domain = build_domain(cfg.domain.half_width, cfg.domain.n)

    c1 = _inflated_max((r.implied_c1 for r in rows), 1.0)
    c5 = _inflated_max((r.implied_c5 for r in rows), 1.0)
    c6 = _inflated_max((r.implied_c6 for r in rows), 1.0)
    l2_rows = [r for r in rows if r.mode == MODE_L2]
    linf_rows = [r for r in rows if r.mode == MODE_LINF and r.m > 3 and r.N_Wm is not None]
    c4 = _inflated_max(
        (r.error_linf * (r.m - 3.0) / (math.exp(r.m - 3.0) * r.N_Wm)
         for r in linf_rows if r.N_Wm and r.error_linf is not None), 1.0)
    floors = [(_energy_of(r) + r.rho ** 2) / (1.0 + r.N) ** 2
              for r in rows if r.identity_residual is not None and r.rho]
    r_star = min(floors) if floors else 0.0

    if l2_rows:
        A, B, alpha, beta = _fit_pair(l2_rows, lambda r: r.error_l2, _terms_l2, "L2")
    else:
        A = B = alpha = beta = 1.0
    if linf_rows:
        A_t, B_t, alpha_t, beta_t = _fit_pair(linf_rows, lambda r: r.error_linf,
                                              _terms_linf, "L-infinity")
    else:
        A_t = B_t = alpha_t = beta_t = 1.0

    constants = Constants(c1=c1, c3=domain.c3, c4=c4, c5=c5, c6=c6, r_star=r_star,
                          A=A, B=B, alpha=alpha, beta=beta,
                          A_t=A_t, B_t=B_t, alpha_t=alpha_t, beta_t=beta_t)
    record = {
        "schema": CONSTANTS_SCHEMA,
        "constants": constants.to_dict(),
        "provenance": {
            "rows": len(rows),
            "energies": sorted({r.E for r in rows}),
            "fixtures": sorted({r.fixture_id for r in rows}),
            "domain": {"half_width": cfg.domain.half_width, "n": cfg.domain.n},
            "seed": cfg.seed,
            "inflation": CALIBRATION_INFLATION,
            "fit_margin": FIT_MARGIN,
        },
    }
    logger.info("Calibrated constants on %d rows: c1=%.3g A=%.3g B=%.3g",
                len(rows), c1, A, B)
    return constants, record


def save_constants(record: Dict[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_constants(path: Union[str, Path]) -> Constants:
    path = Path(path)
    try:
        record = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigurationError(f"constants file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    if record.get("schema") != CONSTANTS_SCHEMA or "constants" not in record:
        raise ConfigurationError(f"{path}: not a {CONSTANTS_SCHEMA} record")
    return Constants.from_dict(record["constants"])


def evaluate_holdout(rows: Sequence[EstimateReport], constants: Constants, L: float) -> Dict[str, float]:
    """Pass rates of both estimates and of the c1 / c6 lemma bounds on rows not used for fitting."""
    passed1 = passed2 = total1 = total2 = 0
    usable = _usable(rows)
    for r in usable:
        params = EstimatorParams(r.tau, _energy_of(r), r.delta, r.N, r.N_Hm, r.N_Wm, r.m, L,
                                 constants)
        if r.mode == MODE_L2:
            try:
                total1 += 1
                passed1 += r.error_l2 <= rhs_theorem1(params)
            except InfeasibleParametersError:
                total1 -= 1
        elif r.m > 3:
            try:
                total2 += 1
                passed2 += r.error_linf <= rhs_theorem2(params)
            except InfeasibleParametersError:
                total2 -= 1
    c1_samples = [r.implied_c1 for r in usable if r.implied_c1 is not None]
    c6_samples = [r.implied_c6 for r in usable if r.implied_c6 is not None]
    return {
        "theorem1": passed1 / total1 if total1 else 1.0,
        "theorem2": passed2 / total2 if total2 else 1.0,
        "lemma21": _share(c <= constants.c1 for c in c1_samples),
        "lemma32": _share(c <= constants.c6 for c in c6_samples),
        "rows": float(total1 + total2),
    }


def _share(flags: Iterable[bool]) -> float:
    flags = list(flags)
    return sum(flags) / len(flags) if flags else 1.0


# ---------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------
PLOT_FILES = {
    "error_vs_E.csv": ("E", "error_l2"),
    "error_vs_delta.csv": ("delta", "error_l2"),
    "rhs_vs_E.csv": ("E", "rhs_theorem1"),
}


def write_plot_data(rows: Sequence[EstimateReport], out_dir: Union[str, Path]) -> List[Path]:
    """Two-column CSVs, one per figure, sorted by the x column."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (x_col, y_col) in PLOT_FILES.items():
        pairs = sorted(
            (getattr(r, x_col), getattr(r, y_col)) for r in rows
            if r.ok and getattr(r, x_col) is not None and getattr(r, y_col) is not None
        )
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow([x_col, y_col])
        for x, y in pairs:
            writer.writerow([_format(x), _format(y)])
        path = out_dir / name
        path.write_text(buffer.getvalue(), encoding="utf-8")
        written.append(path)
    return written


def summarize(rows: Sequence[EstimateReport]) -> List[Dict[str, Any]]:
    """Per-fixture counts and pass rates, in first-seen order."""
    summary: Dict[str, Dict[str, Any]] = {}
    for r in rows:
        entry = summary.setdefault(r.fixture_id, {"fixture": r.fixture_id, "rows": 0,
                                                  "skipped": 0, "pass1": 0, "fail1": 0,
                                                  "pass2": 0, "fail2": 0, "max_identity": 0.0})
        entry["rows"] += 1
        entry["skipped"] += 0 if r.ok else 1
        entry["pass1"] += r.pass_theorem1 == "pass"
        entry["fail1"] += r.pass_theorem1 == "fail"
        entry["pass2"] += r.pass_theorem2 == "pass"
        entry["fail2"] += r.pass_theorem2 == "fail"
        if r.identity_residual is not None:
            entry["max_identity"] = max(entry["max_identity"], r.identity_residual)
    return list(summary.values())
