"""Command-line entry point: ``python cli.py <command> [options]``.

Exit codes: 0 on success, 1 when a verification fails or a lab error occurs,
2 on a configuration error or bad usage.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import click
import numpy as np
from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

import harness
from errors import ConfigurationError, GelfandError
from faddeev import FaddeevGreen, lemma31_ratio, mu_l2_defect, scattering_h, solve_mu
from forward import DirichletSolver, delta_norm, dtn_map
from geometry import build_domain, make_theta_pair
from potential import fourier_at
from run_config import (
    apply_env,
    default_config,
    env_log_level,
    load_config,
    resolve_output_dir,
)
from suites import SUITES, run_suite

logger = logging.getLogger("gelfand")
console = Console()

EXIT_FAILED = 1
EXIT_CONFIG = 2


def _setup_logging(level: str):
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _load(config_path: Optional[str]):
    if config_path is None:
        return apply_env(default_config())
    return load_config(config_path)


def _fail(exc: GelfandError):
    code = EXIT_CONFIG if isinstance(exc, ConfigurationError) else EXIT_FAILED
    logger.error("%s", exc)
    sys.exit(code)


@click.group()
@click.option("--log-level", default=None,
              help="Logging level (default: GELFAND_LOG_LEVEL or INFO).")
def cli(log_level: Optional[str]):
    """Numerical lab for stability of the Gel'fand inverse boundary value problem."""
    _setup_logging(log_level or env_log_level())


# ---------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------
@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--fixture", "fixture_id", required=True, help="Fixture id from the config.")
@click.option("--energy", type=float, required=True)
@click.option("--scale", type=float, default=1.0, show_default=True)
@click.option("--save-dtn", type=click.Path(), default=None,
              help="Write the DtN map of v2 to this file.")
def forward(config_path, fixture_id, energy, scale, save_dtn):
    """Assemble both DtN maps of a fixture and print delta."""
    try:
        cfg = _load(config_path)
        domain = build_domain(cfg.domain.half_width, cfg.domain.n)
        fx = harness.build_fixture(cfg.fixture(fixture_id), domain, scale, cfg.seed)
        solver = DirichletSolver(domain, fx.v1, energy)
        phi1 = dtn_map(domain, fx.v1, energy, workers=cfg.workers, solver=solver)
        phi2 = dtn_map(domain, fx.v2, energy, workers=cfg.workers)
        delta = delta_norm(phi1, phi2)
        if save_dtn:
            phi2.save(save_dtn)
            logger.info("DtN map written to %s", save_dtn)
    except GelfandError as exc:
        _fail(exc)
    console.print(f"fixture={fx.row_id} E={energy:g} nodes={domain.num_boundary} "
                  f"margin={solver.margin:.6g} delta={delta:.6e}")


# ---------------------------------------------------------------------
# faddeev
# ---------------------------------------------------------------------
@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--fixture", "fixture_id", required=True)
@click.option("--energy", type=float, default=1.0, show_default=True)
@click.option("--rho", type=float, required=True)
@click.option("--xi", nargs=3, type=float, default=(0.0, 0.0, 0.0), show_default=True)
def faddeev(config_path, fixture_id, energy, rho, xi):
    """mu convergence and h(k, l) against the Fourier transform of v1."""
    try:
        cfg = _load(config_path)
        domain = build_domain(cfg.domain.half_width, cfg.domain.n)
        fx = harness.build_fixture(cfg.fixture(fixture_id), domain, 1.0, cfg.seed)
        tol = cfg.tolerances
        green = FaddeevGreen(domain, tol.padding, tol.oversample)
        pair = make_theta_pair(energy, rho, np.asarray(xi))
        state = solve_mu(fx.v1, pair.k, green, tol.mu_tolerance, tol.mu_max_iterations)
        h = scattering_h(fx.v1, state, pair)
        vhat = fourier_at(fx.v1, pair.xi)
    except GelfandError as exc:
        _fail(exc)
    table = Table(title=f"mu for {fixture_id} at |k| = {state.k_modulus:.4g}")
    table.add_column("quantity")
    table.add_column("value", justify="right")
    for name, value in (
        ("iterations", state.iterations),
        ("contraction", f"{state.contraction_estimate:.4g}"),
        ("||mu - 1||_L2", f"{mu_l2_defect(state):.4e}"),
        ("sup|mu| / (1+N)", f"{lemma31_ratio(state, fx.v1.linf_norm):.4g}"),
        ("h(k, l)", f"{h:.6e}"),
        ("v^(xi)", f"{vhat:.6e}"),
        ("|h - v^|", f"{abs(h - vhat):.4e}"),
    ):
        table.add_row(name, str(value))
    console.print(table)


# ---------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------
@cli.command()
@click.option("--suite", type=click.Choice(sorted(SUITES)), default="trivial", show_default=True)
def verify(suite):
    """Run a named verification suite."""
    try:
        results = run_suite(suite)
    except GelfandError as exc:
        _fail(exc)
    table = Table(title=f"suite: {suite}")
    table.add_column("check")
    table.add_column("result")
    table.add_column("detail")
    for r in results:
        table.add_row(r.name, "[green]pass[/]" if r.passed else "[red]FAIL[/]", r.detail)
    console.print(table)
    failed = [r.name for r in results if not r.passed]
    if failed:
        logger.error("%d of %d checks failed: %s", len(failed), len(results), ", ".join(failed))
        sys.exit(EXIT_FAILED)
    logger.info("%d checks passed", len(results))


# ---------------------------------------------------------------------
# sweep / calibrate / report
# ---------------------------------------------------------------------
@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--workers", type=int, default=None,
              help="Worker threads (beats GELFAND_WORKERS and the config).")
@click.option("--output", type=click.Path(), default=None, help="Output directory.")
@click.option("--constants", "constants_path", type=click.Path(), default=None,
              help="Constants record used for the pass flags.")
def sweep(config_path, seed, workers, output, constants_path):
    """Run the full verification grid and write sweep.csv."""
    try:
        cfg = _load(config_path)
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        if workers is not None:
            if workers < 1:
                raise ConfigurationError("--workers must be >= 1")
            cfg = replace(cfg, workers=workers)
        constants = None
        path = constants_path or cfg.constants_path
        if path:
            constants = harness.load_constants(path)
        rows = harness.sweep(cfg, constants)
        out = harness.write_csv(rows, resolve_output_dir(cfg, output) / "sweep.csv",
                                cfg.record_timing)
    except GelfandError as exc:
        _fail(exc)
    logger.info("%d rows written to %s", len(rows), out)


@cli.command()
@click.option("--rows", "rows_path", type=click.Path(), required=True)
@click.option("--output", type=click.Path(), default="constants.json", show_default=True)
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--holdout", "holdout_path", type=click.Path(), default=None,
              help="Rows to evaluate the fitted constants on.")
def calibrate(rows_path, output, config_path, holdout_path):
    """Fit constants on training rows and write the JSON record."""
    try:
        cfg = _load(config_path)
        constants, record = harness.calibrate(cfg, harness.read_csv(rows_path))
        if holdout_path:
            domain = build_domain(cfg.domain.half_width, cfg.domain.n)
            rates = harness.evaluate_holdout(harness.read_csv(holdout_path), constants, domain.L)
            record["holdout"] = rates
            console.print(f"holdout pass rate: L2 {rates['theorem1']:.1%}, "
                          f"Linf {rates['theorem2']:.1%} over {int(rates['rows'])} rows; "
                          f"c1 bound {rates['lemma21']:.1%}, c6 bound {rates['lemma32']:.1%}")
        harness.save_constants(record, output)
    except GelfandError as exc:
        _fail(exc)
    console.print_json(json.dumps(record["constants"]))
    logger.info("constants written to %s", output)


@cli.command()
@click.option("--rows", "rows_path", type=click.Path(), required=True)
@click.option("--output-dir", type=click.Path(), default=None,
              help="Where the plot-data CSVs go (default: next to the rows file).")
def report(rows_path, output_dir):
    """Summary table and plot-data files from a sweep CSV."""
    try:
        rows = harness.read_csv(rows_path)
    except GelfandError as exc:
        _fail(exc)
    table = Table(title=f"sweep summary ({len(rows)} rows)")
    for column in ("fixture", "rows", "skipped", "L2 pass", "L2 fail", "Linf pass",
                   "Linf fail", "max identity mismatch"):
        table.add_column(column, justify="right" if column != "fixture" else "left")
    for entry in harness.summarize(rows):
        table.add_row(entry["fixture"], str(entry["rows"]), str(entry["skipped"]),
                      str(entry["pass1"]), str(entry["fail1"]), str(entry["pass2"]),
                      str(entry["fail2"]), f"{entry['max_identity']:.3e}")
    console.print(table)
    target = Path(output_dir) if output_dir else Path(rows_path).parent
    for path in harness.write_plot_data(rows, target):
        logger.info("plot data: %s", path)


def main():
    load_dotenv()
    cli(prog_name="gelfand")


if __name__ == "__main__":
    main()
