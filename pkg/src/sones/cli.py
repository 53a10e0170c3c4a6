"""Command-line front end.

Exit codes: 0 success, 1 the Hurwitz check came out negative, 2 configuration
or validation error (including frequency violations and an exhausted
frequency search), 3 numerical failure.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ProcessPoolExecutor

import click
import numpy as np

from . import probing
from .errors import FrequencyError, ScenarioError, SearchExhaustedError, SonesError
from .estimation import estimate_hessian, estimate_hessian_column, estimate_third_slice
from .levelset import level_set_grid, write_grid_csv
from .maps import BUILTIN_MAPS, derivative_bundle
from .scenario import (
    bundled_scenario_text,
    hurwitz_report,
    load_scenario,
    parse_scenario,
    run_scenario,
)

EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    config = isinstance(exc, (ScenarioError, FrequencyError, ValueError, OSError))
    sys.exit(EXIT_CONFIG if config else EXIT_NUMERIC)


def _load(path: str):
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        return parse_scenario(bundled_scenario_text(name), name=name)
    return load_scenario(path)


def _run_one(args):
    path, out_dir, averaged = args
    written = run_scenario(_load(path), out_dir, averaged=averaged)
    return {k: str(v) for k, v in written.items()}


@click.group()
def main():
    """Second-order Newton extremum seeking: simulation and analysis tools."""


@main.command()
@click.argument("scenarios", nargs=-1, required=True)
@click.option("--averaged", is_flag=True, help="Integrate the averaged system and report its equilibrium.")
@click.option("--out-dir", default=".", type=click.Path(file_okay=False), show_default=True)
@click.option("--jobs", default=1, show_default=True, help="Run independent scenarios in parallel.")
def run(scenarios, averaged, out_dir, jobs):
    """Run scenario files (or builtin:NAME) and write their outputs."""
    tasks = [(s, out_dir, averaged) for s in scenarios]
    try:
        if jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_one, tasks))
        else:
            results = [_run_one(t) for t in tasks]
    except (SonesError, OSError) as exc:
        _fail(exc)
    for path, written in zip(scenarios, results):
        click.echo(json.dumps({"scenario": path, "outputs": written}))


@main.command()
@click.argument("scenario")
@click.option("--theta", default=None, help="Comma-separated point; defaults to the scenario's theta_star.")
def estimate(scenario, theta):
    """Open-loop derivative estimates next to the exact values, as JSON."""
    try:
        s = _load(scenario)
        h = s.build_map()
        point = np.array([float(v) for v in theta.split(",")]) if theta else np.array(s.theta_star or s.initial.theta)
        exact = derivative_bundle(h, point)
        m = s.probing.axis
        report = {
            "theta": point.tolist(),
            "axis": m + 1,
            "hessian": {"estimate": estimate_hessian(h, point, s.probing).tolist(), "exact": exact.hessian.tolist()},
            "hessian_column": {
                "estimate": estimate_hessian_column(h, point, s.probing).tolist(),
                "exact": exact.hessian_column(m).tolist(),
            },
        }
        if not probing.validate_frequencies(s.probing.frequencies, probing.FULL):
            report["third_slice"] = {
                "estimate": estimate_third_slice(h, point, s.probing).tolist(),
                "exact": exact.third_slice(m).tolist(),
            }
    except SonesError as exc:
        _fail(exc)
    click.echo(json.dumps(report, indent=2))


@main.command("check-frequencies")
@click.argument("omegas", nargs=-1, required=True)
@click.option("--level", type=click.Choice(probing.LEVELS), default=probing.FULL, show_default=True)
def check_frequencies(omegas, level):
    """Validate rational probing frequencies (e.g. 500 300 or 7/2 5)."""
    try:
        violations = probing.validate_frequencies(omegas, level)
    except (ValueError, ZeroDivisionError) as exc:
        _fail(ScenarioError(str(exc)))
    for v in violations:
        click.echo(str(v))
    if violations:
        sys.exit(EXIT_CONFIG)
    click.echo(f"ok: {level} conditions satisfied")


@main.command("search-frequencies")
@click.option("--p", "p", type=int, required=True)
@click.option("--low", type=int, default=1, show_default=True)
@click.option("--high", type=int, required=True)
@click.option("--level", type=click.Choice(probing.LEVELS), default=probing.FULL, show_default=True)
def search_frequencies(p, low, high, level):
    """Smallest valid integer frequency tuple in [low, high]^p."""
    try:
        found = probing.search_frequencies(p, low, high, level)
    except SearchExhaustedError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except SonesError as exc:
        _fail(exc)
    click.echo(" ".join(str(w) for w in found))


@main.command()
@click.option("--builtin", "builtin", default="paper_example", show_default=True, type=click.Choice(sorted(BUILTIN_MAPS)))
@click.option("--theta-star", default="1,2", show_default=True)
@click.option("--scenario", default=None, help="Take the map from a scenario file instead.")
@click.option("--order", type=click.IntRange(0, 1), default=0, show_default=True, help="0: h, 1: G_axis.")
@click.option("--axis", type=int, default=1, show_default=True)
@click.option("--bounds", nargs=4, type=float, default=(-1.0, 3.0, 0.0, 4.0), show_default=True)
@click.option("--resolution", type=int, default=201, show_default=True)
@click.option("--output", "-o", type=click.Path(dir_okay=False), required=True)
def levelset(builtin, theta_star, scenario, order, axis, bounds, resolution, output):
    """Write a CSV grid of h or one gradient component for contour plots."""
    try:
        if scenario:
            h = _load(scenario).build_map()
        else:
            h = BUILTIN_MAPS[builtin]([float(v) for v in theta_star.split(",")])
        write_grid_csv(level_set_grid(h, order, axis - 1, bounds, resolution), output)
    except (SonesError, OSError) as exc:
        _fail(exc)
    click.echo(output)


@main.command()
@click.argument("scenario")
def hurwitz(scenario):
    """Jacobian spectrum of the averaged system at its equilibrium."""
    try:
        report = hurwitz_report(_load(scenario))
    except SonesError as exc:
        _fail(exc)
    click.echo(json.dumps(report, indent=2))
    if not report["hurwitz"]:
        sys.exit(EXIT_CHECK_FAILED)


if __name__ == "__main__":
    main()
