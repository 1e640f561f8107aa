"""Command line entry point: ``gencomp run|batch|validate|list-constructions``.

Exit status: 0 when every invariant passes, 1 when some check fails, 2 for
invalid scenarios, 3 when a report has no invariants at all.
"""

from __future__ import annotations

import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from .errors import ValidationError
from .harness import CONSTRUCTIONS, emit_report, load_scenario, output_dir, run_scenario

EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_EMPTY = 0, 1, 2, 3


def _run_file(path: str, horizon, budget, out: str) -> dict:
    """Load, run and emit one scenario; safe to call in a worker process."""
    t0 = time.perf_counter()
    try:
        sc = load_scenario(path, horizon, budget)
    except ValidationError as exc:
        return {"path": path, "status": EXIT_INVALID, "problems": list(exc.problems) or [str(exc)]}
    report = run_scenario(sc)
    files = emit_report(report, out, sc.format)
    if report.empty:
        status = EXIT_EMPTY
    else:
        status = EXIT_OK if report.passed else EXIT_FAIL
    return {
        "path": path,
        "name": sc.name,
        "status": status,
        "checks": [(c.name, c.passed) for c in report.checks],
        "error": report.error,
        "files": [str(f) for f in files],
        "seconds": time.perf_counter() - t0,
    }


def _print(result: dict) -> None:
    if result["status"] == EXIT_INVALID:
        click.echo(f"INVALID {result['path']}")
        for p in result["problems"]:
            click.echo(f"  - {p}")
        return
    total = len(result["checks"])
    ok = sum(1 for _, passed in result["checks"] if passed)
    word = {EXIT_OK: "PASS", EXIT_FAIL: "FAIL", EXIT_EMPTY: "EMPTY"}[result["status"]]
    click.echo(f"{word} {result['name']} {ok}/{total}")
    for name, passed in result["checks"]:
        if not passed:
            click.echo(f"  failed: {name}")
    if result["error"]:
        click.echo(f"  error: {result['error']}")
    click.echo(f"{result['name']}: {result['seconds']:.2f}s", err=True)


def _combined(statuses) -> int:
    statuses = set(statuses)
    for code in (EXIT_INVALID, EXIT_FAIL, EXIT_EMPTY):
        if code in statuses:
            return code
    return EXIT_OK


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging on stderr.")
def main(verbose):
    """Run generic and coarse computability constructions on finite horizons."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


_horizon = click.option("--horizon", type=click.IntRange(min=1), default=None, help="Override the scenario horizon.")
_budget = click.option("--budget", type=click.IntRange(min=0), default=None, help="Override the stage budget.")
_out = click.option("--out", type=click.Path(file_okay=False), default=None,
                    help="Output directory (GENCOMP_OUT overrides; default ./reports).")


@main.command()
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
@_horizon
@_budget
@_out
def run(scenario_file, horizon, budget, out):
    """Run one scenario file and write its report."""
    result = _run_file(scenario_file, horizon, budget, str(output_dir(out)))
    _print(result)
    sys.exit(result["status"])


@main.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@_horizon
@_budget
@_out
@click.option("--jobs", type=click.IntRange(min=1), default=1, help="Scenarios run concurrently.")
def batch(directory, horizon, budget, out, jobs):
    """Run every *.yaml / *.yml scenario in a directory."""
    files = sorted(str(p) for p in Path(directory).iterdir() if p.suffix in (".yaml", ".yml"))
    if not files:
        click.echo(f"no scenarios in {directory}")
        sys.exit(EXIT_EMPTY)
    target = str(output_dir(out))
    if jobs == 1:
        results = [_run_file(f, horizon, budget, target) for f in files]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_file, files, [horizon] * len(files), [budget] * len(files),
                                    [target] * len(files)))
    for r in results:
        _print(r)
    sys.exit(_combined(r["status"] for r in results))


@main.command()
@click.argument("scenario_file", type=click.Path(exists=True, dir_okay=False))
def validate(scenario_file):
    """Check a scenario file and list every problem."""
    try:
        sc = load_scenario(scenario_file)
    except ValidationError as exc:
        click.echo(f"INVALID {scenario_file}")
        for p in exc.problems or [str(exc)]:
            click.echo(f"  - {p}")
        sys.exit(EXIT_INVALID)
    click.echo(f"OK {sc.name} ({sc.construction}, horizon {sc.horizon}, budget {sc.budget})")


@main.command("list-constructions")
def list_constructions():
    """Known construction ids and the invariants each reports."""
    for name in sorted(CONSTRUCTIONS):
        c = CONSTRUCTIONS[name]
        click.echo(f"{name}: {c.summary}")
        click.echo(f"  invariants: {', '.join(c.invariants)}")
        params = ", ".join(f"{k}{'*' if k in c.required else ''}" for k in c.fields)
        click.echo(f"  params: {params or '-'}")


if __name__ == "__main__":
    main()
