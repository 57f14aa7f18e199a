"""Command line entry point: ``sim run | compare | sweep``.

Exit codes: 0 success, 2 configuration error, 3 some trials failed.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .errors import ConfigError, ParseError
from .experiments import MODES, export_results, run_monte_carlo, solve_options_from_dict
from .scenario import load_scenario, scenario_from_dict, set_dotted

log = logging.getLogger("iabsim")

EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def _read_doc(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file: {exc}") from exc
    if not text.strip():
        return {}
    load_scenario(text)  # reports JSON syntax errors with their position
    return json.loads(text)


def _modes(text: str) -> list:
    modes = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODES]
    if bad or not modes:
        raise ConfigError(f"unknown mode(s) {bad or text!r}; choose from {', '.join(MODES)}")
    return modes


def _execute(doc: dict, modes, trials: int, seed: int, out: Path, workers: int, timing: bool) -> int:
    scenario = scenario_from_dict(doc)
    options = solve_options_from_dict(doc.get("solver"))
    agg = run_monte_carlo(scenario, modes, trials, seed, workers=workers, options=options, timing=timing)
    export_results(agg, agg.trials, out)
    failed = [r for r in agg.trials if r.error]
    for r in failed:
        log.warning("trial %d (%s) failed: %s", r.trial, r.mode, r.error)
    for mode, st in agg.modes.items():
        click.echo(f"{mode}: mean sum rate {st.sum_rate_mean:.4f} bit/s/Hz over {st.trials - st.failed} trials")
    return EXIT_PARTIAL if failed else 0


def _guard(fn):
    """Map configuration problems to exit code 2."""
    try:
        code = fn()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    sys.exit(code)


_common = [
    click.option("--scenario", "scenario_path", required=True, type=click.Path(dir_okay=False)),
    click.option("--trials", type=click.IntRange(min=0), default=1, show_default=True),
    click.option("--seed", type=click.IntRange(min=0, max=2**64 - 1), default=0, show_default=True),
    click.option("--out", type=click.Path(file_okay=False), required=True),
    click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True),
    click.option("--timing/--no-timing", default=False, help="Record wall-clock runtime_ms (not reproducible)."),
]


def common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose: bool):
    """Monte Carlo simulator for UAV-assisted integrated access and backhaul."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


@main.command()
@common
@click.option("--mode", type=click.Choice(MODES), required=True)
def run(scenario_path, trials, seed, out, workers, timing, mode):
    """Run one mode."""
    _guard(lambda: _execute(_read_doc(scenario_path), [mode], trials, seed, Path(out), workers, timing))


@main.command()
@common
@click.option("--modes", default="distributed,daa,baseline", show_default=True)
def compare(scenario_path, trials, seed, out, workers, timing, modes):
    """Run several modes on identical draws."""
    _guard(lambda: _execute(_read_doc(scenario_path), _modes(modes), trials, seed, Path(out), workers, timing))


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


@main.command()
@common
@click.option("--param", required=True, help="Dotted key into the scenario document, e.g. uav.count.")
@click.option("--values", required=True, help="Comma-separated values; each is read as JSON if possible.")
@click.option("--modes", default="distributed,daa,baseline", show_default=True)
def sweep(scenario_path, trials, seed, out, workers, timing, param, values, modes):
    """Repeat a comparison for each value of one parameter.

    Results go to ``<out>/<param>=<value>/``.
    """

    def body():
        doc = _read_doc(scenario_path)
        mode_list = _modes(modes)
        vals = [_value(v.strip()) for v in values.split(",") if v.strip()]
        if not vals:
            raise ParseError("no values given", "--values")
        docs = [set_dotted(doc, param, v) for v in vals]
        for d in docs:  # fail before running anything
            scenario_from_dict(d)
        code = 0
        for v, d in zip(vals, docs):
            click.echo(f"{param}={v}")
            code = max(code, _execute(d, mode_list, trials, seed, Path(out) / f"{param}={v}", workers, timing))
        return code

    _guard(body)


if __name__ == "__main__":
    main()
