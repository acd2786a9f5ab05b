"""Command-line entry point.

Verbs mirror the pipeline stages: extract, build-kg, run, score, judge,
report. All flags override keys of the single run-config file; exit code 0
means the verb fully succeeded.
"""

from __future__ import annotations

import logging
import sys
from pathlib import Path

import click

from .config import ConfigError, load_config
from .endpoints import EndpointError
from .harness import (
    HarnessError,
    cmd_build_kg,
    cmd_extract,
    cmd_judge,
    cmd_report,
    cmd_run,
    cmd_score,
)
from .kgraph import KGFormatError
from .telemetry import TelemetryFormatError

logger = logging.getLogger(__name__)

_FAILURES = (ConfigError, HarnessError, TelemetryFormatError, KGFormatError, EndpointError, OSError)


def _load(config_path: str, sets: tuple[str, ...]):
    overrides = {}
    for item in sets:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        overrides[key] = value
    return load_config(Path(config_path), overrides)


def _run_verb(fn, *args) -> None:
    try:
        fn(*args)
    except _FAILURES as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool) -> None:
    """Root-cause-analysis evaluation harness."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


_CONFIG_OPT = click.option(
    "-c", "--config", "config_path", required=True, type=click.Path(exists=True),
    help="Path to the run config file.",
)
_SET_OPT = click.option(
    "--set", "sets", multiple=True, metavar="KEY=VALUE",
    help="Override a config key (dotted path), e.g. --set alerts.withhold=TRACE.",
)


@main.command()
@_CONFIG_OPT
@_SET_OPT
def extract(config_path: str, sets: tuple[str, ...]) -> None:
    """Curate scenarios and extract per-scenario alert files."""
    _run_verb(lambda: cmd_extract(_load(config_path, sets)))


@main.command("build-kg")
@_CONFIG_OPT
@_SET_OPT
def build_kg(config_path: str, sets: tuple[str, ...]) -> None:
    """Validate the knowledge graph and check both prompt renderings."""

    def inner():
        summary = cmd_build_kg(_load(config_path, sets))
        click.echo(
            f"KG ok: {summary['entities']} entities, {summary['relationships']} relationships, "
            f"round-trip {summary['round_trip']}"
        )

    _run_verb(inner)


@main.command()
@_CONFIG_OPT
@_SET_OPT
def run(config_path: str, sets: tuple[str, ...]) -> None:
    """Run the configured workflow over every curated scenario (resumable)."""

    def inner():
        manifest = cmd_run(_load(config_path, sets))
        click.echo(f"run complete: {manifest['tallies']}")

    _run_verb(inner)


@main.command()
@_CONFIG_OPT
@_SET_OPT
@click.option(
    "--baseline-run", type=click.Path(exists=True), default=None,
    help="Another run directory to compare against (holdout deltas).",
)
def score(config_path: str, sets: tuple[str, ...], baseline_run: str | None) -> None:
    """Score hypotheses into the accuracy grid with random-guessing rows."""

    def inner():
        config = _load(config_path, sets)
        cmd_score(config, baseline_run=Path(baseline_run) if baseline_run else None)
        click.echo("scores written")

    _run_verb(inner)


@main.command()
@_CONFIG_OPT
@_SET_OPT
def judge(config_path: str, sets: tuple[str, ...]) -> None:
    """Judge a stratified trace sample and emit prevalence and risk tables."""

    def inner():
        report = cmd_judge(_load(config_path, sets))
        click.echo(f"judged {report['judged']} traces ({len(report['judge_failed'])} failed)")

    _run_verb(inner)


@main.command()
@_CONFIG_OPT
@_SET_OPT
def report(config_path: str, sets: tuple[str, ...]) -> None:
    """Render the combined report.md from the run stores."""

    def inner():
        cmd_report(_load(config_path, sets))
        click.echo("report written")

    _run_verb(inner)


if __name__ == "__main__":
    main()
