"""Command-line entry points: train, evaluate, verify, asymmetry."""

from __future__ import annotations

import sys

import click

from .harness import RunConfig, cmd_asymmetry, cmd_evaluate, cmd_train, resolve_config
from .training import Prop1InstanceError
from .verification import run_verification


def _load(config_path: str | None, seed: int | None, workers: int | None,
          out: str | None, extra: tuple[str, ...] = ()) -> RunConfig:
    overrides: dict[str, str] = {}
    for item in extra:
        if "=" not in item:
            raise click.UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if seed is not None:
        overrides["seed"] = str(seed)
    if workers is not None:
        overrides["workers"] = str(workers)
    if out is not None:
        overrides["out"] = out
    return RunConfig.from_mapping(resolve_config(config_path, overrides))


def _common(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True),
                      default=None, help="Configuration file.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Random seed override.")(fn)
    fn = click.option("--workers", type=int, default=None,
                      help="Parallel day-evaluation workers.")(fn)
    fn = click.option("--out", type=str, default=None,
                      help="Output directory override.")(fn)
    fn = click.option("--set", "extra", multiple=True, metavar="KEY=VALUE",
                      help="Override any config key.")(fn)
    return fn


@click.group()
def main() -> None:
    """Closed-loop predict-and-optimize harness for day-ahead commitment."""


@main.command()
@_common
def train(config_path, seed, workers, out, extra) -> None:
    """Train predictors on the window preceding the first target day."""
    config = _load(config_path, seed, workers, out, extra)
    result = cmd_train(config)
    state = result.state
    status = "converged" if state.converged else "iteration limit"
    click.echo(f"training {status}: {state.iteration} iterations, "
               f"UB {state.upper_bound:.6g}, LB {state.lower_bound:.6g}")
    click.echo(f"predictor: {result.predictor_path}")
    click.echo(f"log: {result.log_path}")


@main.command()
@_common
def evaluate(config_path, seed, workers, out, extra) -> None:
    """Rolling evaluation of the requested methods over the date range."""
    config = _load(config_path, seed, workers, out, extra)
    result = cmd_evaluate(config)
    for entry in result.summary:
        ei = ("-" if entry["avg_ei_pct"] is None
              else f"{entry['avg_ei_pct']:.2f}%")
        voi = "-" if entry["avg_voi"] is None else f"{entry['avg_voi']:.2f}"
        click.echo(f"{entry['method']}: {entry['days']} days, "
                   f"avg cost {entry['avg_total']:.6g}, EI {ei}, VoI {voi}")
    if result.failures:
        click.echo(f"{len(result.failures)} day-level failures "
                   f"(see failures.csv)", err=True)
    click.echo(f"evaluation: {result.evaluation_path}")
    click.echo(f"summary: {result.summary_path}")


@main.command()
@_common
def verify(config_path, seed, workers, out, extra) -> None:
    """Run the oracle suites; exit nonzero on any failure."""
    config = _load(config_path, seed, workers, out, extra)
    try:
        report = run_verification(
            big_m_primal=config.verify_big_m_primal,
            big_m_dual=config.verify_big_m_dual,
            prop1_horizon=config.verify_prop1_horizon,
            pattern_cap=config.verify_pattern_cap,
            kkt_count=config.verify_kkt_count)
    except Prop1InstanceError as exc:
        click.echo(f"size-cap error: {exc}", err=True)
        sys.exit(2)
    for line in report.lines():
        click.echo(line)
    if not report.passed:
        failed = sum(1 for c in report.checks if not c.passed)
        click.echo(f"{failed} checks failed", err=True)
        sys.exit(1)
    click.echo(f"all {len(report.checks)} checks passed")


@main.command()
@_common
def asymmetry(config_path, seed, workers, out, extra) -> None:
    """Sweep signed RES prediction errors through the open-loop pipeline."""
    config = _load(config_path, seed, workers, out, extra)
    result = cmd_asymmetry(config)
    click.echo(f"table: {result.table_path}")
    click.echo(f"loss-per-MAPE slope: over {result.over_slope:.4g}, "
               f"under {result.under_slope:.4g}")


if __name__ == "__main__":
    main()
