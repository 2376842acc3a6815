import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional

import click

from .config import default_settings
from .errors import OutputError, ScenarioError, ScenarioValidationError
from .runner import ensure_output_dir, run_scenario
from .scenario import MAX_DURATION_S, effective_config, parse_scenario
from .utils import _atomic_write_text, _get_safe_path_component, configure_logging


def _load_or_exit(ctx: click.Context, path: str, seed: Optional[int] = None, duration: Optional[float] = None):
    try:
        return parse_scenario(path, seed=seed, duration_s=duration)
    except ScenarioValidationError as e:
        click.secho(f"Invalid scenario '{path}':", fg="red", err=True)
        for message in e.messages:
            click.secho(f"  {message}", fg="red", err=True)
        ctx.exit(e.exit_code)
    except ScenarioError as e:
        click.secho(f"Cannot load scenario '{path}': {e}", fg="red", err=True)
        ctx.exit(e.exit_code)


def _default_out(scenario_path: str) -> Path:
    return default_settings.default_out_dir / _get_safe_path_component(Path(scenario_path).stem)


def _print_summary(summary) -> None:
    def fmt(value):
        return "n/a" if value is None else f"{value:.4f}"

    click.echo(f"  Packets generated:   {summary.generated}")
    click.echo(f"  Delivery ratio:      {fmt(summary.delivery_ratio)}")
    click.echo(f"  Deadline miss ratio: {fmt(summary.deadline_miss_ratio)}")
    click.echo(f"  Mean / p95 delay:    {fmt(summary.mean_delay_s)} s / {fmt(summary.p95_delay_s)} s")
    click.echo(f"  Control overhead:    {fmt(summary.control_overhead)}")
    click.echo(f"  Discoveries:         {summary.discoveries} (mean disjoint paths {fmt(summary.mean_disjoint_paths)})")
    click.echo(f"  Repairs:             {summary.repair_successes}/{summary.repair_attempts}, failovers {summary.failovers}")


@click.group()
@click.option('--log-level', default=None, help='Logging level for the urban_sim loggers (default: URBAN_LOG_LEVEL or WARNING).')
def cli(log_level: Optional[str]):
    """Discrete-event simulator for QoS-aware multipath routing in mobile ad hoc networks."""
    configure_logging(log_level or default_settings.log_level)


@cli.command("run")
@click.argument('scenario_path', type=click.Path(dir_okay=False))
@click.option('--out', '-o', 'out_dir', default=None, type=click.Path(file_okay=False), help='Output directory for trace.csv and summary.json.')
@click.option('--seed', type=click.IntRange(0, 2**64 - 1), default=None, help='Override the scenario seed.')
@click.option('--duration', type=click.FloatRange(min=0, max=MAX_DURATION_S, min_open=True), default=None, help='Override the run duration in seconds.')
@click.option('--trace', 'trace_mode', type=click.Choice(['on', 'off']), default='on', show_default=True, help='Write the per-event trace file.')
@click.option('--quiet', '-q', is_flag=True, help='Print nothing but errors.')
@click.pass_context
def run_cmd(ctx: click.Context, scenario_path: str, out_dir: Optional[str], seed: Optional[int],
            duration: Optional[float], trace_mode: str, quiet: bool):
    """Runs one scenario and writes its trace and summary."""
    if quiet:
        configure_logging("ERROR")
    cfg = _load_or_exit(ctx, scenario_path, seed, duration)
    out = Path(out_dir) if out_dir else _default_out(scenario_path) / f"seed_{cfg.seed}"
    if not quiet:
        click.echo(f"Running '{scenario_path}' (seed {cfg.seed}, {cfg.duration_s} s, {cfg.nodes.count} nodes)...")
    result = run_scenario(cfg, out, trace=trace_mode == 'on')
    if not result.success:
        click.secho(f"Run failed: {result.message}", fg="red", err=True)
        ctx.exit(result.exit_code)
    if not quiet:
        click.secho(f"Run complete. {result.message}", fg="green")
        _print_summary(result.summary)


def _sweep_one(job: Dict[str, Any]) -> Dict[str, Any]:
    cfg = parse_scenario(job["scenario"], seed=job["seed"], duration_s=job["duration"])
    result = run_scenario(cfg, job["out"], trace=job["trace"])
    summary = result.summary
    return {
        "seed": job["seed"],
        "out_dir": str(job["out"]),
        "exit_code": result.exit_code,
        "message": result.message,
        "delivery_ratio": summary.delivery_ratio if summary else None,
        "deadline_miss_ratio": summary.deadline_miss_ratio if summary else None,
        "mean_delay_s": summary.mean_delay_s if summary else None,
    }


@cli.command("sweep")
@click.argument('scenario_path', type=click.Path(dir_okay=False))
@click.option('--seeds', default=None, help='Comma-separated seed list, e.g. "1,2,3".')
@click.option('--count', '-n', type=click.IntRange(min=1), default=None, help='Run seeds 1..N instead of an explicit list.')
@click.option('--out', '-o', 'out_dir', default=None, type=click.Path(file_okay=False), help='Parent directory; each seed gets its own sub-directory.')
@click.option('--duration', type=click.FloatRange(min=0, max=MAX_DURATION_S, min_open=True), default=None, help='Override the run duration in seconds.')
@click.option('--trace', 'trace_mode', type=click.Choice(['on', 'off']), default='off', show_default=True, help='Write a trace file per run.')
@click.option('--workers', '-j', type=click.IntRange(min=1), default=None, help='Worker processes (default: URBAN_SWEEP_WORKERS or CPU count).')
@click.pass_context
def sweep_cmd(ctx: click.Context, scenario_path: str, seeds: Optional[str], count: Optional[int], out_dir: Optional[str],
              duration: Optional[float], trace_mode: str, workers: Optional[int]):
    """Runs one scenario over several seeds in parallel processes and writes sweep.json."""
    _load_or_exit(ctx, scenario_path, duration=duration)
    if seeds:
        try:
            seed_list: List[int] = [int(s) for s in seeds.split(",") if s.strip()]
        except ValueError:
            click.secho(f"Invalid --seeds value '{seeds}': expected comma-separated integers.", fg="red", err=True)
            ctx.exit(2)
    else:
        seed_list = list(range(1, (count or 1) + 1))

    out = Path(out_dir) if out_dir else _default_out(scenario_path)
    try:
        ensure_output_dir(out)
    except OutputError as e:
        click.secho(str(e), fg="red", err=True)
        ctx.exit(e.exit_code)

    jobs = [
        {"scenario": scenario_path, "seed": seed, "duration": duration, "out": out / f"seed_{seed}", "trace": trace_mode == 'on'}
        for seed in seed_list
    ]
    n_workers = min(workers or default_settings.effective_sweep_workers, len(jobs))
    click.echo(f"Sweeping {len(jobs)} seed(s) with {n_workers} worker(s)...")
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        results = list(pool.map(_sweep_one, jobs))

    _atomic_write_text(out / "sweep.json", json.dumps({"scenario": scenario_path, "runs": results}, indent=2) + "\n")
    failed = [r for r in results if r["exit_code"] != 0]
    for r in results:
        color = "green" if r["exit_code"] == 0 else "red"
        click.secho(f"  seed {r['seed']}: {r['message']} (delivery ratio {r['delivery_ratio']})", fg=color)
    if failed:
        click.secho(f"{len(failed)} of {len(results)} run(s) failed.", fg="red", err=True)
        ctx.exit(max(r["exit_code"] for r in failed))
    click.secho(f"Sweep complete. Index written to {out / 'sweep.json'}", fg="green")


@cli.command("validate")
@click.argument('scenario_path', type=click.Path(dir_okay=False))
@click.pass_context
def validate_cmd(ctx: click.Context, scenario_path: str):
    """Parses and validates a scenario without running it."""
    cfg = _load_or_exit(ctx, scenario_path)
    click.secho(f"OK: '{scenario_path}' is valid ({cfg.nodes.count} nodes, {len(cfg.traffic)} flows).", fg="green")


@cli.command("show-config")
@click.argument('scenario_path', type=click.Path(dir_okay=False))
@click.option('--seed', type=click.IntRange(0, 2**64 - 1), default=None, help='Override the scenario seed.')
@click.option('--duration', type=click.FloatRange(min=0, max=MAX_DURATION_S, min_open=True), default=None, help='Override the run duration in seconds.')
@click.pass_context
def show_config_cmd(ctx: click.Context, scenario_path: str, seed: Optional[int], duration: Optional[float]):
    """Prints the effective scenario with every default filled in."""
    cfg = _load_or_exit(ctx, scenario_path, seed, duration)
    click.echo(json.dumps(effective_config(cfg), indent=2))


if __name__ == '__main__':
    cli()
