"""Command-line front end and metrics serialization.

Exit codes: 0 success, 2 scenario schema violation, 1 runtime failure.
Output locations: --outdir flag, else the COOPSIM_OUTDIR environment
variable, else ./coopsim-out.
"""

import csv
import json
import statistics
from dataclasses import replace
from pathlib import Path

import click

from .errors import ConfigurationError, CoopsimError, SchemaError
from .scenario import canonical_dump, load_scenario, resolve_scenario_path
from .sim_engine import (
    MODE_BASELINE_PACE,
    MODE_BASELINE_VOTE,
    MODE_PACE,
    MODE_VOTE,
    RunMetrics,
    SWEEP_AXES,
    complexity_probe,
    run as run_simulation,
    run_baseline,
    sweep as run_sweep,
)

VERDICT_COLUMNS = (
    "run_id",
    "round",
    "simulated_time_ms",
    "location_id",
    "cav",
    "issued_label",
    "true_label",
    "correct",
    "mode",
    "seed",
)


def write_verdicts_csv(metrics: RunMetrics, path: Path) -> None:
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(VERDICT_COLUMNS)
        for r in metrics.records:
            writer.writerow(
                (
                    r.run_id,
                    r.round,
                    r.simulated_time_ms,
                    r.location_id,
                    r.cav,
                    r.issued_label if r.issued_label is not None else "",
                    r.true_label,
                    int(r.correct),
                    r.mode,
                    r.seed,
                )
            )


def summary_dict(metrics: RunMetrics) -> dict:
    return {
        "run_id": metrics.run_id,
        "mode": metrics.mode,
        "seed": metrics.seed,
        "accuracy": metrics.accuracy,
        "accuracy_defined": metrics.accuracy_defined,
        "per_cav_accuracy": dict(sorted(metrics.per_cav_accuracy.items())),
        "reputation_trajectories": {
            cav: values
            for cav, values in sorted(metrics.reputation_trajectories.items())
        },
        "message_stats": metrics.message_stats,
        "rounds_issued": metrics.rounds_issued,
        "cycles_executed": metrics.cycles_executed,
        "verdicts_recorded": len(metrics.records),
        "operation_counts_total": sum(metrics.operation_counts),
        "delivery_digest": metrics.delivery_digest,
    }


def write_summary_json(metrics: RunMetrics, path: Path) -> None:
    path.write_text(
        json.dumps(summary_dict(metrics), indent=2, sort_keys=True) + "\n"
    )


def write_run_outputs(metrics: RunMetrics, outdir: Path) -> tuple[Path, Path]:
    outdir.mkdir(parents=True, exist_ok=True)
    verdicts = outdir / f"{metrics.run_id}.verdicts.csv"
    summary = outdir / f"{metrics.run_id}.summary.json"
    write_verdicts_csv(metrics, verdicts)
    write_summary_json(metrics, summary)
    return verdicts, summary


def _load(scenario: str, overrides) -> tuple:
    try:
        path = resolve_scenario_path(scenario)
        return load_scenario(path, overrides=list(overrides))
    except SchemaError as exc:
        raise click.UsageError("\n".join(exc.problems)) from exc
    except ConfigurationError as exc:
        raise click.UsageError(str(exc)) from exc


def _outdir(outdir) -> Path:
    return Path(outdir)


outdir_option = click.option(
    "--outdir",
    envvar="COOPSIM_OUTDIR",
    default="coopsim-out",
    show_default=True,
    help="Directory for metrics files (env: COOPSIM_OUTDIR).",
)
override_option = click.option(
    "--override",
    "-o",
    "overrides",
    multiple=True,
    metavar="PATH=VALUE",
    help="Dotted-path scenario override, e.g. -o run.seed=7.",
)


@click.group()
@click.version_option()
def main():
    """Collaborative-perception simulator."""


@main.command("validate")
@click.argument("scenario")
@override_option
def cmd_validate(scenario, overrides):
    """Check a scenario file (or bundled preset name) against the schema."""
    config = _load(scenario, overrides)
    click.echo(f"ok: {config.name} ({config.mode}, {len(config.scene.cavs)} cavs, "
               f"{len(config.scene.locations)} locations)")


@main.command("run")
@click.argument("scenario")
@override_option
@outdir_option
def cmd_run(scenario, overrides, outdir):
    """Run one scenario and write verdict records plus a summary."""
    config = _load(scenario, overrides)
    try:
        metrics = run_simulation(config)
        verdicts, summary = write_run_outputs(metrics, _outdir(outdir))
    except CoopsimError as exc:
        raise click.ClickException(str(exc)) from exc
    flag = "" if metrics.accuracy_defined else " (no verdicts issued)"
    click.echo(f"{metrics.run_id}: accuracy {metrics.accuracy:.4f}{flag}")
    click.echo(f"wrote {verdicts}")
    click.echo(f"wrote {summary}")


def _comparison_rows(configs) -> list[dict]:
    rows = []
    for config in configs:
        if config.mode in (MODE_BASELINE_PACE, MODE_BASELINE_VOTE):
            raise click.UsageError(
                f"{config.name}: compare needs a collaborative mode, got {config.mode}"
            )
        collaborative = run_simulation(config)
        benchmark = run_baseline(config)
        rows.append(
            {
                "setup": config.name,
                "mode": config.mode,
                "collaborative": collaborative,
                "benchmark": benchmark,
            }
        )
    return rows


@main.command("compare")
@click.argument("scenarios", nargs=-1, required=True)
@override_option
@outdir_option
def cmd_compare(scenarios, overrides, outdir):
    """Run collaborative and benchmark modes on identical seeds and
    tabulate accuracy side by side (plus an all-trials average)."""
    configs = [_load(s, overrides) for s in scenarios]
    out = _outdir(outdir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        rows = _comparison_rows(configs)
    except CoopsimError as exc:
        raise click.ClickException(str(exc)) from exc

    table_path = out / "comparison.csv"
    with table_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ("setup", "mode", "collaborative_accuracy", "benchmark_accuracy", "difference")
        )
        collab_accs = []
        bench_accs = []
        for row in rows:
            collab = row["collaborative"].accuracy
            bench = row["benchmark"].accuracy
            collab_accs.append(collab)
            bench_accs.append(bench)
            writer.writerow(
                (row["setup"], row["mode"], f"{collab:.6f}", f"{bench:.6f}",
                 f"{collab - bench:.6f}")
            )
            write_run_outputs(row["collaborative"], out)
            write_run_outputs(row["benchmark"], out)
        if len(rows) > 1:
            mean_c = statistics.mean(collab_accs)
            mean_b = statistics.mean(bench_accs)
            writer.writerow(
                ("all-trials", "-", f"{mean_c:.6f}", f"{mean_b:.6f}",
                 f"{mean_c - mean_b:.6f}")
            )

    click.echo(table_path.read_text().rstrip())
    click.echo(f"wrote {table_path}")


@main.command("sweep")
@click.argument("scenario")
@click.option("--axis", required=True, help="Parameter to vary.")
@click.option(
    "--values", required=True, help="Comma-separated values for the axis."
)
@override_option
@outdir_option
def cmd_sweep(scenario, axis, values, overrides, outdir):
    """Run the scenario once per axis value (seeds advance with the index)."""
    config = _load(scenario, overrides)
    parsed_values = [v.strip() for v in values.split(",") if v.strip()]
    if not parsed_values:
        raise click.UsageError("--values must list at least one value")
    out = _outdir(outdir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        results = run_sweep(config, axis, parsed_values)
    except ConfigurationError as exc:
        raise click.UsageError(str(exc)) from exc
    except CoopsimError as exc:
        raise click.ClickException(str(exc)) from exc
    table_path = out / f"sweep-{axis}.csv"
    with table_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("axis", "value", "run_id", "mode", "seed", "accuracy",
                         "verdicts", "rounds"))
        for value, metrics in zip(parsed_values, results):
            writer.writerow(
                (axis, value, metrics.run_id, metrics.mode, metrics.seed,
                 f"{metrics.accuracy:.6f}", len(metrics.records), metrics.rounds_issued)
            )
            write_run_outputs(metrics, out)
    click.echo(table_path.read_text().rstrip())
    click.echo(f"wrote {table_path}")


@main.command("probe-complexity")
@click.option("--cavs", default="2,4,8,16,32", show_default=True)
@click.option("--objects", default="4,8,16", show_default=True)
@click.option("--locations", default=8, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@outdir_option
def cmd_probe_complexity(cavs, objects, locations, seed, outdir):
    """Measure edge-round operation counts over a (vehicles x objects) grid."""
    try:
        cav_counts = [int(v) for v in cavs.split(",") if v.strip()]
        object_counts = [int(v) for v in objects.split(",") if v.strip()]
    except ValueError as exc:
        raise click.UsageError(f"counts must be integers: {exc}") from exc
    rows = complexity_probe(cav_counts, object_counts, locations_count=locations, seed=seed)
    out = _outdir(outdir)
    out.mkdir(parents=True, exist_ok=True)
    table_path = out / "complexity.csv"
    with table_path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("cavs", "objects_per_cav", "pace_ops", "vote_ops"))
        for row in rows:
            writer.writerow(
                (row["cavs"], row["objects_per_cav"], row["pace_ops"], row["vote_ops"])
            )
    click.echo(table_path.read_text().rstrip())
    click.echo(f"wrote {table_path}")


@main.command("plotdata")
@click.argument("metrics_dir")
@outdir_option
def cmd_plotdata(metrics_dir, outdir):
    """Recompute per-run accuracy from verdict records and emit plot-ready
    (setup, accuracy) series for collaborative and benchmark runs."""
    metrics_path = Path(metrics_dir)
    record_files = sorted(metrics_path.glob("*.verdicts.csv"))
    series: dict[str, list[tuple[str, float]]] = {"collaborative": [], "benchmark": []}
    for record_file in record_files:
        with record_file.open() as handle:
            rows = list(csv.DictReader(handle))
        if not rows:
            continue
        correct = sum(int(r["correct"]) for r in rows)
        accuracy = correct / len(rows)
        mode = rows[0]["mode"]
        kind = (
            "collaborative" if mode in (MODE_PACE, MODE_VOTE) else "benchmark"
        )
        series[kind].append((rows[0]["run_id"], accuracy))
    if not series["collaborative"] and not series["benchmark"]:
        raise click.ClickException(f"no verdict records found under {metrics_path}")
    out = _outdir(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for kind, points in series.items():
        path = out / f"plot_{kind}.csv"
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(("setup", "accuracy"))
            for setup, accuracy in points:
                writer.writerow((setup, f"{accuracy:.6f}"))
        written.append(path)
    for path in written:
        click.echo(f"wrote {path}")


@main.command("canonical")
@click.argument("scenario")
@override_option
def cmd_canonical(scenario, overrides):
    """Print the canonical re-serialization of a scenario."""
    config = _load(scenario, overrides)
    click.echo(canonical_dump(config), nl=False)


if __name__ == "__main__":
    main()
