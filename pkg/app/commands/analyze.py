"""

analyze command.

Expected Input:
    - --run-dir: output directory of a `simulate` run (manifest.json plus trajectory CSVs)
    - --at: time for the per-state error breakdown, defaults to the last sample
    - --controller: optional controller file; adds closed-loop poles
    - --config, --out (defaults to <run-dir>/analysis)

Returns:
    - mae.csv (one run) or mae_<run>.csv per run, normalized_mae.csv
    - state_errors.csv, ensemble.csv for more than one run
    - tracking.csv for runs without a lifted counterpart
    - poles.csv and summary.txt
    - Exit code 4 when the run directory or its trajectories are missing or empty
"""

import argparse
from pathlib import Path

from tabulate import tabulate

from app.commands.common import Context, add_config_flags, command, split_pairs
from core.analysis.metrics import (
    dominant_states,
    ensemble_summary,
    mae,
    normalized_mae,
    pole_report,
    render_summary,
    state_error_breakdown,
    tracking_report,
)
from core.control.lqi import load_controller
from core.exceptions import ArtifactError
from core.logging_config import get_logger
from core.models.scenario import RunOutcome
from core.services.trajectory_store import read_manifest, read_trajectory, trajectory_files

logger = get_logger("Analyze")


def register(subparsers):
    parser = subparsers.add_parser("analyze", help="Model-error, tracking and pole reports for a run directory")
    add_config_flags(parser)
    parser.add_argument("--run-dir", required=True)
    parser.add_argument("--at", type=float, default=None, help="Breakdown time, s")
    parser.add_argument("--controller", default=None)
    parser.add_argument("--y-ref", type=float, nargs="+", default=None)
    parser.set_defaults(func=cmd_analyze)


@command
def cmd_analyze(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    source = read_manifest(run_dir)
    files = trajectory_files(run_dir)
    if not files:
        raise ArtifactError(f"{run_dir} holds no trajectories")

    if args.out is None:
        args.out = str(run_dir / "analysis")
    ctx = Context(args)
    store = ctx.store(f"analyze:{source.scenario}", seed=source.seed)
    lines = [f"Analysis of {run_dir} ({source.scenario})"]

    pairs = split_pairs(files)
    outcomes = []
    for k, (key, plant_path, lifted_path) in enumerate(pairs):
        plant = read_trajectory(plant_path)
        if lifted_path is None:
            engage = source.parameters.get("engage_time")
            engage = engage if engage is not None else ctx.config.simulation.engage_time
            settle = engage + 0.75 * (plant.times[-1] - engage)
            store.write_frame(tracking_report(plant, ctx.y_ref(), engage, settle), f"tracking_{key}.csv")
            continue

        lifted = read_trajectory(lifted_path, kind="lifted")
        outcomes.append(RunOutcome(index=k, full=plant, lifted=lifted))
        series = mae(plant, lifted)
        name = "mae.csv" if len(pairs) == 1 else f"mae_{key}.csv"
        store.write_frame(series.frame(), name)
        store.write_frame(normalized_mae(plant, lifted).frame(), "normalized_" + name)
        lines.append(f"{key}: final MAE {series.final:.4g}, max MAE {series.max:.4g}")

        if len(pairs) == 1:
            t = args.at if args.at is not None else float(plant.times[-1])
            breakdown = state_error_breakdown(plant, lifted, t)
            store.write_frame(breakdown, "state_errors.csv")
            lines.append(f"dominant states at t = {breakdown['t'].iloc[0]:g} s: {', '.join(dominant_states(breakdown))}")

    if len(outcomes) > 1:
        summary = ensemble_summary(outcomes)
        store.write_frame(summary, "ensemble.csv")
        lines.append(render_summary(summary, title=f"Ensemble of {len(outcomes)} runs"))

    ctrl = load_controller(args.controller, ctx.model) if args.controller else None
    report = pole_report(ctx.model, ctrl)
    store.write_frame(report.frame(), "poles.csv")
    rows = [["open-loop max Re", f"{report.open_max_real:.6e}"]]
    if ctrl is not None:
        rows.append(["closed-loop max Re", f"{report.closed_max_real:.6e}"])
    lines.append(tabulate(rows, tablefmt="github"))

    store.write_text("\n".join(lines) + "\n", "summary.txt")
    store.close()
    logger.info(f"Analysis written to {store.out_dir}")
    return 0
