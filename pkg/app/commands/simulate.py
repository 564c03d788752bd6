"""

simulate command.

Expected Input:
    - --scenario open_loop | closed_loop | pair | batch
    - --config, --out, --mode, --engage-time, --t-end, --y-ref, --method, --step, --stride
    - closed_loop: optional --controller (file from `design`) or --weights
    - batch: --runs, --perturb, --seed, --workers

Returns:
    - Exit code 0 and, in the output directory, manifest.json first, then one CSV
      per run (<scenario>_run<k>_<model>.csv) and the scenario's reports.
"""

import argparse

from pydantic import ValidationError

from app.commands.common import Context, add_config_flags, add_scenario_flags, command
from core.analysis.metrics import ensemble_summary, mae, render_summary, tracking_report
from core.control.lqi import load_controller, save_controller, synthesize
from core.exceptions import ConfigError
from core.logging_config import get_logger
from core.models.scenario import PerturbationSpec
from core.services.simulator import run, run_batch, run_pair

logger = get_logger("Simulate")

SCENARIOS = ("open_loop", "closed_loop", "pair", "batch")


def register(subparsers):
    parser = subparsers.add_parser("simulate", help="Run a scenario and write trajectory CSVs")
    add_config_flags(parser)
    add_scenario_flags(parser)
    parser.add_argument("--scenario", choices=SCENARIOS, default="open_loop")
    parser.add_argument("--controller", default=None, help="Controller file written by `design`")
    parser.add_argument("--runs", type=int, default=50)
    parser.add_argument("--perturb", type=float, default=0.3)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--record-lifted", action="store_true", help="Also store z and U columns")
    parser.set_defaults(func=cmd_simulate)


def _open_loop(ctx: Context, args) -> None:
    scenario = ctx.scenario("open_loop", record_lifted=args.record_lifted)
    store = ctx.store("open_loop")
    traj = run(scenario, ctx.params, ctx.model if args.record_lifted else None)
    store.write_trajectory(traj, f"open_loop_run0_{traj.kind}.csv")
    store.close()


def _closed_loop(ctx: Context, args) -> None:
    scenario = ctx.scenario("closed_loop", policy="lqi", record_lifted=args.record_lifted)
    args.engage_time = scenario.engage_time
    store = ctx.store("closed_loop")
    if args.controller:
        ctrl = load_controller(args.controller, ctx.model)
    else:
        ctrl = synthesize(ctx.model, scenario.y_ref, ctx.weights())
        store.add(save_controller(ctrl, ctx.model, store.out_dir / "controller.json"), "controller")

    traj = run(scenario, ctx.params, ctx.model, ctrl)
    store.write_trajectory(traj, f"closed_loop_run0_{traj.kind}.csv")
    settle = scenario.engage_time + 0.75 * (scenario.t_span[1] - scenario.engage_time)
    report = tracking_report(traj, scenario.y_ref, scenario.engage_time, settle)
    store.write_frame(report, "tracking.csv")
    store.close()


def _pair(ctx: Context, args) -> None:
    scenario = ctx.scenario("pair", record_lifted=args.record_lifted)
    store = ctx.store("pair")
    full, lifted = run_pair(scenario, ctx.params, ctx.model)
    store.write_trajectory(full, f"pair_run0_{full.kind}.csv")
    store.write_trajectory(lifted, "pair_run0_lifted.csv")
    series = mae(full, lifted)
    store.write_frame(series.frame(), "mae.csv")
    logger.info(f"MAE final {series.final:.4g}, max {series.max:.4g}")
    store.close()


def _batch(ctx: Context, args) -> None:
    scenario = ctx.scenario("batch")
    store = ctx.store("batch", seed=args.seed)
    try:
        perturbation = PerturbationSpec(fraction=args.perturb, seed=args.seed)
    except ValidationError as e:
        raise ConfigError(f"invalid perturbation: {e}") from e
    outcomes = run_batch(scenario, ctx.params, ctx.model, args.runs, perturbation, workers=args.workers)
    for o in outcomes:
        if o.ok:
            store.write_trajectory(o.full, f"batch_run{o.index}_{o.full.kind}.csv")
            store.write_trajectory(o.lifted, f"batch_run{o.index}_lifted.csv")
    summary = ensemble_summary(outcomes)
    store.write_frame(summary, "ensemble.csv")
    store.write_text(render_summary(summary, title=f"Batch of {args.runs}, perturbation {args.perturb:g}"), "summary.txt")
    store.close()


@command
def cmd_simulate(args: argparse.Namespace) -> int:
    ctx = Context(args)
    {"open_loop": _open_loop, "closed_loop": _closed_loop, "pair": _pair, "batch": _batch}[args.scenario](ctx, args)
    return 0
