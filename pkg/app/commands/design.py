"""

design command.

Expected Input:
    - --config, --out, --y-ref, --weights

Returns:
    - controller.json (gain, Riccati solution, steady-state pair, model fingerprint)
    - poles.csv with open- and closed-loop poles, summary.txt
    - Exit code 3 when the Riccati solve fails, 2 for infeasible weights
"""

import argparse

from tabulate import tabulate

from app.commands.common import Context, add_config_flags, command
from core.analysis.metrics import PoleReport, pole_report
from core.control.lqi import save_controller, synthesize
from core.logging_config import get_logger

logger = get_logger("Design")


def register(subparsers):
    parser = subparsers.add_parser("design", help="Synthesize the LQI controller on the lifted model")
    add_config_flags(parser)
    parser.add_argument("--y-ref", type=float, nargs="+", default=None, help="One value, or one per DER")
    parser.add_argument("--weights", default=None, help="JSON file with controller weights")
    parser.set_defaults(func=cmd_design)


@command
def cmd_design(args: argparse.Namespace) -> int:
    ctx = Context(args)
    model = ctx.model
    y_ref = ctx.y_ref()
    ctrl = synthesize(model, y_ref, ctx.weights())

    store = ctx.store("design")
    store.add(save_controller(ctrl, model, store.out_dir / "controller.json"), "controller")
    report = pole_report(model, ctrl)
    store.write_frame(report.frame(), "poles.csv")

    rows = [
        ["lifted states N", model.N],
        ["lifted inputs M", model.M],
        ["y_ref", ", ".join(f"{v:g}" for v in y_ref)],
        ["open-loop max Re", f"{report.open_max_real:.6e}"],
        ["closed-loop max Re", f"{report.closed_max_real:.6e}"],
        ["closed loop", PoleReport.verdict(report.closed_max_real)],
        ["model fingerprint", ctrl.fingerprint[:16]],
    ]
    store.write_text("LQI design\n" + tabulate(rows, tablefmt="github") + "\n", "summary.txt")
    store.close()
    logger.info(f"Closed loop {PoleReport.verdict(report.closed_max_real)}, max Re {report.closed_max_real:.4e}")
    return 0
