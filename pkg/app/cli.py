"""
Command-line entry point.

    python main.py simulate --scenario pair --out runs/pair
    python main.py design --y-ref 380
    python main.py analyze --run-dir runs/pair
    python main.py plot --run-dir runs/pair/analysis
    python main.py export-model --out runs/model

Exit codes: 0 ok, 1 unexpected, 2 config, 3 numeric, 4 I/O.
"""

import argparse
from typing import List, Optional

from app.commands import COMMANDS
from core.constants import TOOL_VERSION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microgrid",
        description="Lifted linear model and LQI voltage restoration for inverter microgrids",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in COMMANDS:
        module.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)
