"""

plot command.

Expected Input:
    - --run-dir: a `simulate` or `analyze` output directory
    - --out (defaults to <run-dir>/figures), --bound for the MAE reference line

Returns:
    - voltages_<run>.svg per plant trajectory, mae.svg, state_errors.svg, poles.svg
      for whichever source CSVs are present
    - Exit code 4 when the directory holds nothing to plot
"""

import argparse
from pathlib import Path

import pandas as pd

from app.commands.common import command, split_pairs
from core.analysis import plots
from core.analysis.metrics import MAE_BOUND
from core.exceptions import ArtifactError
from core.logging_config import get_logger
from core.models.artifacts import RunManifest
from core.services.trajectory_store import TrajectoryStore, read_manifest, trajectory_files

logger = get_logger("Plot")


def register(subparsers):
    parser = subparsers.add_parser("plot", help="SVG figures from the CSVs of a run directory")
    parser.add_argument("--run-dir", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--bound", type=float, default=MAE_BOUND)
    parser.add_argument("--log-level", default=None)
    parser.set_defaults(func=cmd_plot)


def _read_csv(path: Path) -> pd.DataFrame:
    try:
        df = pd.read_csv(path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ArtifactError(f"unreadable {path}: {e}") from e
    if df.empty:
        raise ArtifactError(f"empty file: {path}")
    return df


@command
def cmd_plot(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    source = read_manifest(run_dir)
    out_dir = Path(args.out) if args.out else run_dir / "figures"
    store = TrajectoryStore(
        out_dir,
        RunManifest(
            config_path=source.config_path,
            config_sha256=source.config_sha256,
            scenario=f"plot:{source.scenario}",
            seed=source.seed,
            output_dir=str(out_dir),
            mode=source.mode,
            parameters={"run_dir": str(run_dir), "bound": args.bound},
        ),
    )
    written = 0

    engage = source.parameters.get("engage_time") if source.scenario == "closed_loop" else None
    for key, plant_path, _ in split_pairs(trajectory_files(run_dir)):
        df = _read_csv(plant_path)
        store.add(plots.voltage_traces(df, out_dir / f"voltages_{key}.svg", engage, f"DER output voltages ({key})"), "figure")
        written += 1

    curves = {p.stem.removeprefix("mae_") if p.stem != "mae" else "mae": _read_csv(p) for p in sorted(run_dir.glob("mae*.csv"))}
    if curves:
        store.add(plots.mae_curves(curves, out_dir / "mae.svg", args.bound), "figure")
        written += 1

    if (run_dir / "state_errors.csv").is_file():
        store.add(plots.state_error_bars(_read_csv(run_dir / "state_errors.csv"), out_dir / "state_errors.svg"), "figure")
        written += 1

    if (run_dir / "poles.csv").is_file():
        store.add(plots.pole_scatter(_read_csv(run_dir / "poles.csv"), out_dir / "poles.svg"), "figure")
        written += 1

    store.close()
    if not written:
        raise ArtifactError(f"nothing to plot in {run_dir}")
    logger.info(f"{written} figure(s) written to {out_dir}")
    return 0
