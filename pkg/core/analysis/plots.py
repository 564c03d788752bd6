"""
SVG figures drawn from CSV artifacts. The functions only draw the values they are
given; every number comes from the trajectory or report frames.
"""

from pathlib import Path
from typing import Dict, Optional, Union

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "microgrid"  # stable element ids
import matplotlib.pyplot as plt
import pandas as pd

from core.logging_config import get_logger

logger = get_logger("Plots")

PathLike = Union[str, Path]


def _save(fig, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"Wrote {path}")
    return path


def voltage_traces(traj: pd.DataFrame, path: PathLike, engage_time: Optional[float] = None, title: str = "DER output voltages") -> Path:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for col in [c for c in traj.columns if c.endswith(".vod") and not c.startswith("z.")]:
        ax.plot(traj["t"], traj[col], label=col.replace(".vod", " v_od"))
    if engage_time is not None:
        ax.axvline(engage_time, color="k", linestyle="--", linewidth=0.8, label="controller engaged")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("v_od [V]")
    ax.set_title(title)
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)


def mae_curves(curves: Dict[str, pd.DataFrame], path: PathLike, bound: Optional[float] = None) -> Path:
    """curves maps a run label to a frame with columns t and mae."""
    fig, ax = plt.subplots(figsize=(8, 4.5))
    single = len(curves) == 1
    for label, df in curves.items():
        ax.plot(df["t"], df["mae"], linewidth=1.2 if single else 0.6, alpha=1.0 if single else 0.7, label=label if single else None)
    if bound is not None:
        ax.axhline(bound, color="r", linestyle=":", linewidth=0.8, label="bound")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("MAE")
    ax.set_title("Model error of the lifted model" + ("" if single else f" ({len(curves)} runs)"))
    ax.grid(True, alpha=0.3)
    if single or bound is not None:
        ax.legend(loc="best")
    return _save(fig, path)


def state_error_bars(breakdown: pd.DataFrame, path: PathLike) -> Path:
    fig, ax = plt.subplots(figsize=(max(8, 0.22 * len(breakdown)), 4.5))
    ax.bar(range(len(breakdown)), breakdown["abs_error"])
    ax.set_xticks(range(len(breakdown)))
    ax.set_xticklabels(breakdown["state"], rotation=90, fontsize=7)
    ax.set_ylabel("absolute error")
    t = breakdown["t"].iloc[0] if "t" in breakdown.columns and len(breakdown) else None
    ax.set_title("Per-state model error" + (f" at t = {t:g} s" if t is not None else ""))
    ax.grid(True, axis="y", alpha=0.3)
    return _save(fig, path)


def pole_scatter(poles: pd.DataFrame, path: PathLike) -> Path:
    fig, ax = plt.subplots(figsize=(7, 5))
    for loop, marker in (("open", "x"), ("closed", "o")):
        sub = poles[poles["loop"] == loop]
        if len(sub):
            ax.scatter(sub["real"], sub["imag"], marker=marker, s=18, label=f"{loop} loop", facecolors="none" if marker == "o" else None)
    ax.axvline(0.0, color="k", linewidth=0.6)
    ax.set_xscale("symlog", linthresh=1e-3)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_title("Poles of the lifted model")
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    return _save(fig, path)
