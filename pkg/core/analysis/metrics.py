"""
Model-error and stability metrics.
"""

from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel
from tabulate import tabulate

from core.constants import STATE_SCALES
from core.control.lqi import LqiController, augment
from core.exceptions import ArtifactError
from core.koopman.builder import LiftedModel
from core.models.scenario import RunOutcome, Trajectory
from core.numerics.linalg import eigenvalues

MAE_BOUND = 1.0  # model-error bound checked for every run of an ensemble


class MaeSeries(BaseModel):
    model_config = {"arbitrary_types_allowed": True}

    times: np.ndarray
    mae: np.ndarray

    @property
    def final(self) -> float:
        return float(self.mae[-1])

    @property
    def max(self) -> float:
        return float(np.max(self.mae))

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame({"t": self.times, "mae": self.mae})


class PoleReport(BaseModel):
    model_config = {"arbitrary_types_allowed": True}

    open_loop: np.ndarray
    closed_loop: Optional[np.ndarray] = None

    @property
    def open_max_real(self) -> float:
        return float(np.max(self.open_loop.real))

    @property
    def closed_max_real(self) -> Optional[float]:
        return None if self.closed_loop is None else float(np.max(self.closed_loop.real))

    @staticmethod
    def verdict(max_real: Optional[float]) -> Optional[str]:
        if max_real is None:
            return None
        return "stable" if max_real < 0 else "unstable"

    def frame(self) -> pd.DataFrame:
        rows = [("open", v.real, v.imag) for v in self.open_loop]
        if self.closed_loop is not None:
            rows += [("closed", v.real, v.imag) for v in self.closed_loop]
        return pd.DataFrame(rows, columns=["loop", "real", "imag"])


def _aligned(full: Trajectory, lifted: Trajectory):
    if full.x.shape != lifted.x.shape:
        raise ArtifactError(f"trajectory shapes differ: {full.x.shape} vs {lifted.x.shape}")
    if not np.allclose(full.times, lifted.times, rtol=0, atol=1e-12):
        raise ArtifactError("trajectories are sampled on different time grids")
    if tuple(full.state_names) != tuple(lifted.state_names):
        raise ArtifactError("trajectories carry different state columns")


def mae(full: Trajectory, lifted: Trajectory) -> MaeSeries:
    """(1/n) sum_i |x_i(t) - z_x,i(t)| over the n original states, raw SI units."""
    _aligned(full, lifted)
    return MaeSeries(times=full.times.copy(), mae=np.mean(np.abs(full.x - lifted.x), axis=1))


def normalized_mae(full: Trajectory, lifted: Trajectory, floor: float = 1e-3) -> MaeSeries:
    """
    MAE with each state divided by |x_full(T)|, floored at `floor` times the
    typical magnitude of its state class.
    """
    _aligned(full, lifted)
    scales = np.array([STATE_SCALES.get(name.split(".")[-1], 1.0) for name in full.state_names])
    denom = np.maximum(np.abs(full.x[-1]), floor * scales)
    return MaeSeries(times=full.times.copy(), mae=np.mean(np.abs(full.x - lifted.x) / denom, axis=1))


def state_error_breakdown(full: Trajectory, lifted: Trajectory, t: float) -> pd.DataFrame:
    """
    |x_i(t) - z_x,i(t)| per named state at the sample nearest to t.
    The column mean equals mae at that sample.
    """
    _aligned(full, lifted)
    if not full.times[0] - 1e-12 <= t <= full.times[-1] + 1e-12:
        raise ArtifactError(f"t={t} outside the recorded span [{full.times[0]}, {full.times[-1]}]")
    k = full.sample_at(t)
    errors = np.abs(full.x[k] - lifted.x[k])
    return pd.DataFrame({"state": list(full.state_names), "abs_error": errors, "t": full.times[k]})


def dominant_states(breakdown: pd.DataFrame, count: int = 5) -> List[str]:
    return breakdown.sort_values("abs_error", ascending=False, kind="stable")["state"].head(count).tolist()


def spectrum_report(A: np.ndarray, A_closed: Optional[np.ndarray] = None) -> PoleReport:
    return PoleReport(
        open_loop=eigenvalues(A),
        closed_loop=None if A_closed is None else eigenvalues(A_closed),
    )


def pole_report(model: LiftedModel, ctrl: Optional[LqiController] = None) -> PoleReport:
    """Spectrum of A and, with a controller, of A~ - B~ K."""
    if ctrl is None:
        return spectrum_report(model.A)
    aug = augment(model)
    return spectrum_report(model.A, aug.A - aug.B @ ctrl.K)


def tracking_report(traj: Trajectory, y_ref: Sequence[float], engage_time: float, settle_time: float) -> pd.DataFrame:
    """
    Per DER: offset of v_od from y_ref just before engagement, and the largest
    deviation after settle_time.
    """
    y_ref = np.asarray(y_ref, dtype=float)
    before = traj.times <= engage_time
    after = traj.times >= settle_time
    rows = []
    for i in range(traj.y.shape[1]):
        pre = float(traj.y[before][-1, i] - y_ref[i]) if before.any() else float("nan")
        post = float(np.max(np.abs(traj.y[after, i] - y_ref[i]))) if after.any() else float("nan")
        rows.append({"der": i + 1, "pre_engage_offset": pre, "post_settle_max_error": post})
    return pd.DataFrame(rows)


def ensemble_summary(outcomes: Sequence[RunOutcome], bound: float = MAE_BOUND) -> pd.DataFrame:
    rows = []
    for o in outcomes:
        if o.ok:
            series = mae(o.full, o.lifted)
            rows.append(
                {
                    "run": o.index,
                    "final_mae": series.final,
                    "max_mae": series.max,
                    "below_bound": series.max < bound,
                    "error": "",
                }
            )
        else:
            rows.append({"run": o.index, "final_mae": np.nan, "max_mae": np.nan, "below_bound": False, "error": o.error})
    return pd.DataFrame(rows)


def render_summary(summary: pd.DataFrame, title: str = "Ensemble") -> str:
    ok = summary[summary["error"] == ""]
    stats = [
        ["runs", len(summary), "", ""],
        ["failed", int((summary["error"] != "").sum()), "", ""],
        ["final MAE (min/mean/max)", f"{ok['final_mae'].min():.4g}", f"{ok['final_mae'].mean():.4g}", f"{ok['final_mae'].max():.4g}"],
        ["max MAE (min/mean/max)", f"{ok['max_mae'].min():.4g}", f"{ok['max_mae'].mean():.4g}", f"{ok['max_mae'].max():.4g}"],
        ["runs above bound", int((~summary["below_bound"]).sum()), "", ""],
    ]
    return f"{title}\n" + tabulate(stats, tablefmt="github") + "\n\n" + tabulate(summary, headers="keys", tablefmt="github", showindex=False)
