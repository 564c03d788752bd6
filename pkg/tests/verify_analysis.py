"""
Reports and artifacts:
- MAE identities and the per-state breakdown
- pole and tracking reports, ensemble summaries
- the trajectory store writes its manifest first and reads back what it wrote
- figures are SVG files with deterministic bytes
"""

import json

import numpy as np
import pandas as pd
import pytest

from core.analysis import plots
from core.analysis.metrics import (
    dominant_states,
    ensemble_summary,
    mae,
    normalized_mae,
    render_summary,
    spectrum_report,
    state_error_breakdown,
    tracking_report,
)
from core.exceptions import ArtifactError
from core.models.artifacts import RunManifest
from core.models.scenario import RunOutcome, Trajectory
from core.services.trajectory_store import TrajectoryStore, read_manifest, read_trajectory, trajectory_files

NAMES = ("der1.vod", "der1.iod", "line1.iD")


def _traj(x, kind="full", times=None, y=None) -> Trajectory:
    x = np.asarray(x, dtype=float)
    times = np.arange(len(x)) * 0.1 if times is None else times
    return Trajectory(
        kind=kind,
        times=times,
        x=x,
        u=np.full((len(x), 1), 380.0),
        y=x[:, :1] if y is None else y,
        state_names=NAMES,
    )


@pytest.fixture
def pair(rng):
    x = rng.normal(size=(6, 3)) * [380.0, 10.0, 5.0]
    return _traj(x), _traj(x + [[0.3, -0.6, 0.9]], kind="lifted")


def _manifest(tmp_path, **overrides) -> RunManifest:
    fields = dict(config_path="configs/x.toml", config_sha256="0" * 64, scenario="pair", output_dir=str(tmp_path), seed=4)
    fields.update(overrides)
    return RunManifest(**fields)


# metrics


def test_mae_of_identical_runs_is_zero(pair):
    full, _ = pair
    series = mae(full, full)
    assert np.all(series.mae == 0.0)


def test_mae_of_a_constant_offset(pair):
    full, lifted = pair
    series = mae(full, lifted)
    assert series.mae == pytest.approx(np.full(6, 0.6))
    assert series.final == pytest.approx(0.6)
    assert list(series.frame().columns) == ["t", "mae"]


def test_normalized_mae_is_scale_free(pair):
    full, lifted = pair
    scaled_full = _traj(full.x * 10.0)
    scaled_lifted = _traj(lifted.x * 10.0, kind="lifted")
    assert normalized_mae(scaled_full, scaled_lifted).mae == pytest.approx(normalized_mae(full, lifted).mae)


def test_breakdown_mean_equals_mae(pair):
    full, lifted = pair
    breakdown = state_error_breakdown(full, lifted, 0.3)
    assert breakdown["state"].tolist() == list(NAMES)
    assert breakdown["abs_error"].mean() == pytest.approx(mae(full, lifted).mae[3])
    assert dominant_states(breakdown, 2) == ["line1.iD", "der1.iod"]


def test_breakdown_outside_the_span(pair):
    full, lifted = pair
    with pytest.raises(ArtifactError):
        state_error_breakdown(full, lifted, 7.0)


def test_mae_rejects_mismatched_runs(pair):
    full, _ = pair
    with pytest.raises(ArtifactError):
        mae(full, _traj(np.zeros((5, 3))))
    with pytest.raises(ArtifactError):
        mae(full, _traj(full.x, times=full.times + 0.05))


def test_spectrum_report_verdicts():
    report = spectrum_report(-np.eye(3), np.diag([-1.0, 2.0]))
    assert report.open_max_real == -1.0
    assert report.verdict(report.open_max_real) == "stable"
    assert report.verdict(report.closed_max_real) == "unstable"
    frame = report.frame()
    assert frame["loop"].tolist() == ["open"] * 3 + ["closed"] * 2


def test_tracking_report():
    times = np.array([0.0, 0.5, 1.0, 1.5, 2.0])
    y = np.array([[375.0, 390.0], [376.0, 389.0], [378.0, 385.0], [379.9, 380.2], [380.05, 380.0]])
    traj = _traj(np.zeros((5, 3)), times=times, y=y)
    report = tracking_report(traj, [380.0, 380.0], engage_time=1.0, settle_time=1.5)
    assert report["der"].tolist() == [1, 2]
    assert report["pre_engage_offset"].tolist() == pytest.approx([-2.0, 5.0])
    assert report["post_settle_max_error"].tolist() == pytest.approx([0.1, 0.2])


def test_ensemble_summary(pair):
    full, lifted = pair
    outcomes = [
        RunOutcome(index=0, full=full, lifted=lifted),
        RunOutcome(index=1, error="diverged", last_good_time=0.2),
    ]
    summary = ensemble_summary(outcomes, bound=1.0)
    assert summary["run"].tolist() == [0, 1]
    assert summary["below_bound"].tolist() == [True, False]
    assert summary["max_mae"].iloc[0] == pytest.approx(0.6)
    text = render_summary(summary, title="Batch")
    assert text.startswith("Batch\n")
    assert "diverged" in text


# trajectory store


def test_manifest_is_written_before_results(tmp_path):
    store = TrajectoryStore(tmp_path / "run", _manifest(tmp_path))
    manifest = read_manifest(tmp_path / "run")
    assert manifest.results == []
    assert manifest.seed == 4
    assert manifest.finished_at is None
    store.close()
    assert read_manifest(tmp_path / "run").finished_at is not None


def test_results_carry_the_manifest_hash(tmp_path, pair):
    store = TrajectoryStore(tmp_path, _manifest(tmp_path))
    full, lifted = pair
    store.write_trajectory(full, "pair_run0_full.csv")
    store.write_trajectory(lifted, "pair_run0_lifted.csv")
    store.write_text("ok\n", "summary.txt")
    data = json.loads((tmp_path / "manifest.json").read_text())
    assert [r["kind"] for r in data["results"]] == ["trajectory", "trajectory", "report"]
    assert {r["manifest_hash"] for r in data["results"]} == {store.manifest_hash}
    assert [p.name for p in trajectory_files(tmp_path)] == ["pair_run0_full.csv", "pair_run0_lifted.csv"]


def test_trajectory_csv_round_trip(tmp_path, pair):
    store = TrajectoryStore(tmp_path, _manifest(tmp_path))
    _, lifted = pair
    path = store.write_trajectory(lifted, "pair_run0_lifted.csv")
    header = pd.read_csv(path, nrows=0).columns.tolist()
    assert header == ["t", *NAMES, "u.1", "y.1"]
    back = read_trajectory(path)
    assert back.kind == "lifted"
    assert back.state_names == NAMES
    assert np.allclose(back.x, lifted.x, rtol=1e-12, atol=0)
    assert np.allclose(back.times, lifted.times)


def test_missing_and_empty_trajectories(tmp_path):
    with pytest.raises(ArtifactError):
        read_trajectory(tmp_path / "absent.csv")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ArtifactError):
        read_trajectory(empty)
    with pytest.raises(ArtifactError):
        read_manifest(tmp_path)


# figures


def test_figures_are_deterministic_svg(tmp_path, pair):
    full, lifted = pair
    curves = {"run0": mae(full, lifted).frame()}
    first = plots.mae_curves(curves, tmp_path / "a.svg", bound=1.0)
    second = plots.mae_curves(curves, tmp_path / "b.svg", bound=1.0)
    assert first.read_text().lstrip().startswith("<?xml")
    assert first.read_bytes() == second.read_bytes()


def test_voltage_and_pole_figures(tmp_path):
    traj = pd.DataFrame({"t": [0.0, 0.1, 0.2], "der1.vod": [380.0, 381.0, 380.5], "z.der1.vod": [1.0, 1.0, 1.0]})
    path = plots.voltage_traces(traj, tmp_path / "v.svg", engage_time=0.1)
    assert path.stat().st_size > 0
    poles = spectrum_report(-np.eye(2), -2.0 * np.eye(2)).frame()
    assert plots.pole_scatter(poles, tmp_path / "p.svg").is_file()
