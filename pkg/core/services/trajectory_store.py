"""
Trajectory Store
Writes and reads trajectory CSVs and the run manifest that precedes them.
One CSV per run: t, state columns, u.*, y.*, and optionally z.*, U.*, zI.*.
"""

import hashlib
import json
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from core.exceptions import ArtifactError
from core.logging_config import get_logger
from core.models.artifacts import ResultFile, RunManifest, utc_now
from core.models.scenario import Trajectory

logger = get_logger("TrajectoryStore")

_PREFIXES = ("u.", "y.", "z.", "U.", "zI.")


class TrajectoryStore:
    """
    Owns one output directory. The manifest is written first and rewritten as
    result files are added; every result carries the hash of the initial manifest.
    """

    MANIFEST = "manifest.json"

    def __init__(self, out_dir: Union[str, Path], manifest: RunManifest):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.manifest = manifest
        self.manifest_hash = hashlib.sha256(
            manifest.model_dump_json(exclude={"results", "finished_at"}).encode()
        ).hexdigest()
        self._write_manifest()

    def _write_manifest(self):
        (self.out_dir / self.MANIFEST).write_text(self.manifest.model_dump_json(indent=2))

    def add(self, path: Path, kind: str) -> Path:
        self.manifest.results.append(ResultFile(path=path.name, kind=kind, manifest_hash=self.manifest_hash))
        self._write_manifest()
        return path

    def write_trajectory(self, traj: Trajectory, filename: str) -> Path:
        path = self.out_dir / filename
        trajectory_frame(traj).to_csv(path, index=False)
        logger.info(f"Wrote {path}")
        return self.add(path, "trajectory")

    def write_frame(self, df: pd.DataFrame, filename: str, kind: str = "report") -> Path:
        path = self.out_dir / filename
        df.to_csv(path, index=False)
        return self.add(path, kind)

    def write_text(self, text: str, filename: str, kind: str = "report") -> Path:
        path = self.out_dir / filename
        path.write_text(text)
        return self.add(path, kind)

    def close(self):
        self.manifest.finished_at = utc_now()
        self._write_manifest()


def trajectory_frame(traj: Trajectory) -> pd.DataFrame:
    m = traj.u.shape[1]
    columns = {"t": traj.times}
    for k, name in enumerate(traj.state_names):
        columns[name] = traj.x[:, k]
    for i in range(m):
        columns[f"u.{i + 1}"] = traj.u[:, i]
    for i in range(traj.y.shape[1]):
        columns[f"y.{i + 1}"] = traj.y[:, i]
    if traj.z is not None and traj.obs_names is not None:
        for k, name in enumerate(traj.obs_names):
            columns[f"z.{name}"] = traj.z[:, k]
    if traj.U is not None and traj.input_names is not None:
        for k, name in enumerate(traj.input_names):
            columns[f"U.{name}"] = traj.U[:, k]
    if traj.z_I is not None:
        for i in range(traj.z_I.shape[1]):
            columns[f"zI.{i + 1}"] = traj.z_I[:, i]
    return pd.DataFrame(columns)


def _block(df: pd.DataFrame, prefix: str) -> Tuple[Optional[np.ndarray], Tuple[str, ...]]:
    cols = [c for c in df.columns if c.startswith(prefix)]
    if not cols:
        return None, ()
    return df[cols].to_numpy(dtype=float), tuple(c[len(prefix) :] for c in cols)


def read_trajectory(path: Union[str, Path], kind: str = "full") -> Trajectory:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"trajectory not found: {path}")
    try:
        df = pd.read_csv(path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
        raise ArtifactError(f"unreadable trajectory {path}: {e}") from e
    if df.empty or "t" not in df.columns:
        raise ArtifactError(f"empty trajectory: {path}")

    state_cols = [c for c in df.columns if c != "t" and not c.startswith(_PREFIXES)]
    u, _ = _block(df, "u.")
    y, _ = _block(df, "y.")
    z, obs_names = _block(df, "z.")
    U, input_names = _block(df, "U.")
    z_I, _ = _block(df, "zI.")
    if "_lifted" in path.stem:
        kind = "lifted"
    try:
        return Trajectory(
            kind=kind,
            times=df["t"].to_numpy(dtype=float),
            x=df[state_cols].to_numpy(dtype=float),
            u=u if u is not None else np.zeros((len(df), 0)),
            y=y if y is not None else np.zeros((len(df), 0)),
            state_names=tuple(state_cols),
            z=z,
            U=U,
            z_I=z_I,
            obs_names=obs_names or None,
            input_names=input_names or None,
            meta={"path": str(path)},
        )
    except ValidationError as e:
        raise ArtifactError(f"inconsistent trajectory {path}: {e}") from e


def read_manifest(out_dir: Union[str, Path]) -> RunManifest:
    path = Path(out_dir) / TrajectoryStore.MANIFEST
    if not path.is_file():
        raise ArtifactError(f"manifest not found: {path}")
    try:
        return RunManifest.model_validate(json.loads(path.read_text()))
    except (json.JSONDecodeError, ValidationError) as e:
        raise ArtifactError(f"unreadable manifest {path}: {e}") from e


def trajectory_files(out_dir: Union[str, Path]) -> List[Path]:
    """Trajectory CSVs listed in the manifest, in the order they were written."""
    manifest = read_manifest(out_dir)
    return [Path(out_dir) / r.path for r in manifest.results if r.kind == "trajectory"]
