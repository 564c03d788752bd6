from datetime import datetime, timezone
from typing import List, Optional

from pydantic import BaseModel, Field

from core.constants import TOOL_VERSION


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


class ResultFile(BaseModel):
    path: str
    kind: str = Field(description="trajectory | report | figure | controller | matrix")
    manifest_hash: str


class RunManifest(BaseModel):
    config_path: str
    config_sha256: str
    scenario: str
    seed: Optional[int] = None
    output_dir: str
    tool_version: str = TOOL_VERSION
    mode: str = "full"
    started_at: datetime = Field(default_factory=utc_now)
    finished_at: Optional[datetime] = None
    parameters: dict = Field(default_factory=dict, description="Scenario flags as given.")
    results: List[ResultFile] = Field(default_factory=list)


class ControllerFile(BaseModel):
    """Serialized LQI controller; the fingerprint ties it to one lifted model."""

    tool_version: str = TOOL_VERSION
    model_fingerprint: str
    N: int
    M: int
    m: int
    y_ref: List[float]
    K: List[List[float]]
    P: List[List[float]]
    z_inf: List[float]
    U_inf: List[float]
    Q_diag: List[float]
    R_diag: List[float]
    closed_loop_max_real: float
    open_loop_max_real: float
