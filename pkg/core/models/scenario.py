import hashlib
import json
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from core.constants import DEFAULT_ENGAGE_TIME, DEFAULT_RECORD_STRIDE
from core.models.numerics import IntegratorSpec


class PerturbationSpec(BaseModel):
    fraction: float = Field(default=0.3, ge=0.0, lt=1.0, description="Half-width of the uniform relative perturbation.")
    seed: Optional[int] = None


class Scenario(BaseModel):
    """
    One experiment on the microgrid: initial state, setpoint policy, span and recording.
    policy "constant" holds u_const throughout; "lqi" holds u_const until engage_time
    and applies the LQI law afterwards.
    """

    model_config = {"arbitrary_types_allowed": True}

    name: str = "open_loop"
    mode: Literal["full", "surrogate"] = "full"
    x0: np.ndarray
    u_const: List[float]
    policy: Literal["constant", "lqi"] = "constant"
    engage_time: float = DEFAULT_ENGAGE_TIME
    y_ref: Optional[List[float]] = None
    record_stride: float = DEFAULT_RECORD_STRIDE
    record_lifted: bool = False
    integrator: IntegratorSpec = Field(default_factory=IntegratorSpec)
    perturbation: Optional[PerturbationSpec] = None

    @model_validator(mode="after")
    def _check(self):
        t0, t1 = self.integrator.t_span
        if self.record_stride <= 0:
            raise ValueError(f"record_stride must be positive, got {self.record_stride}")
        if self.integrator.method == "RK4" and self.record_stride < self.integrator.step:
            raise ValueError("record_stride must not be smaller than the integrator step")
        if self.policy == "lqi":
            if not t0 <= self.engage_time <= t1:
                raise ValueError(f"engage_time {self.engage_time} outside t_span {self.integrator.t_span}")
            if self.y_ref is None:
                raise ValueError("lqi policy needs y_ref")
        return self

    @property
    def t_span(self) -> Tuple[float, float]:
        return self.integrator.t_span

    def digest(self) -> str:
        payload = self.model_dump(exclude={"x0"})
        payload["x0"] = np.asarray(self.x0, dtype=float).tolist()
        return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]


class Trajectory(BaseModel):
    """Sampled run. Arrays are indexed [sample, column]."""

    model_config = {"arbitrary_types_allowed": True}

    kind: Literal["full", "surrogate", "lifted"]
    times: np.ndarray
    x: np.ndarray
    u: np.ndarray
    y: np.ndarray
    state_names: Tuple[str, ...]
    z: Optional[np.ndarray] = None
    U: Optional[np.ndarray] = None
    z_I: Optional[np.ndarray] = None
    obs_names: Optional[Tuple[str, ...]] = None
    input_names: Optional[Tuple[str, ...]] = None
    meta: Dict[str, object] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self):
        T = len(self.times)
        if T and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        for name in ("x", "u", "y", "z", "U", "z_I"):
            arr = getattr(self, name)
            if arr is not None and arr.shape[0] != T:
                raise ValueError(f"{name} has {arr.shape[0]} records, expected {T}")
        return self

    def column(self, name: str) -> np.ndarray:
        return self.x[:, self.state_names.index(name)]

    def sample_at(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        return k


class RunOutcome(BaseModel):
    model_config = {"arbitrary_types_allowed": True}

    index: int
    seed: Optional[int] = None
    full: Optional[Trajectory] = None
    lifted: Optional[Trajectory] = None
    error: Optional[str] = None
    last_good_time: Optional[float] = None

    @property
    def ok(self) -> bool:
        return self.error is None
