from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, model_validator


class DerParams(BaseModel):
    bus: int
    omega_n: float = Field(description="Nominal frequency, rad/s.")
    omega_c: float = Field(description="Power-filter corner frequency, rad/s.")
    D_P: float = Field(ge=0.0, description="P-omega droop gain, rad/s per W.")
    D_Q: float = Field(ge=0.0, description="Q-V droop gain, V per var.")
    K_pv: float
    K_iv: float = Field(gt=0.0, description="Voltage-loop integral gain.")
    K_pc: float
    K_ic: float = Field(gt=0.0, description="Current-loop integral gain.")
    F: float = Field(description="Output-current feed-forward gain.")
    L_f: float = Field(description="Filter inductance, H.")
    r_f: float = Field(description="Filter resistance, ohm.")
    C_f: float = Field(description="Filter capacitance, F.")
    L_c: float = Field(description="Coupling inductance, H.")
    r_c: float = Field(description="Coupling resistance, ohm.")
    v_set: float = Field(default=380.0, description="Droop voltage setpoint at rest, V.")
    S_rated: float = Field(default=10e3, description="Rating, VA.")

    @model_validator(mode="after")
    def _positive_constants(self):
        for name in ("omega_n", "omega_c", "L_f", "r_f", "C_f", "L_c", "r_c"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        return self


class LineParams(BaseModel):
    from_bus: int
    to_bus: int
    r_line: float = Field(gt=0.0, description="Series resistance, ohm.")
    L_line: Optional[float] = Field(default=None, description="Series inductance, H.")
    x_line: Optional[float] = Field(
        default=None,
        description="Series reactance at the nominal frequency, ohm. Used when L_line is absent.",
    )

    @model_validator(mode="after")
    def _check(self):
        if self.from_bus == self.to_bus:
            raise ValueError(f"line connects bus {self.from_bus} to itself")
        if self.L_line is None and self.x_line is None:
            raise ValueError("line needs L_line or x_line")
        if self.L_line is not None and self.L_line <= 0:
            raise ValueError(f"L_line must be positive, got {self.L_line}")
        if self.x_line is not None and self.x_line <= 0:
            raise ValueError(f"x_line must be positive, got {self.x_line}")
        return self

    def inductance(self, omega_n: float) -> float:
        if self.L_line is not None:
            return self.L_line
        return self.x_line / omega_n


class LoadParams(BaseModel):
    bus: int
    kind: Literal["resistive", "RL"] = "resistive"
    R_load: float = Field(gt=0.0)
    L_load: Optional[float] = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "RL" and (self.L_load is None or self.L_load <= 0):
            raise ValueError("RL load needs a positive L_load")
        return self


class NetworkConfig(BaseModel):
    r_n: Optional[float] = Field(default=None, description="Virtual resistance, ohm.")
    buses: Optional[List[int]] = None


class InitialConditions(BaseModel):
    """Per-DER initial values in the local frame, plus line currents."""

    vod: List[float]
    voq: List[float]
    iod: List[float]
    ioq: List[float]
    ild: List[float]
    ilq: List[float]
    delta: List[float]
    line_iD: List[float] = Field(default_factory=list)
    line_iQ: List[float] = Field(default_factory=list)
    omega: Optional[float] = Field(default=None, description="Listed frequency, informational only.")


class SimulationDefaults(BaseModel):
    t_end: float = 5.0
    engage_time: float = 1.0
    y_ref: Optional[List[float]] = None
    v_set: Optional[List[float]] = None
    record_stride: float = 1e-3
    method: Optional[str] = None
    step: Optional[float] = None
    rtol: Optional[float] = None
    atol: Optional[float] = None


class ControllerWeights(BaseModel):
    state_weight: float = Field(default=1.0, description="Diagonal Q weight on lifted states.")
    integrator_weight: float = Field(default=1e3, description="Diagonal Q weight on integrator states.")
    input_weight: float = Field(default=1.0, description="Diagonal R weight on lifted inputs.")
    Q_diag: Optional[List[float]] = None
    R_diag: Optional[List[float]] = None


class MicrogridConfig(BaseModel):
    name: str = "microgrid"
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    der_defaults: Dict[str, Any] = Field(
        default_factory=dict,
        description="Values applied to every DER unless the DER entry overrides them.",
    )
    ders: List[Dict[str, Any]] = Field(default_factory=list)
    lines: List[LineParams] = Field(default_factory=list)
    loads: List[LoadParams] = Field(default_factory=list)
    initial: Optional[InitialConditions] = None
    simulation: SimulationDefaults = Field(default_factory=SimulationDefaults)
    controller: ControllerWeights = Field(default_factory=ControllerWeights)
