"""
Microgrid parameter building.
Reads a TOML topology file into MicrogridConfig, validates it and turns it into
MgParams: vectorized DER constants, bus incidence, equivalent bus resistances
and the derived coefficients used by the lifted model.
"""

import hashlib
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from core.config import settings
from core.exceptions import ArtifactError, ConfigError
from core.logging_config import get_logger
from core.microgrid.state_index import StateIndex
from core.models.params import DerParams, LineParams, LoadParams, MicrogridConfig

logger = get_logger("Params")

DER_FIELDS = (
    "omega_n",
    "omega_c",
    "D_P",
    "D_Q",
    "K_pv",
    "K_iv",
    "K_pc",
    "K_ic",
    "F",
    "L_f",
    "r_f",
    "C_f",
    "L_c",
    "r_c",
    "v_set",
    "S_rated",
)


class DerArrays:
    """DER constants stacked into length-m arrays, one attribute per DerParams field."""

    def __init__(self, ders: List[DerParams]):
        for name in DER_FIELDS:
            setattr(self, name, np.array([getattr(d, name) for d in ders], dtype=float))


class BusIncidence(BaseModel):
    bus: int
    ders: List[int] = Field(default_factory=list)
    loads: List[int] = Field(default_factory=list)
    lines: List[Tuple[int, int]] = Field(
        default_factory=list,
        description="(line index, sign): +1 when the line enters the bus, -1 when it leaves.",
    )


class MgParams(BaseModel):
    model_config = {"arbitrary_types_allowed": True, "frozen": True}

    name: str
    ders: List[DerParams]
    lines: List[LineParams]
    loads: List[LoadParams]
    r_n: float
    omega_n: float
    buses: List[int]
    bus_incidence: Dict[int, BusIncidence]
    der: DerArrays
    index: StateIndex

    line_r: np.ndarray  # (q,)
    line_L: np.ndarray  # (q,)
    der_bus: np.ndarray  # (m,) bus position of each DER
    rl_loads: List[int]  # indices into loads that carry state
    rl_bus: np.ndarray  # (p,) bus position of each RL load
    rl_R: np.ndarray
    rl_L: np.ndarray

    E: np.ndarray  # (nb, m) DER placement
    S: np.ndarray  # (nb, q) signed line incidence
    G: np.ndarray  # (nb, p) RL load placement
    r_eq_full: np.ndarray  # (nb,) r_n in parallel with resistive loads
    r_eq_surrogate: np.ndarray  # (nb,) same, RL loads counted as resistive

    a: np.ndarray  # (m, 9) a_{i,1..9}
    b: np.ndarray  # (m,)
    line_self: np.ndarray  # (q,) (r + Req_from + Req_to) / L
    line_from: np.ndarray  # (q,) Req_from / L
    line_to: np.ndarray  # (q,) Req_to / L

    @property
    def m(self) -> int:
        return len(self.ders)

    @property
    def q(self) -> int:
        return len(self.lines)

    @property
    def p(self) -> int:
        return len(self.rl_loads)

    @property
    def n(self) -> int:
        return self.index.n

    def v_set(self) -> np.ndarray:
        return self.der.v_set.copy()

    def bus_position(self, bus: int) -> int:
        return self.buses.index(bus)


def resolve_config_path(path_or_name: Union[str, Path]) -> Path:
    """
    A bare name is looked up under settings.CONFIG_DIR with a .toml suffix.
    """
    candidate = Path(path_or_name)
    if candidate.suffix == "" and not candidate.exists():
        candidate = Path(settings.CONFIG_DIR) / f"{candidate.name}.toml"
    if not candidate.is_file():
        raise ArtifactError(f"config file not found: {candidate}")
    return candidate


def config_digest(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _field_path(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        loc = ".".join(str(p) for p in item.get("loc", ()))
        parts.append(f"{loc}: {item.get('msg')}")
    return "; ".join(parts)


def load_config(path_or_name: Union[str, Path]) -> MicrogridConfig:
    path = resolve_config_path(path_or_name)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from e
    except OSError as e:
        raise ArtifactError(f"cannot read {path}: {e}") from e

    try:
        config = MicrogridConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"{path}: {_field_path(e)}") from e
    logger.debug(f"Loaded {path} ({len(config.ders)} DERs, {len(config.lines)} lines)")
    return config


def _der_params(config: MicrogridConfig) -> List[DerParams]:
    ders = []
    for k, entry in enumerate(config.ders):
        merged = {**config.der_defaults, **entry}
        try:
            ders.append(DerParams.model_validate(merged))
        except ValidationError as e:
            raise ConfigError(f"ders[{k}]: {_field_path(e)}") from e
    return ders


def _bus_list(config: MicrogridConfig, ders: List[DerParams]) -> List[int]:
    referenced = [d.bus for d in ders]
    referenced += [b for line in config.lines for b in (line.from_bus, line.to_bus)]
    referenced += [load.bus for load in config.loads]
    if config.network.buses is None:
        return sorted(set(referenced))

    declared = list(config.network.buses)
    if len(set(declared)) != len(declared):
        raise ConfigError(f"duplicate bus ids in network.buses: {declared}")
    dangling = sorted(set(referenced) - set(declared))
    if dangling:
        raise ConfigError(f"dangling bus reference(s) {dangling}; declared buses are {declared}")
    return declared


def build_params(config: MicrogridConfig, r_n: Optional[float] = None) -> MgParams:
    """
    Validate a topology description and compute everything derived from it.

    Args:
        config: Parsed topology/parameter description.
        r_n: Virtual resistance override. Falls back to network.r_n, then settings.

    Returns:
        MgParams with DER 1 as the frame reference.
    """
    if not config.ders:
        raise ConfigError("config lists no DERs")

    ders = _der_params(config)
    omega_n = ders[0].omega_n
    if any(not np.isclose(d.omega_n, omega_n, rtol=0, atol=1e-12) for d in ders):
        raise ConfigError("all DERs must share the same omega_n")

    r_n = r_n if r_n is not None else config.network.r_n
    r_n = r_n if r_n is not None else settings.VIRTUAL_RESISTANCE
    if r_n <= 0:
        raise ConfigError(f"virtual resistance must be positive, got {r_n}")

    buses = _bus_list(config, ders)
    pos = {bus: k for k, bus in enumerate(buses)}
    nb, m, q = len(buses), len(ders), len(config.lines)

    incidence = {bus: BusIncidence(bus=bus) for bus in buses}
    E = np.zeros((nb, m))
    for i, d in enumerate(ders):
        E[pos[d.bus], i] = 1.0
        incidence[d.bus].ders.append(i)

    S = np.zeros((nb, q))
    for l, line in enumerate(config.lines):
        S[pos[line.to_bus], l] = 1.0
        S[pos[line.from_bus], l] = -1.0
        incidence[line.to_bus].lines.append((l, 1))
        incidence[line.from_bus].lines.append((l, -1))

    g_res = np.zeros(nb)
    g_rl = np.zeros(nb)
    rl_loads: List[int] = []
    for k, load in enumerate(config.loads):
        incidence[load.bus].loads.append(k)
        if load.kind == "RL":
            rl_loads.append(k)
            g_rl[pos[load.bus]] += 1.0 / load.R_load
        else:
            g_res[pos[load.bus]] += 1.0 / load.R_load

    p = len(rl_loads)
    G = np.zeros((nb, p))
    for j, k in enumerate(rl_loads):
        G[pos[config.loads[k].bus], j] = 1.0

    r_eq_full = 1.0 / (1.0 / r_n + g_res)
    r_eq_surrogate = 1.0 / (1.0 / r_n + g_res + g_rl)

    arrays = DerArrays(ders)
    der_bus = np.array([pos[d.bus] for d in ders], dtype=int)
    a, b = der_coefficients(arrays, r_eq_surrogate[der_bus])

    line_r = np.array([line.r_line for line in config.lines], dtype=float)
    line_L = np.array([line.inductance(omega_n) for line in config.lines], dtype=float)
    req_from = np.array([r_eq_surrogate[pos[line.from_bus]] for line in config.lines], dtype=float)
    req_to = np.array([r_eq_surrogate[pos[line.to_bus]] for line in config.lines], dtype=float)

    params = MgParams(
        name=config.name,
        ders=ders,
        lines=list(config.lines),
        loads=list(config.loads),
        r_n=float(r_n),
        omega_n=float(omega_n),
        buses=buses,
        bus_incidence=incidence,
        der=arrays,
        index=StateIndex(m, q, p),
        line_r=line_r,
        line_L=line_L,
        der_bus=der_bus,
        rl_loads=rl_loads,
        rl_bus=np.array([pos[config.loads[k].bus] for k in rl_loads], dtype=int),
        rl_R=np.array([config.loads[k].R_load for k in rl_loads], dtype=float),
        rl_L=np.array([config.loads[k].L_load for k in rl_loads], dtype=float),
        E=E,
        S=S,
        G=G,
        r_eq_full=r_eq_full,
        r_eq_surrogate=r_eq_surrogate,
        a=a,
        b=b,
        line_self=(line_r + req_from + req_to) / line_L if q else np.zeros(0),
        line_from=req_from / line_L if q else np.zeros(0),
        line_to=req_to / line_L if q else np.zeros(0),
    )
    logger.info(f"Built '{config.name}': m={m}, q={q}, p={p}, n={params.n}, r_n={r_n:g}")
    return params


def der_coefficients(der: DerArrays, r_eq: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    a_{i,1..9} and b_i for every DER, with r_eq the equivalent resistance of the DER's bus.
    """
    Lf, Lc = der.L_f, der.L_c
    a = np.column_stack(
        [
            der.K_pc * der.K_pv * der.D_Q / Lf,
            der.K_pc * der.K_iv / Lf,
            der.K_ic / Lf,
            (der.r_f + der.K_pc) / Lf,
            (1.0 + der.K_pc * der.K_pv) / Lf,
            der.K_pc * der.omega_n * der.C_f / Lf,
            der.K_pc * der.F / Lf,
            (der.r_c + r_eq) / Lc,
            r_eq / Lc,
        ]
    )
    b = der.K_pc * der.K_pv / Lf
    return a, b
