"""
Nonlinear EMT right-hand side of the droop-controlled inverter microgrid.

Every DER is evaluated in its own dq frame; DER 1 defines the common frame.
DERs are vectorized: X is the (m, 13) view of the DER block of x, and the
per-DER constants come from MgParams.der.

Modes:
    FULL       exact rotations, omega_i in the filter/inductor coupling terms,
               omega_1 in line and RL-load coupling, RL loads integrated.
    SURROGATE  sin(delta) -> delta, cos(delta) -> 1, omega_n in every coupling
               term, RL loads folded into the bus resistance and frozen.
"""

from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np
from scipy import optimize

from core.constants import EQUILIBRIUM_ATOL, EQUILIBRIUM_XTOL, STATE_SCALES
from core.exceptions import ConfigError, SteadyStateError
from core.logging_config import get_logger
from core.microgrid.params import DerArrays, MgParams
from core.microgrid.state_index import DER_SLOT, DER_WIDTH
from core.models.params import DerParams, InitialConditions

logger = get_logger("Dynamics")

DerLike = Union[DerParams, DerArrays]

_DELTA, _P, _Q = DER_SLOT["delta"], DER_SLOT["P"], DER_SLOT["Q"]
_PHID, _PHIQ = DER_SLOT["phid"], DER_SLOT["phiq"]
_GD, _GQ = DER_SLOT["gammad"], DER_SLOT["gammaq"]
_ILD, _ILQ = DER_SLOT["ild"], DER_SLOT["ilq"]
_VOD, _VOQ = DER_SLOT["vod"], DER_SLOT["voq"]
_IOD, _IOQ = DER_SLOT["iod"], DER_SLOT["ioq"]


class DynamicsMode(str, Enum):
    FULL = "full"
    SURROGATE = "surrogate"


def power_filter_rhs(X: np.ndarray, der: DerLike) -> Tuple[np.ndarray, np.ndarray]:
    """
    Low-pass filtered instantaneous powers.
    X is one DER row (13,) or a stack (m, 13).
    """
    P, Q = X[..., _P], X[..., _Q]
    vod, voq, iod, ioq = X[..., _VOD], X[..., _VOQ], X[..., _IOD], X[..., _IOQ]
    dP = -der.omega_c * P + der.omega_c * (vod * iod + voq * ioq)
    dQ = -der.omega_c * Q + der.omega_c * (voq * iod - vod * ioq)
    return dP, dQ


def droop(X: np.ndarray, der: DerLike, v_set) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    omega = der.omega_n - der.D_P * X[..., _P]
    vod_ref = v_set - der.D_Q * X[..., _Q]
    return omega, vod_ref, np.zeros_like(vod_ref)


def inner_loops(X: np.ndarray, refs: Tuple[np.ndarray, np.ndarray], der: DerLike):
    """
    Voltage and current PI loops.

    Returns:
        (dphid, dphiq, dgammad, dgammaq, ild_ref, ilq_ref, vid_ref, viq_ref)
    """
    vod_ref, voq_ref = refs
    vod, voq, iod, ioq = X[..., _VOD], X[..., _VOQ], X[..., _IOD], X[..., _IOQ]
    ild, ilq = X[..., _ILD], X[..., _ILQ]

    dphid = vod_ref - vod
    dphiq = voq_ref - voq
    ild_ref = der.K_iv * X[..., _PHID] + der.K_pv * dphid + der.F * iod - der.omega_n * der.C_f * voq
    ilq_ref = der.K_iv * X[..., _PHIQ] + der.K_pv * dphiq + der.F * ioq + der.omega_n * der.C_f * vod

    dgd = ild_ref - ild
    dgq = ilq_ref - ilq
    vid_ref = -der.omega_n * der.L_f * ilq + der.K_ic * X[..., _GD] + der.K_pc * dgd
    viq_ref = der.omega_n * der.L_f * ild + der.K_ic * X[..., _GQ] + der.K_pc * dgq
    return dphid, dphiq, dgd, dgq, ild_ref, ilq_ref, vid_ref, viq_ref


def _check(x: np.ndarray, u: Optional[np.ndarray], params: MgParams):
    params.index.check(x)
    if u is not None and np.shape(u) != (params.m,):
        raise ConfigError(f"input has shape {np.shape(u)}, expected ({params.m},)")


def _global_currents(X: np.ndarray, mode: DynamicsMode) -> Tuple[np.ndarray, np.ndarray]:
    delta, iod, ioq = X[:, _DELTA], X[:, _IOD], X[:, _IOQ]
    if mode is DynamicsMode.FULL:
        c, s = np.cos(delta), np.sin(delta)
        return c * iod - s * ioq, s * iod + c * ioq
    return iod - delta * ioq, ioq + delta * iod


def _injections(X, lines, loads, params: MgParams, mode: DynamicsMode) -> np.ndarray:
    """Net current into each bus in the common frame, (nb, 2), excluding resistive loads."""
    iD, iQ = _global_currents(X, mode)
    inj = params.E @ np.column_stack([iD, iQ]) + params.S @ lines
    if mode is DynamicsMode.FULL and params.p:
        inj = inj - params.G @ loads
    return inj


def bus_voltages(x: np.ndarray, params: MgParams, mode: DynamicsMode = DynamicsMode.FULL) -> np.ndarray:
    """
    Bus voltages in the common frame, shape (nb, 2) with columns (vbD, vbQ).
    Resistive loads are eliminated: v_b = (1/r_n + sum 1/R)^-1 * injected current.
    """
    params.index.check(x)
    X, lines, loads = params.index.split(x)
    r_eq = params.r_eq_full if mode is DynamicsMode.FULL else params.r_eq_surrogate
    return r_eq[:, None] * _injections(X, lines, loads, params, mode)


def _local_bus_voltages(X, inj, params: MgParams, mode: DynamicsMode) -> Tuple[np.ndarray, np.ndarray]:
    # own current stays in the local frame, the rest of the bus injection is rotated into it
    delta = X[:, _DELTA]
    iD, iQ = _global_currents(X, mode)
    restD = inj[params.der_bus, 0] - iD
    restQ = inj[params.der_bus, 1] - iQ
    if mode is DynamicsMode.FULL:
        c, s = np.cos(delta), np.sin(delta)
        r_eq = params.r_eq_full[params.der_bus]
    else:
        c, s = 1.0, delta
        r_eq = params.r_eq_surrogate[params.der_bus]
    vbd = r_eq * (X[:, _IOD] + (c * restD + s * restQ))
    vbq = r_eq * (X[:, _IOQ] + (c * restQ - s * restD))
    return vbd, vbq


def rhs(x: np.ndarray, u: np.ndarray, params: MgParams, mode: DynamicsMode = DynamicsMode.FULL) -> np.ndarray:
    """
    dx/dt of the microgrid.

    Args:
        x: Flat state, ordered per params.index.
        u: Droop voltage setpoints, one per DER.
        params: Built microgrid parameters.
        mode: FULL or SURROGATE.

    Returns:
        New array with the same layout as x.
    """
    _check(x, u, params)
    der = params.der
    X, lines, loads = params.index.split(x)
    dx = np.zeros_like(x, dtype=float)
    dX, dlines, dloads = params.index.split(dx)

    omega, vod_ref, voq_ref = droop(X, der, np.asarray(u, dtype=float))
    dphid, dphiq, dgd, dgq, _, _, vid, viq = inner_loops(X, (vod_ref, voq_ref), der)
    dP, dQ = power_filter_rhs(X, der)

    surrogate = mode is DynamicsMode.SURROGATE
    omega_cpl = np.full(params.m, params.omega_n) if surrogate else omega
    omega_net = params.omega_n if surrogate else omega[0]

    ild, ilq = X[:, _ILD], X[:, _ILQ]
    vod, voq = X[:, _VOD], X[:, _VOQ]
    iod, ioq = X[:, _IOD], X[:, _IOQ]

    inj = _injections(X, lines, loads, params, mode)
    vbd, vbq = _local_bus_voltages(X, inj, params, mode)

    dX[:, _DELTA] = omega - omega[0]
    dX[:, _P] = dP
    dX[:, _Q] = dQ
    dX[:, _PHID] = dphid
    dX[:, _PHIQ] = dphiq
    dX[:, _GD] = dgd
    dX[:, _GQ] = dgq
    dX[:, _ILD] = (-der.r_f * ild + vid - vod) / der.L_f + omega_cpl * ilq
    dX[:, _ILQ] = (-der.r_f * ilq + viq - voq) / der.L_f - omega_cpl * ild
    dX[:, _VOD] = (ild - iod) / der.C_f + omega_cpl * voq
    dX[:, _VOQ] = (ilq - ioq) / der.C_f - omega_cpl * vod
    dX[:, _IOD] = (-der.r_c * iod + vod - vbd) / der.L_c + omega_cpl * ioq
    dX[:, _IOQ] = (-der.r_c * ioq + voq - vbq) / der.L_c - omega_cpl * iod
    # reference frame by definition
    dX[0, _DELTA] = 0.0

    if params.q:
        r_eq = params.r_eq_surrogate if surrogate else params.r_eq_full
        vb = r_eq[:, None] * inj
        drop = -(params.S.T @ vb)
        dlines[:, 0] = (drop[:, 0] - params.line_r * lines[:, 0]) / params.line_L + omega_net * lines[:, 1]
        dlines[:, 1] = (drop[:, 1] - params.line_r * lines[:, 1]) / params.line_L - omega_net * lines[:, 0]

    if params.p and not surrogate:
        vb = params.r_eq_full[:, None] * inj
        vl = vb[params.rl_bus]
        dloads[:, 0] = (vl[:, 0] - params.rl_R * loads[:, 0]) / params.rl_L + omega_net * loads[:, 1]
        dloads[:, 1] = (vl[:, 1] - params.rl_R * loads[:, 1]) / params.rl_L - omega_net * loads[:, 0]

    return dx


def listed_state(params: MgParams, table: InitialConditions) -> np.ndarray:
    """
    State built directly from the listed voltages and currents.
    P and Q take the instantaneous powers, phi and gamma the values that null the
    PI loops at the listed currents, and RL-load currents the resistive share of
    the bus voltage.
    """
    m, q = params.m, params.q
    for name in ("vod", "voq", "iod", "ioq", "ild", "ilq", "delta"):
        if len(getattr(table, name)) != m:
            raise ConfigError(f"initial.{name} needs {m} values, got {len(getattr(table, name))}")
    if len(table.line_iD) != q or len(table.line_iQ) != q:
        raise ConfigError(f"initial line currents need {q} values each")

    der = params.der
    x = np.zeros(params.n)
    X, lines, loads = params.index.split(x)
    vod, voq = np.asarray(table.vod, float), np.asarray(table.voq, float)
    iod, ioq = np.asarray(table.iod, float), np.asarray(table.ioq, float)
    ild, ilq = np.asarray(table.ild, float), np.asarray(table.ilq, float)

    X[:, _DELTA] = table.delta
    X[0, _DELTA] = 0.0
    X[:, _VOD], X[:, _VOQ] = vod, voq
    X[:, _IOD], X[:, _IOQ] = iod, ioq
    X[:, _ILD], X[:, _ILQ] = ild, ilq
    X[:, _P] = vod * iod + voq * ioq
    X[:, _Q] = voq * iod - vod * ioq

    omega = der.omega_n - der.D_P * X[:, _P]
    X[:, _PHID] = (ild - der.F * iod + der.omega_n * der.C_f * voq) / der.K_iv
    X[:, _PHIQ] = (ilq - der.F * ioq - der.omega_n * der.C_f * vod) / der.K_iv
    X[:, _GD] = (der.r_f * ild + vod + (der.omega_n - omega) * der.L_f * ilq) / der.K_ic
    X[:, _GQ] = (der.r_f * ilq + voq + (omega - der.omega_n) * der.L_f * ild) / der.K_ic

    if q:
        lines[:, 0] = table.line_iD
        lines[:, 1] = table.line_iQ
    if params.p:
        vb = bus_voltages(x, params, DynamicsMode.SURROGATE)
        loads[:] = vb[params.rl_bus] / params.rl_R[:, None]
    return x


def operating_point(
    params: MgParams,
    seed: np.ndarray,
    u: Optional[np.ndarray] = None,
    mode: DynamicsMode = DynamicsMode.FULL,
) -> np.ndarray:
    """
    Equilibrium of rhs near seed at the setpoints u (default v_set), with the
    reference angle held at zero.

    Raises:
        SteadyStateError: no root with max |dx/dt| below EQUILIBRIUM_ATOL.
    """
    _check(seed, u, params)
    u = params.v_set() if u is None else np.asarray(u, dtype=float)
    x0 = np.asarray(seed, dtype=float).copy()
    if not np.all(np.isfinite(x0)):
        raise SteadyStateError("seed state has non-finite entries")
    x0[params.index.der(0, "delta")] = 0.0
    free = np.flatnonzero(np.arange(params.n) != params.index.der(0, "delta"))
    typical = np.array([STATE_SCALES.get(name.split(".")[-1], 1.0) for name in params.index.names])
    scale = np.maximum(np.abs(x0), typical)[free]

    def _point(y: np.ndarray) -> np.ndarray:
        x = x0.copy()
        x[free] = x0[free] + scale * y
        return x

    def _residual(y: np.ndarray) -> np.ndarray:
        return rhs(_point(y), u, params, mode)[free] / scale

    worst, message = np.inf, "not attempted"
    for method in ("hybr", "lm"):
        sol = optimize.root(_residual, np.zeros(free.size), method=method, options={"xtol": EQUILIBRIUM_XTOL})
        x = _point(sol.x)
        worst = float(np.max(np.abs(rhs(x, u, params, mode)))) if np.all(np.isfinite(x)) else np.inf
        message = sol.message
        logger.debug(f"Equilibrium search ({method}): max |dx/dt| {worst:.3e} after {sol.nfev} evaluations")
        if worst <= EQUILIBRIUM_ATOL:
            return x
    raise SteadyStateError(f"no equilibrium near the seed state: max |dx/dt| = {worst:.3e} ({message})")


def initial_state(params: MgParams, table: InitialConditions, u: Optional[np.ndarray] = None) -> np.ndarray:
    """Full-model equilibrium at u (default v_set), seeded from the listed operating point."""
    seed = listed_state(params, table)
    x = operating_point(params, seed, u)
    shift = np.max(np.abs(x - seed))
    logger.info(f"Initial state: equilibrium at {shift:.3e} max deviation from the listed values")
    return x
