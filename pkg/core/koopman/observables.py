"""
Observable map z = g(x), lifted input U(x, u) and its split B U = F(x) + script_B(x) u.

First derivatives come from the Surrogate right-hand side; second derivatives
differentiate those equations once more in closed form, with omega fixed at
omega_n in every coupling term.
"""

from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel

from core.exceptions import LiftingError
from core.koopman.builder import LiftedModel
from core.microgrid.dynamics import DynamicsMode, rhs
from core.microgrid.state_index import DER_SLOT


class Derivatives(BaseModel):
    """Per-DER arrays of shape (m,) and network vectors evaluated at one (x, u)."""

    model_config = {"arbitrary_types_allowed": True}

    X: np.ndarray  # (m, 13) state rows
    Xd: np.ndarray  # (m, 13) first derivatives
    vo_dd: np.ndarray  # (m, 2)
    io_dd: np.ndarray  # (m, 2)
    delta_d: np.ndarray  # (m,)
    delta_dd: np.ndarray  # (m,)
    x_net: np.ndarray
    x_net_d: np.ndarray
    xi: np.ndarray
    xi_d: np.ndarray
    xi_dd: np.ndarray


def _pair(X: np.ndarray, d: str, q: str) -> np.ndarray:
    return np.column_stack([X[:, DER_SLOT[d]], X[:, DER_SLOT[q]]])


def _bilinear(v: np.ndarray, i: np.ndarray) -> np.ndarray:
    """Rows [vd*id + vq*iq, vq*id - vd*iq], i.e. V_o I_o for each DER."""
    return np.column_stack([v[:, 0] * i[:, 0] + v[:, 1] * i[:, 1], v[:, 1] * i[:, 0] - v[:, 0] * i[:, 1]])


def _xi(vo: np.ndarray, io: np.ndarray) -> np.ndarray:
    return np.concatenate([io[0], vo[1:].ravel()])


def _check(model: LiftedModel, x: np.ndarray, u: Optional[np.ndarray]):
    if np.shape(x) != (model.params.n,):
        raise LiftingError(f"state has shape {np.shape(x)}, expected ({model.params.n},)")
    if u is not None and np.shape(u) != (model.m,):
        raise LiftingError(f"input has shape {np.shape(u)}, expected ({model.m},)")


def derivatives(model: LiftedModel, x: np.ndarray, u: np.ndarray) -> Derivatives:
    params = model.params
    der = params.der
    w = params.omega_n
    index = params.index

    xdot = rhs(x, u, params, DynamicsMode.SURROGATE)
    X, lines, _ = index.split(x)
    Xd, lines_d, _ = index.split(xdot)

    vo, io = _pair(X, "vod", "voq"), _pair(X, "iod", "ioq")
    vo_d, io_d = _pair(Xd, "vod", "voq"), _pair(Xd, "iod", "ioq")
    il_d = _pair(Xd, "ild", "ilq")

    vo_dd = np.column_stack(
        [
            (il_d[:, 0] - io_d[:, 0]) / der.C_f + w * vo_d[:, 1],
            (il_d[:, 1] - io_d[:, 1]) / der.C_f - w * vo_d[:, 0],
        ]
    )

    delta = X[:, DER_SLOT["delta"]]
    delta_d = Xd[:, DER_SLOT["delta"]]
    P_d = Xd[:, DER_SLOT["P"]]
    delta_dd = der.D_P[0] * P_d[0] - der.D_P * P_d
    delta_dd[0] = 0.0

    rest = (params.S @ lines)[params.der_bus] if params.q else np.zeros((params.m, 2))
    rest_d = (params.S @ lines_d)[params.der_bus] if params.q else np.zeros((params.m, 2))
    req = params.r_eq_surrogate[params.der_bus]
    vb_d = np.column_stack(
        [
            req * (io_d[:, 0] + rest_d[:, 0] + delta * rest_d[:, 1] + delta_d * rest[:, 1]),
            req * (io_d[:, 1] + rest_d[:, 1] - delta * rest_d[:, 0] - delta_d * rest[:, 0]),
        ]
    )
    io_dd = np.column_stack(
        [
            (-der.r_c * io_d[:, 0] + vo_d[:, 0] - vb_d[:, 0]) / der.L_c + w * io_d[:, 1],
            (-der.r_c * io_d[:, 1] + vo_d[:, 1] - vb_d[:, 1]) / der.L_c - w * io_d[:, 0],
        ]
    )

    net = model.layout.net_state
    return Derivatives(
        X=X,
        Xd=Xd,
        vo_dd=vo_dd,
        io_dd=io_dd,
        delta_d=delta_d,
        delta_dd=delta_dd,
        x_net=x[net],
        x_net_d=xdot[net],
        xi=_xi(vo, io),
        xi_d=_xi(vo_d, io_d),
        xi_dd=_xi(vo_dd, io_dd),
    )


def _net_chain(model: LiftedModel, dv: Derivatives) -> Tuple[np.ndarray, np.ndarray]:
    net = model.net
    delta = dv.X[:, DER_SLOT["delta"]]
    D, D_d = net.D(delta), net.D(dv.delta_d)
    z1 = (net.A_net + D) @ dv.x_net + net.H @ dv.xi
    z2 = net.A_net @ z1 + net.H @ dv.xi_d + D_d @ dv.x_net + D @ z1
    return z1, z2


def _lift(model: LiftedModel, x: np.ndarray, dv: Derivatives) -> np.ndarray:
    lay = model.layout
    wc = model.params.der.omega_c
    z = np.zeros(lay.N)
    z[lay.identity_obs] = x[lay.identity_state]

    X, Xd = dv.X, dv.Xd
    vo, io = _pair(X, "vod", "voq"), _pair(X, "iod", "ioq")
    vo_d, io_d = _pair(Xd, "vod", "voq"), _pair(Xd, "iod", "ioq")
    z1 = _pair(Xd, "P", "Q")
    z2 = -wc[:, None] * z1 + wc[:, None] * (_bilinear(vo_d, io) + _bilinear(vo, io_d))
    for i, start in enumerate(lay.pq_start):
        z[start + 2 : start + 4] = z1[i]
        z[start + 4 : start + 6] = z2[i]

    n1, n2 = _net_chain(model, dv)
    nn = lay.n_net
    z[lay.net1_start : lay.net1_start + nn] = n1
    z[lay.net2_start : lay.net2_start + nn] = n2
    return z


def lift(model: LiftedModel, x: np.ndarray, u: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Observable vector for state x. The observables do not depend on the setpoints;
    u is accepted for symmetry with lifted_input.
    """
    _check(model, x, u)
    u = model.params.v_set() if u is None else u
    return _lift(model, x, derivatives(model, x, u))


def _lifted_input(model: LiftedModel, x: np.ndarray, u: np.ndarray, dv: Derivatives) -> np.ndarray:
    lay = model.layout
    wc = model.params.der.omega_c
    X, Xd = dv.X, dv.Xd
    vo, io = _pair(X, "vod", "voq"), _pair(X, "iod", "ioq")
    vo_d, io_d = _pair(Xd, "vod", "voq"), _pair(Xd, "iod", "ioq")

    U_pq = wc[:, None] * (_bilinear(dv.vo_dd, io) + 2.0 * _bilinear(vo_d, io_d) + _bilinear(vo, dv.io_dd))

    net = model.net
    delta = X[:, DER_SLOT["delta"]]
    n1, n2 = _net_chain(model, dv)
    U_net = (
        net.D(dv.delta_dd) @ dv.x_net
        + 2.0 * net.D(dv.delta_d) @ n1
        + net.D(delta) @ n2
        + net.H @ dv.xi_dd
    )

    U = np.zeros(lay.M)
    U[: lay.m] = u
    U[lay.upq_start : lay.unet_start] = U_pq.ravel()
    U[lay.unet_start :] = U_net
    return U


def lifted_input(model: LiftedModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """U = [u, U_pq1..U_pqm, U_net] at state x with setpoints u."""
    _check(model, x, u)
    u = np.asarray(u, dtype=float)
    return _lifted_input(model, x, u, derivatives(model, x, u))


def lift_with_input(model: LiftedModel, x: np.ndarray, u: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(z, U) from one shared derivative evaluation."""
    _check(model, x, u)
    u = np.asarray(u, dtype=float)
    dv = derivatives(model, x, u)
    return _lift(model, x, dv), _lifted_input(model, x, u, dv)


def input_matrix(model: LiftedModel, x: np.ndarray) -> np.ndarray:
    """
    script_B(x) = B1 + B2 script_B_pq(x) + B3 H B_bar, shape (N, m).
    Depends on x only through the output currents.
    """
    params = model.params
    der = params.der
    X, _, _ = params.index.split(x)
    m = params.m
    coeff = params.b * der.omega_c / der.C_f
    B_pq = np.zeros((2 * m, m))
    B_pq[2 * np.arange(m), np.arange(m)] = coeff * X[:, DER_SLOT["iod"]]
    B_pq[2 * np.arange(m) + 1, np.arange(m)] = -coeff * X[:, DER_SLOT["ioq"]]
    B1, B2, B3 = model.B_split()
    return B1 + B2 @ B_pq + B3 @ (model.net.H @ model.net.B_bar)


def decompose(model: LiftedModel, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns:
        (F(x), script_B(x)) with B U(x, u) = F(x) + script_B(x) u for every u.
    """
    _check(model, x, None)
    zero = np.zeros(model.m)
    F = model.B @ lifted_input(model, x, zero)
    return F, input_matrix(model, x)


def control_terms(model: LiftedModel, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(z, F(x), script_B(x)) from one derivative evaluation at u = 0."""
    _check(model, x, None)
    zero = np.zeros(model.m)
    dv = derivatives(model, x, zero)
    z = _lift(model, x, dv)
    F = model.B @ _lifted_input(model, x, zero, dv)
    return z, F, input_matrix(model, x)


def network_residual(model: LiftedModel, x: np.ndarray) -> np.ndarray:
    """(A_net + D) x_net + H xi minus the Surrogate derivative of x_net."""
    _check(model, x, None)
    dv = derivatives(model, x, model.params.v_set())
    z1, _ = _net_chain(model, dv)
    return z1 - dv.x_net_d


def lifting_residual(model: LiftedModel, x: np.ndarray, u: np.ndarray, h: Optional[float] = None) -> Tuple[np.ndarray, float]:
    """
    Directional derivative of the observables along the Surrogate vector field,
    minus A z + B U.

    The derivative uses a five-point stencil, exact for observables of degree
    four or less in x, so the residual is rounding only.

    Returns:
        (residual vector, max |residual| / max(1, max |dz/dt|))
    """
    _check(model, x, u)
    u = np.asarray(u, dtype=float)
    f = rhs(x, u, model.params, DynamicsMode.SURROGATE)
    if h is None:
        h = 1e-3 * max(1.0, np.max(np.abs(x))) / max(1.0, np.max(np.abs(f)))

    def g(s: float) -> np.ndarray:
        return lift(model, x + s * f, u)

    z_dot = (-g(2 * h) + 8 * g(h) - 8 * g(-h) + g(-2 * h)) / (12 * h)
    z, U = lift_with_input(model, x, u)
    residual = z_dot - (model.A @ z + model.B @ U)
    return residual, float(np.max(np.abs(residual)) / max(1.0, np.max(np.abs(z_dot))))
