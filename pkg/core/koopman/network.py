"""
Network part of the lifted model.

    d/dt x_net = (A_net + D(delta)) x_net + H xi

x_net holds the output currents of DERs 2..m and the line currents,
xi = [iod1, ioq1, vod2, voq2, ..., vodm, voqm], and D is linear in the
angles of DERs 2..m, stored as one basis matrix per angle.
"""

from typing import List

import numpy as np
from pydantic import BaseModel

from core.exceptions import LiftingError
from core.koopman.layout import LiftedLayout
from core.microgrid.params import MgParams


class NetMatrices(BaseModel):
    model_config = {"arbitrary_types_allowed": True}

    A_net: np.ndarray  # (nn, nn)
    H: np.ndarray  # (nn, 2m)
    D_basis: np.ndarray  # (m-1, nn, nn), D = sum_j delta_j D_basis[j-1]
    B_bar: np.ndarray  # (2m, m), setpoint coefficients inside d2/dt2 xi

    def D(self, delta: np.ndarray) -> np.ndarray:
        """delta is the full length-m angle vector; DER 1 contributes nothing."""
        if self.D_basis.shape[0] == 0:
            return np.zeros_like(self.A_net)
        return np.tensordot(delta[1:], self.D_basis, axes=1)


def check_liftable(params: MgParams):
    """The block placement supports one DER per bus and resistive loads only."""
    if params.p:
        rl = [params.loads[k].bus for k in params.rl_loads]
        raise LiftingError(f"RL loads at bus(es) {rl} cannot enter the lifted model; use resistive loads")
    for bus, inc in params.bus_incidence.items():
        if len(inc.ders) > 1:
            raise LiftingError(f"bus {bus} hosts DERs {[d + 1 for d in inc.ders]}; the lifted model allows one DER per bus")


def _bus_of(params: MgParams, bus: int) -> float:
    return float(params.r_eq_surrogate[params.bus_position(bus)])


def build_network(params: MgParams, layout: LiftedLayout) -> NetMatrices:
    check_liftable(params)
    m, q = params.m, params.q
    nn = layout.n_net
    der = params.der
    A = np.zeros((nn, nn))
    H = np.zeros((nn, 2 * m))
    Dj: List[np.ndarray] = [np.zeros((nn, nn)) for _ in range(m - 1)]
    w = params.omega_n

    def pos(name: str) -> int:
        return layout.net(name)

    # output currents of DERs 2..m
    for j in range(1, m):
        d, qd = pos(f"der{j + 1}.iod"), pos(f"der{j + 1}.ioq")
        bus = params.ders[j].bus
        req = _bus_of(params, bus)
        Lc = der.L_c[j]
        A[d, d] = A[qd, qd] = -(der.r_c[j] + req) / Lc
        A[d, qd] = w
        A[qd, d] = -w
        H[d, 2 * j] = 1.0 / Lc
        H[qd, 2 * j + 1] = 1.0 / Lc
        for l, sign in params.bus_incidence[bus].lines:
            c = req * sign / Lc
            lD, lQ = pos(f"line{l + 1}.iD"), pos(f"line{l + 1}.iQ")
            A[d, lD] -= c
            A[qd, lQ] -= c
            Dj[j - 1][d, lQ] -= c
            Dj[j - 1][qd, lD] += c

    # line currents
    S = params.S
    for l, line in enumerate(params.lines):
        lD, lQ = pos(f"line{l + 1}.iD"), pos(f"line{l + 1}.iQ")
        L = params.line_L[l]
        f_pos, t_pos = params.bus_position(line.from_bus), params.bus_position(line.to_bus)
        req_f, req_t = params.r_eq_surrogate[f_pos], params.r_eq_surrogate[t_pos]
        for k in range(q):
            c = (req_f * S[f_pos, k] - req_t * S[t_pos, k]) / L
            kD, kQ = pos(f"line{k + 1}.iD"), pos(f"line{k + 1}.iQ")
            A[lD, kD] += c
            A[lQ, kQ] += c
        A[lD, lD] -= params.line_r[l] / L
        A[lQ, lQ] -= params.line_r[l] / L
        A[lD, lQ] += w
        A[lQ, lD] -= w

        for bus, side in ((line.from_bus, 1.0), (line.to_bus, -1.0)):
            c = side * _bus_of(params, bus) / L
            for i in params.bus_incidence[bus].ders:
                if i == 0:
                    H[lD, 0] += c
                    H[lQ, 1] += c
                    continue
                d, qd = pos(f"der{i + 1}.iod"), pos(f"der{i + 1}.ioq")
                A[lD, d] += c
                A[lQ, qd] += c
                Dj[i - 1][lD, qd] -= c
                Dj[i - 1][lQ, d] += c

    B_bar = np.zeros((2 * m, m))
    for j in range(1, m):
        B_bar[2 * j, j] = params.b[j] / der.C_f[j]

    D_basis = np.stack(Dj) if Dj else np.zeros((0, nn, nn))
    return NetMatrices(A_net=A, H=H, D_basis=D_basis, B_bar=B_bar)
