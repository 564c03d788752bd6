"""
Assembly of the lifted linear model  dz/dt = A z + B U,  y = C z.
"""

import hashlib

import numpy as np
from pydantic import BaseModel

from core.koopman.layout import LiftedLayout
from core.koopman.network import NetMatrices, build_network
from core.logging_config import get_logger
from core.microgrid.params import MgParams

logger = get_logger("LiftedModel")


class LiftedModel(BaseModel):
    model_config = {"arbitrary_types_allowed": True}

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    layout: LiftedLayout
    net: NetMatrices
    params: MgParams

    @property
    def N(self) -> int:
        return self.layout.N

    @property
    def M(self) -> int:
        return self.layout.M

    @property
    def m(self) -> int:
        return self.layout.m

    @property
    def obs_index(self):
        return self.layout.as_dict()

    def B_split(self):
        """(B1, B2, B3): columns acting on u, on U_pq and on U_net."""
        lay = self.layout
        return self.B[:, : lay.upq_start], self.B[:, lay.upq_start : lay.unet_start], self.B[:, lay.unet_start :]

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for mat in (self.A, self.B, self.C):
            digest.update(np.ascontiguousarray(mat, dtype=np.float64).tobytes())
        return digest.hexdigest()


def build_lifted(params: MgParams) -> LiftedModel:
    """
    Lifted model for a topology with resistive loads and at most one DER per bus.

    Returns:
        LiftedModel with N = 10 + 9(m-1) + 6m + 6(m-1) + 6q observables and
        M = 3m + 2(m-1) + 2q lifted inputs.
    """
    layout = LiftedLayout(params.index)
    net = build_network(params, layout)
    m, der, a = params.m, params.der, params.a
    w = params.omega_n
    N, M = layout.N, layout.M
    A = np.zeros((N, N))
    B = np.zeros((N, M))
    C = np.zeros((m, N))

    def put(row: str, col: str, value: float):
        A[layout.obs(row), layout.obs(col)] += value

    for i in range(m):
        d = f"der{i + 1}"
        Kpv, Kiv, F = der.K_pv[i], der.K_iv[i], der.F[i]
        wCf = w * der.C_f[i]

        put(f"{d}.phid", f"{d}.vod", -1.0)
        put(f"{d}.phid", f"{d}.Q", -der.D_Q[i])
        put(f"{d}.phiq", f"{d}.voq", -1.0)

        put(f"{d}.gammad", f"{d}.phid", Kiv)
        put(f"{d}.gammad", f"{d}.vod", -Kpv)
        put(f"{d}.gammad", f"{d}.Q", -Kpv * der.D_Q[i])
        put(f"{d}.gammad", f"{d}.iod", F)
        put(f"{d}.gammad", f"{d}.voq", -wCf)
        put(f"{d}.gammad", f"{d}.ild", -1.0)
        put(f"{d}.gammaq", f"{d}.phiq", Kiv)
        put(f"{d}.gammaq", f"{d}.voq", -Kpv)
        put(f"{d}.gammaq", f"{d}.ioq", F)
        put(f"{d}.gammaq", f"{d}.vod", wCf)
        put(f"{d}.gammaq", f"{d}.ilq", -1.0)

        put(f"{d}.ild", f"{d}.phid", a[i, 1])
        put(f"{d}.ild", f"{d}.gammad", a[i, 2])
        put(f"{d}.ild", f"{d}.ild", -a[i, 3])
        put(f"{d}.ild", f"{d}.Q", -a[i, 0])
        put(f"{d}.ild", f"{d}.vod", -a[i, 4])
        put(f"{d}.ild", f"{d}.iod", a[i, 6])
        put(f"{d}.ild", f"{d}.voq", -a[i, 5])
        put(f"{d}.ilq", f"{d}.phiq", a[i, 1])
        put(f"{d}.ilq", f"{d}.gammaq", a[i, 2])
        put(f"{d}.ilq", f"{d}.ilq", -a[i, 3])
        put(f"{d}.ilq", f"{d}.voq", -a[i, 4])
        put(f"{d}.ilq", f"{d}.ioq", a[i, 6])
        put(f"{d}.ilq", f"{d}.vod", a[i, 5])

        put(f"{d}.vod", f"{d}.ild", 1.0 / der.C_f[i])
        put(f"{d}.vod", f"{d}.iod", -1.0 / der.C_f[i])
        put(f"{d}.vod", f"{d}.voq", w)
        put(f"{d}.voq", f"{d}.ilq", 1.0 / der.C_f[i])
        put(f"{d}.voq", f"{d}.ioq", -1.0 / der.C_f[i])
        put(f"{d}.voq", f"{d}.vod", -w)

        if i > 0:
            put(f"{d}.delta", "der1.P", der.D_P[0])
            put(f"{d}.delta", f"{d}.P", -der.D_P[i])

        # power chain
        pq = f"pq{i + 1}"
        put(f"{d}.P", f"{pq}.z1P", 1.0)
        put(f"{d}.Q", f"{pq}.z1Q", 1.0)
        put(f"{pq}.z1P", f"{pq}.z2P", 1.0)
        put(f"{pq}.z1Q", f"{pq}.z2Q", 1.0)
        put(f"{pq}.z2P", f"{pq}.z2P", -der.omega_c[i])
        put(f"{pq}.z2Q", f"{pq}.z2Q", -der.omega_c[i])

        B[layout.obs(f"{d}.phid"), i] = 1.0
        B[layout.obs(f"{d}.gammad"), i] = Kpv
        B[layout.obs(f"{d}.ild"), i] = params.b[i]
        B[layout.obs(f"{pq}.z2P"), layout.upq_start + 2 * i] = 1.0
        B[layout.obs(f"{pq}.z2Q"), layout.upq_start + 2 * i + 1] = 1.0
        C[i, layout.obs(f"{d}.vod")] = 1.0

    # output current of the reference DER stays in its block
    req1 = params.r_eq_surrogate[params.der_bus[0]]
    Lc1 = der.L_c[0]
    put("der1.iod", "der1.iod", -a[0, 7])
    put("der1.iod", "der1.vod", 1.0 / Lc1)
    put("der1.iod", "der1.ioq", w)
    put("der1.ioq", "der1.ioq", -a[0, 7])
    put("der1.ioq", "der1.voq", 1.0 / Lc1)
    put("der1.ioq", "der1.iod", -w)
    for l, sign in params.bus_incidence[params.ders[0].bus].lines:
        put("der1.iod", f"line{l + 1}.iD", -req1 * sign / Lc1)
        put("der1.ioq", f"line{l + 1}.iQ", -req1 * sign / Lc1)

    # network chain
    nn = layout.n_net
    x0, x1, x2 = layout.net_start, layout.net1_start, layout.net2_start
    A[x0 : x0 + nn, x1 : x1 + nn] += np.eye(nn)
    A[x1 : x1 + nn, x2 : x2 + nn] += np.eye(nn)
    A[x2 : x2 + nn, x2 : x2 + nn] += net.A_net
    B[x2 : x2 + nn, layout.unet_start :] = np.eye(nn)

    model = LiftedModel(A=A, B=B, C=C, layout=layout, net=net, params=params)
    logger.info(f"Lifted model: N={N}, M={M}, nnz(A)={np.count_nonzero(A)}, nnz(B)={np.count_nonzero(B)}")
    return model
