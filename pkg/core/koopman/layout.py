"""
Positions of the lifted observables and lifted inputs.

z = [x_L1, x_L2..x_Lm, z_pq1..z_pqm, x_net, z_net1, z_net2]
U = [u (m), U_pq1..U_pqm (2 each), U_net]

Observables that are plain states carry the state's name (der2.vod, line1.iQ),
so the x-resident part of z can be mapped back onto the state vector.
"""

from typing import Dict, List, Tuple

import numpy as np

from core.microgrid.state_index import StateIndex

REF_SLOTS = ("phid", "phiq", "gammad", "gammaq", "ild", "ilq", "vod", "voq", "iod", "ioq")
DER_SLOTS = ("delta", "phid", "phiq", "gammad", "gammaq", "ild", "ilq", "vod", "voq")
PQ_SLOTS = ("P", "Q", "z1P", "z1Q", "z2P", "z2Q")


class LiftedLayout:
    def __init__(self, index: StateIndex):
        m, q = index.m, index.q
        self.m, self.q = m, q
        names: List[str] = []

        self.xl_start = []
        for i in range(m):
            self.xl_start.append(len(names))
            slots = REF_SLOTS if i == 0 else DER_SLOTS
            names.extend(f"der{i + 1}.{s}" for s in slots)

        self.pq_start = []
        for i in range(m):
            self.pq_start.append(len(names))
            names.extend(f"der{i + 1}.{s}" if s in ("P", "Q") else f"pq{i + 1}.{s}" for s in PQ_SLOTS)

        net_names = []
        for j in range(1, m):
            net_names += [f"der{j + 1}.iod", f"der{j + 1}.ioq"]
        for l in range(q):
            net_names += [f"line{l + 1}.iD", f"line{l + 1}.iQ"]
        self.n_net = len(net_names)
        self.net_names = tuple(net_names)

        self.net_start = len(names)
        names.extend(net_names)
        self.net1_start = len(names)
        names.extend(f"net1.{s}" for s in net_names)
        self.net2_start = len(names)
        names.extend(f"net2.{s}" for s in net_names)

        self.names: Tuple[str, ...] = tuple(names)
        self.N = len(names)
        self._positions: Dict[str, int] = {name: k for k, name in enumerate(names)}

        self.upq_start = m
        self.unet_start = 3 * m
        self.M = 3 * m + self.n_net
        self.input_names = tuple(
            [f"u{i + 1}" for i in range(m)]
            + [f"Upq{i + 1}.{ax}" for i in range(m) for ax in ("P", "Q")]
            + [f"Unet.{s}" for s in net_names]
        )

        # map between identity observables and state positions
        obs_pos, state_pos = [], []
        state_names = set(index.names)
        for name, k in self._positions.items():
            if name in state_names:
                obs_pos.append(k)
                state_pos.append(index.position(name))
        self.identity_obs = np.array(obs_pos, dtype=int)
        self.identity_state = np.array(state_pos, dtype=int)
        self.net_state = np.array([index.position(s) for s in net_names], dtype=int)
        self.n_state = index.n
        self.ref_delta = index.der(0, "delta")

    def __len__(self) -> int:
        return self.N

    def obs(self, name: str) -> int:
        try:
            return self._positions[name]
        except KeyError:
            raise KeyError(f"unknown observable {name!r}") from None

    def net(self, name: str) -> int:
        """Position of an x_net entry inside the network block."""
        return self.net_names.index(name)

    def as_dict(self) -> Dict[str, int]:
        return dict(self._positions)

    def state_from_lifted(self, z: np.ndarray) -> np.ndarray:
        """State vector carried by the identity observables; delta of DER 1 is 0."""
        x = np.zeros(self.n_state)
        x[self.identity_state] = z[self.identity_obs]
        return x
