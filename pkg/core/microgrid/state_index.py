from typing import Dict, List, Tuple

import numpy as np

from core.constants import DER_STATE_NAMES, LINE_STATE_NAMES, LOAD_STATE_NAMES
from core.exceptions import ConfigError

DER_WIDTH = len(DER_STATE_NAMES)
DER_SLOT: Dict[str, int] = {name: k for k, name in enumerate(DER_STATE_NAMES)}


class StateIndex:
    """
    Named positions inside the flat state vector
    x = [x_inv1 ... x_invm, x_line1 ... x_lineq, x_load1 ... x_loadp].
    DERs, lines and loads are numbered from 0 in code and from 1 in names.
    """

    def __init__(self, m: int, q: int, p: int):
        self.m = m
        self.q = q
        self.p = p
        self.n = DER_WIDTH * m + 2 * q + 2 * p
        self.line_offset = DER_WIDTH * m
        self.load_offset = self.line_offset + 2 * q

        names: List[str] = []
        for i in range(m):
            names.extend(f"der{i + 1}.{s}" for s in DER_STATE_NAMES)
        for l in range(q):
            names.extend(f"line{l + 1}.{s}" for s in LINE_STATE_NAMES)
        for k in range(p):
            names.extend(f"load{k + 1}.{s}" for s in LOAD_STATE_NAMES)
        self.names: Tuple[str, ...] = tuple(names)
        self._positions = {name: pos for pos, name in enumerate(names)}

    def __len__(self) -> int:
        return self.n

    def position(self, name: str) -> int:
        try:
            return self._positions[name]
        except KeyError:
            raise KeyError(f"unknown state name {name!r}") from None

    def der(self, i: int, slot: str) -> int:
        return DER_WIDTH * i + DER_SLOT[slot]

    def line(self, l: int, axis: str) -> int:
        return self.line_offset + 2 * l + (0 if axis == "D" else 1)

    def load(self, k: int, axis: str) -> int:
        return self.load_offset + 2 * k + (0 if axis == "D" else 1)

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views of x as (m, 13) DER rows, (q, 2) line rows and (p, 2) load rows."""
        ders = x[: self.line_offset].reshape(self.m, DER_WIDTH)
        lines = x[self.line_offset : self.load_offset].reshape(self.q, 2)
        loads = x[self.load_offset : self.n].reshape(self.p, 2)
        return ders, lines, loads

    def check(self, x: np.ndarray):
        if x.ndim != 1 or x.shape[0] != self.n:
            raise ConfigError(f"state has shape {x.shape}, expected ({self.n},)")
