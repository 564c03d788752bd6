from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from core.exceptions import ConfigError

IntegratorMethod = Literal["RK4", "RK45", "LSODA", "BDF", "Radau"]


class IntegratorSpec(BaseModel):
    method: IntegratorMethod = "LSODA"
    step: float = Field(default=2e-5, gt=0.0, description="Fixed step for RK4, max step hint otherwise, s.")
    rel_tol: float = Field(default=1e-9, gt=0.0)
    abs_tol: float = Field(default=1e-9, gt=0.0)
    t_span: Tuple[float, float] = (0.0, 5.0)
    max_growth: Optional[float] = Field(
        default=1e6,
        gt=1.0,
        description="Divergence once the state infinity norm exceeds this multiple of max(1, |x0|).",
    )

    @model_validator(mode="after")
    def _check_span(self):
        if self.t_span[1] < self.t_span[0]:
            raise ValueError(f"t_span must be increasing, got {self.t_span}")
        return self


class CareProblem(BaseModel):
    """
    A'P + PA - P B R^-1 B' P + Q = 0.
    Q and R are symmetrized on construction; R must be positive definite.
    """

    model_config = {"arbitrary_types_allowed": True}

    A: np.ndarray
    B: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    @model_validator(mode="after")
    def _check(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.ndim != 2 or self.B.shape[0] != n:
            raise ValueError(f"B must have {n} rows, got {self.B.shape}")
        k = self.B.shape[1]
        if self.Q.shape != (n, n):
            raise ValueError(f"Q must be {n}x{n}, got {self.Q.shape}")
        if self.R.shape != (k, k):
            raise ValueError(f"R must be {k}x{k}, got {self.R.shape}")
        self.Q = 0.5 * (self.Q + self.Q.T)
        self.R = 0.5 * (self.R + self.R.T)
        if np.min(np.linalg.eigvalsh(self.R)) <= 0:
            raise ValueError("R must be positive definite")
        if np.min(np.linalg.eigvalsh(self.Q)) < -1e-12 * max(1.0, np.abs(self.Q).max()):
            raise ValueError("Q must be positive semidefinite")
        return self

    @classmethod
    def create(cls, A, B, Q, R) -> "CareProblem":
        try:
            return cls(
                A=np.atleast_2d(np.asarray(A, dtype=float)),
                B=np.atleast_2d(np.asarray(B, dtype=float)),
                Q=np.atleast_2d(np.asarray(Q, dtype=float)),
                R=np.atleast_2d(np.asarray(R, dtype=float)),
            )
        except ValidationError as e:
            raise ConfigError("; ".join(err["msg"] for err in e.errors())) from e
