"""
LQI voltage restoration on the lifted model.

The lifted plant is augmented with the output-error integrators
dz_I/dt = y_ref - C z, a steady-state pair (z_inf, U_inf) is solved for the
reference, and the gain K = R^-1 B~' P comes from the Riccati equation. At run
time the lifted command U = -K z~ + U_inf is mapped back to the m physical
setpoints by least squares on B U = F(x) + script_B(x) u.
"""

import json
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from core.constants import RIDGE_SCALE, STEADY_STATE_RTOL, SWITCHES
from core.exceptions import ArtifactError, ConfigError, ControllerFault, RankDeficiencyError, SteadyStateError
from core.koopman.builder import LiftedModel
from core.koopman.observables import control_terms
from core.logging_config import get_logger
from core.models.artifacts import ControllerFile
from core.models.numerics import CareProblem
from core.models.params import ControllerWeights
from core.numerics.linalg import care_residual, eigenvalues, least_squares, max_real, solve_care

logger = get_logger("LQI")


class AugmentedSystem(BaseModel):
    model_config = {"arbitrary_types_allowed": True}

    A: np.ndarray  # [[A, 0], [-C, 0]]
    B: np.ndarray  # [[B], [0]]
    C: np.ndarray  # [C, 0]

    @property
    def n(self) -> int:
        return self.A.shape[0]


class LqiController(BaseModel):
    model_config = {"arbitrary_types_allowed": True}

    K: np.ndarray
    P: np.ndarray
    z_inf: np.ndarray
    U_inf: np.ndarray
    Q_w: np.ndarray
    R_w: np.ndarray
    y_ref: np.ndarray
    fingerprint: str
    closed_loop_max_real: float
    open_loop_max_real: float

    def to_file(self, model: LiftedModel) -> ControllerFile:
        return ControllerFile(
            model_fingerprint=self.fingerprint,
            N=model.N,
            M=model.M,
            m=model.m,
            y_ref=self.y_ref.tolist(),
            K=self.K.tolist(),
            P=self.P.tolist(),
            z_inf=self.z_inf.tolist(),
            U_inf=self.U_inf.tolist(),
            Q_diag=np.diag(self.Q_w).tolist(),
            R_diag=np.diag(self.R_w).tolist(),
            closed_loop_max_real=self.closed_loop_max_real,
            open_loop_max_real=self.open_loop_max_real,
        )


def augment(model: LiftedModel) -> AugmentedSystem:
    N, M, m = model.N, model.M, model.m
    A = np.zeros((N + m, N + m))
    A[:N, :N] = model.A
    A[N:, :N] = -model.C
    B = np.zeros((N + m, M))
    B[:N] = model.B
    C = np.zeros((m, N + m))
    C[:, :N] = model.C
    return AugmentedSystem(A=A, B=B, C=C)


def steady_state(model: LiftedModel, y_ref) -> Tuple[np.ndarray, np.ndarray]:
    """
    Minimum-norm (z_inf, U_inf) with A z + B U = 0 and C z = y_ref.

    Args:
        model: Lifted model.
        y_ref: One voltage reference per DER.

    Returns:
        (z_inf, U_inf)
    """
    y_ref = np.asarray(y_ref, dtype=float)
    N, M, m = model.N, model.M, model.m
    if y_ref.shape != (m,):
        raise ConfigError(f"y_ref needs {m} values, got shape {y_ref.shape}")

    block = np.zeros((N + m, N + M))
    block[:N, :N] = model.A
    block[:N, N:] = model.B
    block[N:, :N] = model.C
    target = np.concatenate([np.zeros(N), y_ref])

    sol = least_squares(block, target, allow_rank_deficient=True)
    # one refinement step; the correction stays in the row space, so the result stays minimum-norm
    sol = sol + least_squares(block, target - block @ sol, allow_rank_deficient=True)

    residual = float(np.linalg.norm(block @ sol - target))
    limit = STEADY_STATE_RTOL * max(float(np.linalg.norm(y_ref)), 1.0)
    if residual > limit:
        raise SteadyStateError(f"no steady state reaches y_ref (residual {residual:.3e} > {limit:.3e})")
    logger.debug(f"Steady state residual {residual:.3e}")
    return sol[:N], sol[N:]


def build_weights(model: LiftedModel, weights: Optional[ControllerWeights] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Q_w of size N+m with the integrator states up-weighted, R_w of size M."""
    weights = weights or ControllerWeights()
    n_aug, M = model.N + model.m, model.M

    if weights.Q_diag is not None:
        q = np.asarray(weights.Q_diag, dtype=float)
        if q.shape != (n_aug,):
            raise ConfigError(f"Q_diag needs {n_aug} entries, got {q.size}")
    else:
        q = np.full(n_aug, weights.state_weight)
        q[model.N :] = weights.state_weight * weights.integrator_weight

    if weights.R_diag is not None:
        r = np.asarray(weights.R_diag, dtype=float)
        if r.shape != (M,):
            raise ConfigError(f"R_diag needs {M} entries, got {r.size}")
    else:
        r = np.full(M, weights.input_weight)

    if np.any(q < 0):
        raise ConfigError("Q weights must be non-negative")
    if np.any(r <= 0):
        raise ConfigError("R weights must be positive (R must be positive definite)")
    return np.diag(q), np.diag(r)


def synthesize(
    model: LiftedModel,
    y_ref,
    weights: Optional[ControllerWeights] = None,
    aug: Optional[AugmentedSystem] = None,
) -> LqiController:
    aug = aug or augment(model)
    Q_w, R_w = build_weights(model, weights)
    problem = CareProblem.create(aug.A, aug.B, Q_w, R_w)

    P = solve_care(problem)
    K = np.linalg.solve(R_w, aug.B.T @ P)
    closed = max_real(aug.A - aug.B @ K)
    _, relative = care_residual(problem, P)
    z_inf, U_inf = steady_state(model, y_ref)

    logger.info(f"Synthesized LQI gain {K.shape}: closed-loop max Re {closed:.4e}, CARE relative residual {relative:.2e}")
    return LqiController(
        K=K,
        P=P,
        z_inf=z_inf,
        U_inf=U_inf,
        Q_w=Q_w,
        R_w=R_w,
        y_ref=np.asarray(y_ref, dtype=float),
        fingerprint=model.fingerprint(),
        closed_loop_max_real=closed,
        open_loop_max_real=float(np.max(eigenvalues(model.A).real)),
    )


def recover_input(script_B: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Least-squares setpoints, retried with a ridge term when script_B loses rank."""
    try:
        return least_squares(script_B, target)
    except RankDeficiencyError as e:
        if not SWITCHES["RIDGE_RETRY"]:
            raise
        ridge = RIDGE_SCALE * float(np.trace(script_B.T @ script_B)) / script_B.shape[1]
        logger.debug(f"Input matrix rank {e.rank}/{e.columns}, retrying with ridge {ridge:.3e}")
        if ridge <= 0:
            raise ControllerFault("input matrix is zero; setpoints cannot be recovered") from e
        return least_squares(script_B, target, ridge=ridge)


def control_step(ctrl: LqiController, model: LiftedModel, x: np.ndarray, z_I: np.ndarray) -> np.ndarray:
    """
    Physical setpoints u for state x and integrator state z_I.
    """
    z, F, script_B = control_terms(model, x)
    z_err = np.concatenate([z - ctrl.z_inf, z_I])
    U = -ctrl.K @ z_err + ctrl.U_inf
    target = model.B @ U - F
    if not (np.all(np.isfinite(target)) and np.all(np.isfinite(script_B))):
        raise ControllerFault("non-finite lifted command")
    u = recover_input(script_B, target)
    if not np.all(np.isfinite(u)):
        raise ControllerFault("non-finite setpoints")
    return u


def save_controller(ctrl: LqiController, model: LiftedModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(ctrl.to_file(model).model_dump_json(indent=2))
    logger.info(f"Controller written to {path}")
    return path


def load_controller(path: Union[str, Path], model: LiftedModel) -> LqiController:
    path = Path(path)
    if not path.is_file():
        raise ArtifactError(f"controller file not found: {path}")
    try:
        data = ControllerFile.model_validate(json.loads(path.read_text()))
    except (json.JSONDecodeError, ValidationError) as e:
        raise ArtifactError(f"unreadable controller file {path}: {e}") from e

    if data.model_fingerprint != model.fingerprint():
        raise ArtifactError(f"{path} was designed for a different lifted model")
    return LqiController(
        K=np.asarray(data.K),
        P=np.asarray(data.P),
        z_inf=np.asarray(data.z_inf),
        U_inf=np.asarray(data.U_inf),
        Q_w=np.diag(data.Q_diag),
        R_w=np.diag(data.R_diag),
        y_ref=np.asarray(data.y_ref),
        fingerprint=data.model_fingerprint,
        closed_loop_max_real=data.closed_loop_max_real,
        open_loop_max_real=data.open_loop_max_real,
    )
