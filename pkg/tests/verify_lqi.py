"""
LQI synthesis on the lifted model:
- augmentation shapes and blocks
- minimum-norm steady state: residual bound and linear scaling in y_ref
- weight construction and its validation
- the synthesized gain stabilizes the augmented plant and solves the Riccati equation
- setpoint recovery is the least-squares optimum, with a ridge fallback
- controller files round-trip and are bound to one lifted model
"""

import json

import numpy as np
import pytest

from core.control.lqi import (
    augment,
    build_weights,
    control_step,
    load_controller,
    recover_input,
    save_controller,
    steady_state,
    synthesize,
)
from core.exceptions import ArtifactError, ConfigError, ControllerFault
from core.koopman.observables import control_terms
from core.models.numerics import CareProblem
from core.models.params import ControllerWeights
from core.numerics.linalg import care_residual, eigenvalues

Y_REF = [380.0, 380.0, 380.0]


@pytest.fixture(scope="module")
def controller(lifted_model):
    return synthesize(lifted_model, Y_REF)


def test_augmented_dimensions(lifted_model):
    aug = augment(lifted_model)
    assert aug.A.shape == (73, 73)
    assert aug.B.shape == (73, 17)
    assert aug.C.shape == (3, 73)
    assert np.array_equal(aug.A[:70, :70], lifted_model.A)
    assert np.array_equal(aug.A[70:, :70], -lifted_model.C)
    assert not aug.A[:, 70:].any()
    assert not aug.B[70:].any()


def test_steady_state_residual(lifted_model):
    z_inf, U_inf = steady_state(lifted_model, Y_REF)
    assert z_inf.shape == (70,)
    assert U_inf.shape == (17,)
    residual = np.concatenate([lifted_model.A @ z_inf + lifted_model.B @ U_inf, lifted_model.C @ z_inf - Y_REF])
    assert np.linalg.norm(residual) <= 1e-9 * np.linalg.norm(Y_REF)


def test_steady_state_scales_with_reference(lifted_model):
    z1, U1 = steady_state(lifted_model, Y_REF)
    z2, U2 = steady_state(lifted_model, [2 * v for v in Y_REF])
    assert np.allclose(z2, 2 * z1, rtol=1e-6, atol=1e-6 * np.abs(z1).max())
    assert np.allclose(U2, 2 * U1, rtol=1e-6, atol=1e-6 * np.abs(U1).max())


def test_steady_state_rejects_wrong_length(lifted_model):
    with pytest.raises(ConfigError):
        steady_state(lifted_model, [380.0, 380.0])


def test_default_weights(lifted_model):
    Q_w, R_w = build_weights(lifted_model)
    q = np.diag(Q_w)
    assert q.shape == (73,)
    assert np.all(q[:70] == 1.0)
    assert np.all(q[70:] == 1e3)
    assert np.array_equal(R_w, np.eye(17))


def test_explicit_weights(lifted_model):
    weights = ControllerWeights(Q_diag=list(range(73)), R_diag=[2.0] * 17)
    Q_w, R_w = build_weights(lifted_model, weights)
    assert Q_w[5, 5] == 5.0
    assert R_w[16, 16] == 2.0


@pytest.mark.parametrize(
    "weights",
    [
        ControllerWeights(input_weight=0.0),
        ControllerWeights(R_diag=[1.0] * 16),
        ControllerWeights(Q_diag=[-1.0] * 73),
    ],
)
def test_infeasible_weights(lifted_model, weights):
    with pytest.raises(ConfigError):
        build_weights(lifted_model, weights)


def test_synthesis_on_the_test_system(lifted_model):
    Q_w, R_w = build_weights(lifted_model)
    ctrl = synthesize(lifted_model, Y_REF, ControllerWeights())
    assert np.all(np.isfinite(ctrl.K))
    assert ctrl.closed_loop_max_real < 0.0
    assert np.array_equal(ctrl.Q_w, Q_w)
    assert np.array_equal(ctrl.R_w, R_w)
    assert ctrl.fingerprint == lifted_model.fingerprint()


def test_closed_loop_is_hurwitz(lifted_model, controller):
    aug = augment(lifted_model)
    closed = eigenvalues(aug.A - aug.B @ controller.K)
    assert np.all(closed.real < 0.0)
    assert controller.closed_loop_max_real == pytest.approx(float(np.max(closed.real)))
    assert controller.K.shape == (17, 73)


def test_riccati_solution(lifted_model, controller):
    aug = augment(lifted_model)
    P = controller.P
    assert np.allclose(P, P.T, rtol=0, atol=1e-12 * np.abs(P).max())
    assert np.min(np.linalg.eigvalsh(0.5 * (P + P.T))) >= -1e-8 * np.abs(P).max()
    problem = CareProblem.create(aug.A, aug.B, controller.Q_w, controller.R_w)
    _, relative = care_residual(problem, P)
    assert relative <= 1e-6
    assert np.allclose(controller.K, np.linalg.solve(controller.R_w, aug.B.T @ P))


def test_recover_input_is_the_least_squares_optimum(rng):
    script_B = rng.normal(size=(70, 3))
    target = rng.normal(size=70)
    u = recover_input(script_B, target)
    assert np.max(np.abs(script_B.T @ (script_B @ u - target))) <= 1e-10 * np.abs(script_B).max() ** 2
    base = np.linalg.norm(script_B @ u - target)
    for _ in range(10):
        nearby = u + 1e-3 * rng.normal(size=3)
        assert np.linalg.norm(script_B @ nearby - target) >= base


def test_recover_input_retries_with_ridge(rng):
    script_B = rng.normal(size=(70, 3))
    script_B[:, 2] = 0.0
    u = recover_input(script_B, rng.normal(size=70))
    assert np.all(np.isfinite(u))
    assert abs(u[2]) < 1e-12


def test_recover_input_gives_up_on_a_zero_matrix():
    with pytest.raises(ControllerFault):
        recover_input(np.zeros((70, 3)), np.ones(70))


def test_control_step_matches_the_lifted_command(lifted_model, controller, table_state):
    z_I = np.zeros(3)
    u = control_step(controller, lifted_model, table_state, z_I)
    assert u.shape == (3,)
    assert np.all(np.isfinite(u))
    z, F, script_B = control_terms(lifted_model, table_state)
    U = -controller.K @ np.concatenate([z - controller.z_inf, z_I]) + controller.U_inf
    target = lifted_model.B @ U - F
    assert np.allclose(script_B.T @ (script_B @ u - target), 0.0, atol=1e-8 * np.linalg.norm(script_B) ** 2 * max(1.0, np.abs(u).max()))


def test_controller_file_round_trip(tmp_path, lifted_model, controller):
    path = save_controller(controller, lifted_model, tmp_path / "controller.json")
    loaded = load_controller(path, lifted_model)
    assert np.array_equal(loaded.K, controller.K)
    assert np.array_equal(loaded.U_inf, controller.U_inf)
    assert loaded.fingerprint == lifted_model.fingerprint()
    data = json.loads(path.read_text())
    assert (data["N"], data["M"], data["m"]) == (70, 17, 3)


def test_controller_file_for_another_model(tmp_path, lifted_model, controller):
    path = save_controller(controller, lifted_model, tmp_path / "controller.json")
    data = json.loads(path.read_text())
    data["model_fingerprint"] = "0" * 64
    path.write_text(json.dumps(data))
    with pytest.raises(ArtifactError, match="different lifted model"):
        load_controller(path, lifted_model)


def test_missing_controller_file(tmp_path, lifted_model):
    with pytest.raises(ArtifactError):
        load_controller(tmp_path / "absent.json", lifted_model)
