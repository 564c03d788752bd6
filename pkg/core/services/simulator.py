"""
Scenario runner.
Integrates the nonlinear microgrid (Full or Surrogate) and the lifted linear
model under a setpoint policy, with the controller engaged by a scheduled event,
and runs perturbed batches of model pairs in parallel workers.
"""

import traceback
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from core.config import settings
from core.constants import STATE_SCALES, PERTURB_FLOOR, SWITCHES
from core.control.lqi import LqiController, control_step
from core.exceptions import ConfigError, DivergenceError, MicrogridError
from core.koopman.builder import LiftedModel
from core.koopman.observables import lift, lift_with_input
from core.logging_config import get_logger
from core.microgrid.dynamics import DynamicsMode, rhs
from core.microgrid.params import MgParams
from core.microgrid.state_index import StateIndex
from core.models.scenario import PerturbationSpec, RunOutcome, Scenario, Trajectory
from core.numerics.integrate import ScheduledEvent, integrate

logger = get_logger("Simulator")


class _Policy:
    """Setpoint source shared by the vector field and the engagement event."""

    def __init__(self, scenario: Scenario, params: MgParams, model: Optional[LiftedModel], ctrl: Optional[LqiController]):
        self.u_const = np.asarray(scenario.u_const, dtype=float)
        self.engaged = False
        self.model = model
        self.ctrl = ctrl
        self.y_ref = np.asarray(scenario.y_ref if scenario.y_ref is not None else scenario.u_const, dtype=float)
        self.vod = np.array([params.index.der(i, "vod") for i in range(params.m)])

    def engage(self, t: float, s: np.ndarray) -> np.ndarray:
        self.engaged = True
        s[-len(self.u_const) :] = 0.0
        logger.info(f"Controller engaged at t={t:g} s")
        return s

    def setpoints(self, x: np.ndarray, z_I: np.ndarray, engaged: bool) -> np.ndarray:
        if not engaged:
            return self.u_const
        return control_step(self.ctrl, self.model, x, z_I)


def _check_inputs(scenario: Scenario, params: MgParams, model, ctrl):
    if np.shape(scenario.x0) != (params.n,):
        raise ConfigError(f"x0 has shape {np.shape(scenario.x0)}, expected ({params.n},)")
    if len(scenario.u_const) != params.m:
        raise ConfigError(f"u_const needs {params.m} values")
    if scenario.policy == "lqi" and (model is None or ctrl is None):
        raise ConfigError("lqi policy needs a lifted model and a controller")


def _engage_events(scenario: Scenario, policy: _Policy) -> List[ScheduledEvent]:
    if scenario.policy != "lqi":
        return []
    return [ScheduledEvent(time=scenario.engage_time, action=policy.engage, name="engage")]


def _engaged_at(scenario: Scenario, times: np.ndarray) -> np.ndarray:
    if scenario.policy != "lqi":
        return np.zeros(len(times), dtype=bool)
    # the sample at the engagement time holds the state before the event
    return times > scenario.engage_time


def run(
    scenario: Scenario,
    params: MgParams,
    model: Optional[LiftedModel] = None,
    ctrl: Optional[LqiController] = None,
) -> Trajectory:
    """
    Integrate the nonlinear microgrid under the scenario's setpoint policy.

    Args:
        scenario: Initial state, policy and integration settings.
        params: Microgrid parameters.
        model: Lifted model, needed for the lqi policy and for lifted records.
        ctrl: Controller, needed for the lqi policy.

    Returns:
        Trajectory with x, u, y and, when requested, z and U records.
    """
    _check_inputs(scenario, params, model, ctrl)
    mode = DynamicsMode(scenario.mode)
    n, m = params.n, params.m
    policy = _Policy(scenario, params, model, ctrl)

    def field(t: float, s: np.ndarray) -> np.ndarray:
        x, z_I = s[:n], s[n:]
        u = policy.setpoints(x, z_I, policy.engaged)
        ds = np.empty_like(s)
        ds[:n] = rhs(x, u, params, mode)
        ds[n:] = policy.y_ref - x[policy.vod] if policy.engaged else 0.0
        return ds

    s0 = np.concatenate([np.asarray(scenario.x0, dtype=float), np.zeros(m)])
    logger.info(f"Run '{scenario.name}' ({mode.value}, {scenario.policy}) over {scenario.t_span}")
    try:
        times, states = integrate(field, s0, scenario.integrator, scenario.record_stride, _engage_events(scenario, policy))
    except DivergenceError as e:
        logger.error(f"Run '{scenario.name}' diverged: {e} (last good t={e.last_good_time})")
        raise

    xs, z_I = states[:, :n], states[:, n:]
    engaged = _engaged_at(scenario, times)
    u = np.vstack([policy.setpoints(xs[k], z_I[k], engaged[k]) for k in range(len(times))])

    traj = Trajectory(
        kind=mode.value,
        times=times,
        x=xs,
        u=u,
        y=xs[:, policy.vod],
        state_names=params.index.names,
        z_I=z_I if scenario.policy == "lqi" else None,
        meta={"scenario": scenario.name, "digest": scenario.digest(), "method": scenario.integrator.method},
    )
    if scenario.record_lifted and model is not None and SWITCHES["RECORD_LIFTED_STATE"]:
        pairs = [lift_with_input(model, xs[k], u[k]) for k in range(len(times))]
        traj.z = np.vstack([p[0] for p in pairs])
        traj.U = np.vstack([p[1] for p in pairs])
        traj.obs_names = model.layout.names
        traj.input_names = model.layout.input_names
    logger.info(f"Run '{scenario.name}' finished: {len(times)} samples")
    return traj


def run_lifted(scenario: Scenario, model: LiftedModel, ctrl: Optional[LqiController] = None) -> Trajectory:
    """
    Integrate dz/dt = A z + B U from z(0) = lift(x0).

    U is evaluated at the state carried by z's identity observables. Under the
    lqi policy the lifted command U = -K z~ + U_inf is applied directly.
    """
    params = model.params
    _check_inputs(scenario, params, model, ctrl)
    lay = model.layout
    N, m = model.N, model.m
    policy = _Policy(scenario, params, model, ctrl)

    def lifted_command(z: np.ndarray, z_I: np.ndarray, engaged: bool) -> Tuple[np.ndarray, np.ndarray]:
        x = lay.state_from_lifted(z)
        if not engaged:
            _, U = lift_with_input(model, x, policy.u_const)
            return U, policy.u_const
        U = -ctrl.K @ np.concatenate([z - ctrl.z_inf, z_I]) + ctrl.U_inf
        return U, U[:m]

    def field(t: float, s: np.ndarray) -> np.ndarray:
        z, z_I = s[:N], s[N:]
        U, _ = lifted_command(z, z_I, policy.engaged)
        ds = np.empty_like(s)
        ds[:N] = model.A @ z + model.B @ U
        ds[N:] = policy.y_ref - model.C @ z if policy.engaged else 0.0
        return ds

    z0 = lift(model, np.asarray(scenario.x0, dtype=float), policy.u_const)
    s0 = np.concatenate([z0, np.zeros(m)])
    logger.info(f"Lifted run '{scenario.name}' (N={N}) over {scenario.t_span}")
    try:
        times, states = integrate(field, s0, scenario.integrator, scenario.record_stride, _engage_events(scenario, policy))
    except DivergenceError as e:
        logger.error(f"Lifted run '{scenario.name}' diverged: {e} (last good t={e.last_good_time})")
        raise

    zs, z_I = states[:, :N], states[:, N:]
    engaged = _engaged_at(scenario, times)
    commands = [lifted_command(zs[k], z_I[k], engaged[k]) for k in range(len(times))]
    return Trajectory(
        kind="lifted",
        times=times,
        x=np.vstack([lay.state_from_lifted(z) for z in zs]),
        u=np.vstack([c[1] for c in commands]),
        y=zs @ model.C.T,
        state_names=params.index.names,
        z=zs,
        U=np.vstack([c[0] for c in commands]),
        z_I=z_I if scenario.policy == "lqi" else None,
        obs_names=lay.names,
        input_names=lay.input_names,
        meta={"scenario": scenario.name, "digest": scenario.digest(), "method": scenario.integrator.method},
    )


def run_pair(scenario: Scenario, params: MgParams, model: LiftedModel) -> Tuple[Trajectory, Trajectory]:
    """Nonlinear and lifted runs from the same initial state and constant setpoints."""
    if scenario.policy != "constant":
        raise ConfigError("run_pair compares the models under constant setpoints")
    return run(scenario, params, model), run_lifted(scenario, model)


def perturb_state(
    x: np.ndarray,
    fraction: float,
    rng: np.random.Generator,
    index: StateIndex,
    scales: Optional[Dict[str, float]] = None,
) -> np.ndarray:
    """
    Entrywise x(1 + eps), eps ~ U(-fraction, fraction). Entries that are zero get
    eps times the typical magnitude of their state class instead. The reference
    angle stays 0.
    """
    scales = scales or STATE_SCALES
    eps = rng.uniform(-fraction, fraction, size=x.shape)
    magnitude = np.array([scales.get(name.split(".")[-1], 1.0) for name in index.names])
    out = np.where(np.abs(x) > PERTURB_FLOOR, x * (1.0 + eps), eps * magnitude)
    out[index.der(0, "delta")] = 0.0
    return out


def _run_one(k: int, seed: Optional[int], scenario: Scenario, params: MgParams, model: LiftedModel, fraction: float, entropy) -> RunOutcome:
    try:
        x0 = np.asarray(scenario.x0, dtype=float)
        if fraction > 0:
            rng = np.random.default_rng(entropy)
            x0 = perturb_state(x0, fraction, rng, params.index)
        run_scenario = scenario.model_copy(update={"x0": x0, "name": f"{scenario.name}_run{k}"})
        full, lifted = run_pair(run_scenario, params, model)
        return RunOutcome(index=k, seed=seed, full=full, lifted=lifted)
    except DivergenceError as e:
        return RunOutcome(index=k, seed=seed, error=str(e), last_good_time=e.last_good_time)
    except MicrogridError as e:
        return RunOutcome(index=k, seed=seed, error=str(e))
    except Exception as e:
        traceback.print_exc()
        return RunOutcome(index=k, seed=seed, error=f"{type(e).__name__}: {e}")


def run_batch(
    scenario: Scenario,
    params: MgParams,
    model: LiftedModel,
    n_runs: int,
    perturbation: Optional[PerturbationSpec] = None,
    workers: Optional[int] = None,
) -> List[RunOutcome]:
    """
    n_runs model pairs from independently perturbed initial states.

    Run k draws from child k of SeedSequence(seed), so results depend only on the
    seed and not on the worker count. Failed runs are reported in their outcome.
    """
    if n_runs < 1:
        raise ConfigError(f"n_runs must be at least 1, got {n_runs}")
    perturbation = perturbation or scenario.perturbation or PerturbationSpec(fraction=0.0)
    children = np.random.SeedSequence(perturbation.seed).spawn(n_runs)
    workers = workers or settings.BATCH_WORKERS
    jobs = [(k, perturbation.seed, scenario, params, model, perturbation.fraction, children[k]) for k in range(n_runs)]

    logger.info(f"Batch '{scenario.name}': {n_runs} runs, perturbation {perturbation.fraction:g}, seed {perturbation.seed}, workers {workers}")
    if SWITCHES["PARALLEL_BATCH"] and workers > 1 and n_runs > 1:
        outcomes = Parallel(n_jobs=workers)(delayed(_run_one)(*job) for job in jobs)
    else:
        outcomes = [_run_one(*job) for job in jobs]

    outcomes = sorted(outcomes, key=lambda o: o.index)
    failed = [o.index for o in outcomes if not o.ok]
    if failed:
        logger.warning(f"Batch '{scenario.name}': runs {failed} failed")
    return outcomes
