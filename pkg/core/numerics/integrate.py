"""
Time integration.

RK4 runs on our own fixed-step kernel; RK45 and the stiff methods (LSODA, BDF,
Radau) go through scipy.integrate.solve_ivp. Scheduled events split the
integration window so that they fire exactly at their time, and samples are
taken on a fixed stride.
"""

from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.integrate import solve_ivp

from core.exceptions import DivergenceError, MicrogridError, NumericalError
from core.logging_config import get_logger
from core.models.numerics import IntegratorSpec

logger = get_logger("Integrator")

VectorField = Callable[[float, np.ndarray], np.ndarray]


class ScheduledEvent(BaseModel):
    """
    Hook fired once at `time`. The action receives (t, x) and returns the state to
    continue from, or None to keep x unchanged.
    """

    model_config = {"arbitrary_types_allowed": True}

    time: float
    action: Callable[[float, np.ndarray], Optional[np.ndarray]]
    name: str = "event"


def rk4_step(f: VectorField, t: float, x: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def sample_grid(t_span: Tuple[float, float], stride: float) -> np.ndarray:
    """Times t0, t0+stride, ..., always ending exactly at t1."""
    if stride <= 0:
        raise ValueError(f"record stride must be positive, got {stride}")
    t0, t1 = t_span
    count = int(np.floor((t1 - t0) / stride + 1e-9))
    grid = t0 + stride * np.arange(count + 1)
    if t1 - grid[-1] > 1e-12 * max(1.0, abs(t1)):
        grid = np.append(grid, t1)
    else:
        grid[-1] = t1
    return grid


def _check_state(x: np.ndarray, t: float, last_good: float, limit: Optional[float]):
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"non-finite state at t={t:.6g} s", last_good_time=last_good)
    if limit is not None and np.max(np.abs(x)) > limit:
        raise DivergenceError(
            f"state norm {np.max(np.abs(x)):.3g} exceeds {limit:.3g} at t={t:.6g} s",
            last_good_time=last_good,
        )


def _rk4_segment(f, x, times, spec: IntegratorSpec, last_good: float, limit: Optional[float]):
    """Integrate through `times` (times[0] is the start), returning the states at times[1:]."""
    out = []
    t = times[0]
    for target in times[1:]:
        span = target - t
        n_steps = max(1, int(np.ceil(span / spec.step - 1e-9)))
        h = span / n_steps
        for _ in range(n_steps):
            x = rk4_step(f, t, x, h)
            t = t + h
            _check_state(x, t, last_good, limit)
            last_good = t
        t = target
        out.append(x.copy())
    return x, out, last_good


def _scipy_segment(f, x, times, spec: IntegratorSpec, last_good: float, limit: Optional[float]):
    if times[-1] <= times[0]:
        return x, [], last_good
    try:
        sol = solve_ivp(
            f,
            (times[0], times[-1]),
            x,
            method=spec.method,
            t_eval=times[1:],
            rtol=spec.rel_tol,
            atol=spec.abs_tol,
        )
    except MicrogridError:
        raise
    except (ValueError, FloatingPointError, np.linalg.LinAlgError) as e:
        raise DivergenceError(f"{spec.method} failed: {e}", last_good_time=last_good) from e

    if sol.status < 0 or sol.y.shape[1] != len(times) - 1:
        reached = float(sol.t[-1]) if sol.t.size else last_good
        raise DivergenceError(f"{spec.method} stopped: {sol.message}", last_good_time=reached)
    states = [sol.y[:, k].copy() for k in range(sol.y.shape[1])]
    for t, state in zip(times[1:], states):
        _check_state(state, t, last_good, limit)
        last_good = t
    return states[-1], states, last_good


def integrate(
    f: VectorField,
    x0: np.ndarray,
    spec: IntegratorSpec,
    stride: float,
    events: Sequence[ScheduledEvent] = (),
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integrate x' = f(t, x) over spec.t_span.

    Args:
        f: Vector field.
        x0: Initial state.
        spec: Method, step and tolerances.
        stride: Sampling interval of the returned trajectory.
        events: Hooks fired exactly at their scheduled times.

    Returns:
        (times, states) with states of shape (len(times), len(x0)).
    """
    if stride < spec.step and spec.method == "RK4":
        raise ValueError(f"record stride {stride} is below the integrator step {spec.step}")
    t0, t1 = spec.t_span
    samples = sample_grid(spec.t_span, stride)
    pending = sorted((e for e in events if t0 <= e.time <= t1), key=lambda e: e.time)

    breaks = [t0] + [e.time for e in pending] + [t1]
    x = np.array(x0, dtype=float)
    limit = None
    if spec.max_growth is not None and x.size:
        limit = spec.max_growth * max(1.0, float(np.max(np.abs(x))))
    _check_state(x, t0, t0, limit)
    states: List[np.ndarray] = [x.copy()]
    last_good = t0
    segment = _rk4_segment if spec.method == "RK4" else _scipy_segment

    for k in range(len(breaks) - 1):
        a, b = breaks[k], breaks[k + 1]
        inner = samples[(samples > a) & (samples <= b)]
        times = np.concatenate([[a], inner])
        if b not in inner and b > a:
            times = np.append(times, b)
        if len(times) > 1:
            x, out, last_good = segment(f, x, times, spec, last_good, limit)
            sampled = np.isin(times[1:], samples)
            states.extend(s for s, keep in zip(out, sampled) if keep)

        if k < len(pending):
            event = pending[k]
            try:
                updated = event.action(event.time, x.copy())
            except MicrogridError:
                raise
            except Exception as e:
                raise NumericalError(f"event '{event.name}' at t={event.time:g} failed: {e}") from e
            if updated is not None:
                x = np.array(updated, dtype=float)
            logger.debug(f"Fired '{event.name}' at t={event.time:g}")

    return samples, np.vstack(states)
