"""
Numerical kernels against closed forms and independent oracles:
- RK4 step and convergence order, sampling grid, scheduled events, divergence
- eigenvalues, Lyapunov (Kronecker oracle), Riccati (closed forms and scipy)
- least squares (pseudo-inverse oracle, ridge, rank deficiency)
"""

import math

import numpy as np
import pytest
import scipy.linalg as sla

from core.exceptions import CareError, ConfigError, DivergenceError, EigenSolverError, LyapunovError, RankDeficiencyError
from core.models.numerics import CareProblem, IntegratorSpec
from core.numerics.integrate import ScheduledEvent, integrate, rk4_step, sample_grid
from core.numerics.linalg import (
    care_residual,
    eigenvalues,
    is_hurwitz,
    least_squares,
    max_real,
    solve_care,
    solve_lyapunov,
    unstabilizable_modes,
)


def decay(t, x):
    return -x


# integration


def test_rk4_single_step_matches_taylor_polynomial():
    h = 0.1
    x = rk4_step(decay, 0.0, np.array([1.0]), h)
    assert x[0] == pytest.approx(1 - h + h**2 / 2 - h**3 / 6 + h**4 / 24, rel=1e-14)
    assert abs(x[0] - math.exp(-h)) < 1e-7


def _rk4_error(step: float) -> float:
    spec = IntegratorSpec(method="RK4", step=step, t_span=(0.0, 1.0))
    _, states = integrate(decay, np.array([1.0]), spec, stride=0.1)
    return abs(states[-1, 0] - math.exp(-1.0))


def test_rk4_convergence_order():
    order = math.log2(_rk4_error(0.1) / _rk4_error(0.05))
    assert 3.8 <= order <= 4.2


def test_sample_grid_ends_on_the_span():
    grid = sample_grid((0.0, 1.0), 0.3)
    assert grid == pytest.approx([0.0, 0.3, 0.6, 0.9, 1.0])
    assert sample_grid((0.0, 1.0), 0.25)[-1] == 1.0


def test_sample_grid_rejects_non_positive_stride():
    with pytest.raises(ValueError):
        sample_grid((0.0, 1.0), 0.0)


@pytest.mark.parametrize("method", ["RK4", "LSODA", "RK45"])
def test_integrate_matches_exponential(method):
    spec = IntegratorSpec(method=method, step=1e-3, t_span=(0.0, 1.0), rel_tol=1e-10, abs_tol=1e-12)
    times, states = integrate(decay, np.array([2.0]), spec, stride=0.1)
    assert len(times) == 11
    assert states.shape == (11, 1)
    assert states[:, 0] == pytest.approx(2.0 * np.exp(-times), rel=1e-6)


@pytest.mark.parametrize("method", ["RK4", "LSODA"])
def test_event_fires_exactly_at_its_time(method):
    fired = []

    def reset(t, x):
        fired.append(t)
        return np.zeros_like(x)

    spec = IntegratorSpec(method=method, step=1e-3, t_span=(0.0, 1.0))
    times, states = integrate(decay, np.array([1.0]), spec, stride=0.1, events=[ScheduledEvent(time=0.5, action=reset)])
    assert fired == [0.5]
    k = int(np.argmin(np.abs(times - 0.5)))
    # the sample at the event time holds the state before the event
    assert states[k, 0] == pytest.approx(math.exp(-0.5), rel=1e-6)
    assert np.all(states[k + 1 :, 0] == 0.0)


def test_event_between_samples():
    spec = IntegratorSpec(method="RK4", step=1e-3, t_span=(0.0, 1.0))
    events = [ScheduledEvent(time=0.55, action=lambda t, x: x + 1.0, name="kick")]
    times, states = integrate(decay, np.array([1.0]), spec, stride=0.1, events=events)
    assert len(times) == 11
    expected = (math.exp(-0.55) + 1.0) * math.exp(-(1.0 - 0.55))
    assert states[-1, 0] == pytest.approx(expected, rel=1e-9)


def test_divergence_reports_last_good_time():
    spec = IntegratorSpec(method="RK4", step=1e-3, t_span=(0.0, 2.0))
    with pytest.raises(DivergenceError) as info:
        integrate(lambda t, x: x**2, np.array([1.0]), spec, stride=0.01)
    assert info.value.last_good_time is not None
    assert info.value.last_good_time < 2.0


def test_divergence_limit_scales_with_the_initial_state():
    spec = IntegratorSpec(method="RK4", step=1e-3, t_span=(0.0, 0.1))
    times, states = integrate(decay, np.array([1e13, 0.0]), spec, stride=0.01)
    assert states[-1, 0] == pytest.approx(1e13 * math.exp(-0.1), rel=1e-9)
    spec = IntegratorSpec(method="RK4", step=1e-3, t_span=(0.0, 0.1), max_growth=None)
    integrate(lambda t, x: x**2, np.array([1.0]), spec.model_copy(update={"t_span": (0.0, 0.5)}), stride=0.01)


def test_stride_below_rk4_step_rejected():
    spec = IntegratorSpec(method="RK4", step=1e-2, t_span=(0.0, 1.0))
    with pytest.raises(ValueError):
        integrate(decay, np.array([1.0]), spec, stride=1e-3)


# eigenvalues


def test_eigenvalues_sorted_by_real_part():
    values = eigenvalues(np.diag([-1.0, -2.0, 3.0]))
    assert values.real.tolist() == [3.0, -1.0, -2.0]
    assert np.all(values.imag == 0.0)


def test_eigenvalues_of_a_rotation():
    values = eigenvalues(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    assert np.allclose(values.real, 0.0, atol=1e-12)
    assert sorted(values.imag) == pytest.approx([-1.0, 1.0])


def test_eigenvalues_of_triangular_blocks_are_exact():
    M = np.array([[1.0, 5.0, 7.0], [0.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
    assert eigenvalues(M).real.tolist() == [2.0, 1.0, 0.0]
    assert max_real(M) == 2.0
    assert not is_hurwitz(M)


def test_eigenvalues_match_lapack_on_a_dense_matrix(rng):
    M = rng.normal(size=(8, 8))
    ours = eigenvalues(M)
    reference = np.linalg.eigvals(M)
    assert np.allclose(np.sort_complex(ours), np.sort_complex(reference), rtol=0, atol=1e-10)


def test_eigenvalues_reject_bad_input():
    with pytest.raises(EigenSolverError):
        eigenvalues(np.zeros((2, 3)))
    with pytest.raises(EigenSolverError):
        eigenvalues(np.array([[np.nan, 0.0], [0.0, 1.0]]))


# Lyapunov


def _hurwitz(rng, n: int) -> np.ndarray:
    M = rng.normal(size=(n, n))
    return M - (max(np.linalg.eigvals(M).real) + 1.0) * np.eye(n)


@pytest.mark.parametrize("n", [1, 3, 6])
def test_lyapunov_matches_kronecker_solve(rng, n):
    A = _hurwitz(rng, n)
    G = rng.normal(size=(n, n))
    Q = G @ G.T + np.eye(n)
    P = solve_lyapunov(A, Q)

    I = np.eye(n)
    K = np.kron(I, A.T) + np.kron(A.T, I)
    P_ref = np.linalg.solve(K, -Q.reshape(-1, order="F")).reshape((n, n), order="F")
    assert np.max(np.abs(P - P_ref)) <= 1e-8 * max(1.0, np.max(np.abs(P_ref)))
    assert np.array_equal(P, P.T)


def test_lyapunov_requires_hurwitz():
    with pytest.raises(LyapunovError):
        solve_lyapunov(np.array([[1.0]]), np.array([[1.0]]))


# Riccati


def test_care_scalar_closed_form():
    a, q, r = 1.0, 1.0, 1.0
    problem = CareProblem.create([[a]], [[1.0]], [[q]], [[r]])
    P = solve_care(problem)
    assert P[0, 0] == pytest.approx(r * (a + math.sqrt(a * a + q / r)), abs=1e-9)


def test_care_double_integrator_closed_form():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    problem = CareProblem.create(A, B, np.eye(2), [[1.0]])
    P = solve_care(problem)
    s3 = math.sqrt(3.0)
    assert np.max(np.abs(P - np.array([[s3, 1.0], [1.0, s3]]))) <= 1e-9
    assert care_residual(problem, P)[0] <= 1e-9


def test_care_matches_scipy_on_a_random_stabilizable_problem(rng):
    n, k = 6, 2
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, k))
    G = rng.normal(size=(n, n))
    Q = G @ G.T + np.eye(n)
    R = np.diag([1.0, 2.0])
    P = solve_care(CareProblem.create(A, B, Q, R))
    P_ref = sla.solve_continuous_are(A, B, Q, R)
    assert np.max(np.abs(P - P_ref)) <= 1e-7 * np.max(np.abs(P_ref))
    assert is_hurwitz(A - B @ np.linalg.solve(R, B.T @ P))


def test_care_with_unstable_plants_matches_scipy(rng):
    n, k = 6, 2
    for _ in range(20):
        A = rng.normal(size=(n, n)) + 0.5 * np.eye(n)
        B = rng.normal(size=(n, k))
        problem = CareProblem.create(A, B, np.eye(n), np.eye(k))
        P = solve_care(problem)
        P_ref = sla.solve_continuous_are(A, B, np.eye(n), np.eye(k))
        assert np.max(np.abs(P - P_ref)) <= 1e-6 * np.max(np.abs(P_ref))
        assert is_hurwitz(A - B @ B.T @ P)
        assert care_residual(problem, P)[1] <= 1e-8


def test_care_with_a_stable_uncontrollable_mode():
    A = np.diag([-1.0, 2.0])
    B = np.array([[0.0], [1.0]])
    problem = CareProblem.create(A, B, np.eye(2), [[1.0]])
    P = solve_care(problem)
    assert np.max(np.abs(P - np.diag([0.5, 2.0 + math.sqrt(5.0)]))) <= 1e-8
    assert is_hurwitz(A - B @ B.T @ P)


def test_care_unstabilizable_mode():
    A = np.diag([1.0, -1.0])
    B = np.array([[0.0], [1.0]])
    assert np.array_equal(unstabilizable_modes(A, B), [1.0])
    with pytest.raises(CareError, match="not stabilizable"):
        solve_care(CareProblem.create(A, B, np.eye(2), [[1.0]]))


def test_pbh_accepts_controllable_pairs(rng):
    A = rng.normal(size=(5, 5)) + np.eye(5)
    B = rng.normal(size=(5, 1))
    assert unstabilizable_modes(A, B).size == 0


def test_care_rejects_indefinite_input_weight():
    with pytest.raises(ConfigError):
        CareProblem.create([[0.0]], [[1.0]], [[1.0]], [[0.0]])


# least squares


def test_least_squares_matches_pseudo_inverse(rng):
    M = rng.normal(size=(10, 4))
    b = rng.normal(size=10)
    x = least_squares(M, b)
    assert np.max(np.abs(x - np.linalg.pinv(M) @ b)) <= 1e-10


def test_least_squares_exact_system():
    M = np.array([[2.0, 0.0], [0.0, 4.0], [0.0, 0.0]])
    assert least_squares(M, np.array([2.0, 8.0, 0.0])) == pytest.approx([1.0, 2.0])


def test_least_squares_rank_deficiency():
    M = np.array([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    b = np.array([1.0, 2.0, 3.0])
    with pytest.raises(RankDeficiencyError) as info:
        least_squares(M, b)
    assert (info.value.rank, info.value.columns) == (1, 2)
    x = least_squares(M, b, allow_rank_deficient=True)
    assert x == pytest.approx([0.5, 0.5])


def test_least_squares_ridge(rng):
    M = rng.normal(size=(6, 3))
    b = rng.normal(size=6)
    lam = 0.3
    x = least_squares(M, b, ridge=lam)
    assert x == pytest.approx(np.linalg.solve(M.T @ M + lam * np.eye(3), M.T @ b), rel=1e-10)
    with pytest.raises(ValueError):
        least_squares(M, b, ridge=-1.0)
