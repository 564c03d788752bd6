"""
Nonlinear microgrid right-hand side:
- power filter and droop laws on hand-computed points
- the initial state is a Full-model equilibrium seeded from the listed values
- Full and Surrogate agree bit for bit when every angle is zero and every DER runs at omega_n
- the reference angle never moves, evaluation is deterministic
- bus voltages from injected currents, with exact and linearized rotations
- RL-load currents integrate in Full mode and freeze in Surrogate mode
"""

import math

import numpy as np
import pytest

from core.constants import EQUILIBRIUM_ATOL
from core.exceptions import ConfigError, SteadyStateError
from core.microgrid.dynamics import (
    DynamicsMode,
    bus_voltages,
    droop,
    initial_state,
    listed_state,
    operating_point,
    power_filter_rhs,
    rhs,
)
from core.microgrid.state_index import DER_SLOT, DER_WIDTH


def test_power_filter_on_a_single_row(test_params):
    X = np.zeros(DER_WIDTH)
    X[DER_SLOT["vod"]] = 380.0
    X[DER_SLOT["iod"]] = 10.0
    X[DER_SLOT["ioq"]] = 2.0
    der = test_params.ders[0]
    dP, dQ = power_filter_rhs(X, der)
    assert dP == pytest.approx(der.omega_c * 3800.0)
    assert dQ == pytest.approx(der.omega_c * (-760.0))


def test_power_filter_at_rest_is_zero(test_params):
    X = np.zeros(DER_WIDTH)
    X[DER_SLOT["vod"]] = 380.0
    X[DER_SLOT["iod"]] = 10.0
    X[DER_SLOT["P"]] = 3800.0
    dP, dQ = power_filter_rhs(X, test_params.ders[0])
    assert dP == pytest.approx(0.0, abs=1e-9)
    assert dQ == pytest.approx(0.0, abs=1e-9)


def test_droop_laws(test_params):
    X = np.zeros((3, DER_WIDTH))
    X[:, DER_SLOT["P"]] = [1000.0, 0.0, -1000.0]
    X[:, DER_SLOT["Q"]] = [100.0, 0.0, 0.0]
    omega, vod_ref, voq_ref = droop(X, test_params.der, np.full(3, 380.0))
    w = 2 * math.pi * 50
    assert omega == pytest.approx([w - 9.4e-5 * 1000.0, w, w + 9.4e-5 * 1000.0])
    assert vod_ref == pytest.approx([380.0 - 1.3e-3 * 100.0, 380.0, 380.0])
    assert np.all(voq_ref == 0.0)


def test_listed_state_uses_listed_values(test_params, test_config):
    x = listed_state(test_params, test_config.initial)
    index = test_params.index
    assert x[index.position("der2.vod")] == 381.8
    assert x[index.position("der3.delta")] == -0.0113
    assert x[index.position("line2.iD")] == 7.6
    assert x[index.position("der1.P")] == pytest.approx(380.8 * 11.4)
    assert x[index.position("der1.delta")] == 0.0


def test_initial_state_is_an_equilibrium(test_params, test_config, table_state):
    u = test_params.v_set()
    dx = rhs(table_state, u, test_params, DynamicsMode.FULL)
    assert np.max(np.abs(dx)) <= EQUILIBRIUM_ATOL
    assert table_state[test_params.index.position("der1.delta")] == 0.0
    # the listed bus-2 imbalance is gone, and the listed values are the seed
    seed = listed_state(test_params, test_config.initial)
    assert np.max(np.abs(rhs(seed, u, test_params))) > 1e3
    vod = [test_params.index.der(i, "vod") for i in range(3)]
    assert table_state[vod] == pytest.approx(seed[vod], abs=5.0)
    vb = bus_voltages(table_state, test_params)
    assert np.all(np.abs(vb[:, 0] - 380.0) < 20.0)


def test_equilibrium_search_rejects_a_non_finite_seed(test_params):
    with pytest.raises(SteadyStateError):
        operating_point(test_params, np.full(test_params.n, np.nan))


def test_full_equals_surrogate_at_zero_angles(test_params, table_state):
    x = table_state.copy()
    for i in range(test_params.m):
        x[test_params.index.der(i, "delta")] = 0.0
        x[test_params.index.der(i, "P")] = 0.0
    u = np.full(3, 380.0)
    full = rhs(x, u, test_params, DynamicsMode.FULL)
    surrogate = rhs(x, u, test_params, DynamicsMode.SURROGATE)
    assert np.array_equal(full, surrogate)


def test_modes_differ_away_from_the_operating_assumptions(test_params, table_state):
    u = np.full(3, 380.0)
    full = rhs(table_state, u, test_params, DynamicsMode.FULL)
    surrogate = rhs(table_state, u, test_params, DynamicsMode.SURROGATE)
    assert not np.allclose(full, surrogate)


@pytest.mark.parametrize("mode", [DynamicsMode.FULL, DynamicsMode.SURROGATE])
def test_reference_angle_is_fixed(test_params, table_state, mode):
    dx = rhs(table_state, np.full(3, 380.0), test_params, mode)
    assert dx[test_params.index.der(0, "delta")] == 0.0


def test_angle_rates_follow_the_droop(test_params, table_state):
    x = table_state.copy()
    x[[test_params.index.der(i, "P") for i in range(3)]] = [4000.0, 4300.0, 3900.0]
    dx = rhs(x, np.full(3, 380.0), test_params)
    P = x[[test_params.index.der(i, "P") for i in range(3)]]
    expected = -9.4e-5 * P + 9.4e-5 * P[0]
    got = dx[[test_params.index.der(i, "delta") for i in range(3)]]
    assert got == pytest.approx(expected, abs=1e-12)


def test_rhs_is_deterministic(test_params, table_state):
    u = np.array([380.0, 381.0, 379.0])
    first = rhs(table_state, u, test_params)
    second = rhs(table_state.copy(), u.copy(), test_params)
    assert np.array_equal(first, second)


def test_rhs_rejects_bad_shapes(test_params, table_state):
    with pytest.raises(ConfigError):
        rhs(table_state[:-1], np.full(3, 380.0), test_params)
    with pytest.raises(ConfigError):
        rhs(table_state, np.full(2, 380.0), test_params)


def _only_output_current(params, der: int, iod: float, delta: float = 0.0) -> np.ndarray:
    x = np.zeros(params.n)
    x[params.index.der(der, "iod")] = iod
    x[params.index.der(der, "delta")] = delta
    return x


def test_bus_voltage_of_a_single_injection(test_params):
    x = _only_output_current(test_params, 0, 10.0)
    vb = bus_voltages(x, test_params)
    r1 = 1.0 / (1.0 / 1000.0 + 1.0 / 25.0)
    assert vb[0] == pytest.approx([10.0 * r1, 0.0])
    assert np.all(vb[1:] == 0.0)


def test_bus_voltage_rotation_is_exact_in_full_mode(test_params):
    x = _only_output_current(test_params, 1, 10.0, delta=math.pi / 2)
    vb = bus_voltages(x, test_params, DynamicsMode.FULL)
    assert vb[1] == pytest.approx([0.0, 10000.0], abs=1e-9)
    assert np.linalg.norm(vb[1]) == pytest.approx(10000.0)


def test_bus_voltage_rotation_is_linear_in_surrogate_mode(test_params):
    x = _only_output_current(test_params, 1, 10.0, delta=0.1)
    vb = bus_voltages(x, test_params, DynamicsMode.SURROGATE)
    assert vb[1] == pytest.approx([10000.0, 1000.0])


def test_rl_load_currents(rl_params, test_config):
    x = initial_state(rl_params, test_config.initial)
    u = np.full(3, 380.0)
    load = [rl_params.index.load(0, "D"), rl_params.index.load(0, "Q")]
    assert np.all(x[load] != 0.0)
    full = rhs(x, u, rl_params, DynamicsMode.FULL)
    surrogate = rhs(x, u, rl_params, DynamicsMode.SURROGATE)
    assert np.all(surrogate[load] == 0.0)
    assert np.all(np.isfinite(full[load]))
