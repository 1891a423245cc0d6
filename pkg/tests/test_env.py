import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from support import random_state, random_valid_action

from mecopt.env import (ActionError, ConfigError, SystemAction, SystemConfig,
                        SystemState, Task, TransitionModel,
                        build_transition_matrix, cost_bounds, cost_breakdown,
                        initial_state, min_workable_cores,
                        push_bandwidth, reactive_bandwidth, reactive_energy,
                        sample_request_trace, stationary_distribution, step,
                        validate_action)


def noop_action(f, cores=0):
    zeros = (0,) * f
    return SystemAction(reactive_cores=cores, push=zeros,
                        cache_delta_input=zeros, cache_delta_output=zeros)


# -- stationary distribution ------------------------------------------------

def test_stationary_two_state_swap():
    model = TransitionModel(matrix=np.array([[0.0, 1.0], [1.0, 0.0]]))
    p = stationary_distribution(model)
    assert np.allclose(p, [0.5, 0.5], atol=1e-12)


def test_disconnected_chain_rejected():
    with pytest.raises(ConfigError, match="unreachable task set"):
        TransitionModel(matrix=np.eye(2))


def test_stationary_matches_power_iteration():
    rng = np.random.default_rng(7)
    q = rng.random((4, 4)) + 0.05
    q /= q.sum(axis=1, keepdims=True)
    model = TransitionModel(matrix=q)
    p = stationary_distribution(model)
    # independent oracle: long power iteration of the chain
    power = np.linalg.matrix_power(q, 1000)
    assert np.max(np.abs(power - p[None, :])) < 1e-10
    assert np.max(np.abs(p @ q - p)) < 1e-10
    assert abs(p.sum() - 1.0) < 1e-12


# -- action validation --------------------------------------------------------

def test_validate_minimum_cores_with_push_and_cache(base_config):
    # floor = ceil(16000 * 800 / (0.02 * 1.7e8)) = ceil(3.76) = 4
    state = initial_state(base_config, 1)
    action = SystemAction(reactive_cores=4, push=(0, 0, 0, 0),
                          cache_delta_input=(1, 0, 0, 0),
                          cache_delta_output=(0, 0, 0, 0))
    assert min_workable_cores(base_config.task(1), base_config) == 4
    assert validate_action(state, action, base_config).ok


def test_validate_rejects_cores_on_cached_output(base_config):
    state = SystemState(request=2, input_cached=(0, 0, 0, 0),
                        output_cached=(0, 1, 0, 0))
    verdict = validate_action(state, noop_action(4, cores=1), base_config)
    assert not verdict.ok
    assert any("reactive-cores" in v for v in verdict.violations)


def test_validate_rejects_removal_of_uncached_input(base_config):
    state = initial_state(base_config, 1)
    action = SystemAction(reactive_cores=4, push=(0, 0, 0, 0),
                          cache_delta_input=(0, -1, 0, 0),
                          cache_delta_output=(0, 0, 0, 0))
    verdict = validate_action(state, action, base_config)
    assert not verdict.ok
    assert any("cache-input-window" in v for v in verdict.violations)


def test_validate_requires_service_for_uncached_output(base_config):
    state = initial_state(base_config, 1)
    verdict = validate_action(state, noop_action(4, cores=0), base_config)
    assert not verdict.ok
    assert any("latency" in v for v in verdict.violations)


def test_validate_rejects_capacity_overflow(base_config):
    state = initial_state(base_config, 1)
    action = SystemAction(reactive_cores=8, push=(0, 1, 1, 0),
                          cache_delta_input=(1, 1, 1, 0),
                          cache_delta_output=(0, 0, 0, 0))
    verdict = validate_action(state, action, base_config)
    assert not verdict.ok
    assert any("cache-capacity" in v for v in verdict.violations)


# -- cost terms ---------------------------------------------------------------

def test_reactive_bandwidth_closed_form(base_config):
    state = initial_state(base_config, 1)
    action = noop_action(4, cores=5)
    value = reactive_bandwidth(state, action, 1.0, base_config)
    # independent evaluation: I*f_D / (tau*f_D*c - I*w) * c / log2(2)
    expected = 16000 / ((0.02 - 16000 * 800 / (5 * 1.7e8)) * 1.0)
    assert value == pytest.approx(expected, rel=1e-12)
    assert value == pytest.approx(3.238095238095238e6, rel=1e-9)


def test_reactive_bandwidth_zero_on_cache_hit(base_config):
    cached_in = SystemState(request=1, input_cached=(1, 0, 0, 0),
                            output_cached=(0, 0, 0, 0))
    assert reactive_bandwidth(cached_in, noop_action(4, 5), 1.0, base_config) == 0.0
    cached_out = SystemState(request=1, input_cached=(0, 0, 0, 0),
                             output_cached=(1, 0, 0, 0))
    assert reactive_bandwidth(cached_out, noop_action(4, 0), 1.0, base_config) == 0.0


def test_reactive_bandwidth_latency_guard(base_config):
    state = initial_state(base_config, 1)
    with pytest.raises(ActionError, match="latency infeasible"):
        reactive_bandwidth(state, noop_action(4, cores=3), 1.0, base_config)


def test_reactive_energy_closed_form(base_config):
    state = initial_state(base_config, 1)
    value = reactive_energy(state, noop_action(4, cores=5), base_config)
    assert value == pytest.approx(1e-19 * 25 * (1.7e8) ** 2 * 16000 * 800,
                                  rel=1e-12)
    assert value == pytest.approx(9.248e5, rel=1e-12)
    assert reactive_energy(state, noop_action(4, cores=0), base_config) == 0.0
    cached_out = SystemState(request=1, input_cached=(0, 0, 0, 0),
                             output_cached=(1, 0, 0, 0))
    assert reactive_energy(cached_out, noop_action(4, cores=0), base_config) == 0.0


def test_push_bandwidth_values(base_config):
    zeros = (0,) * 4
    one = SystemAction(0, (1, 0, 0, 0), zeros, zeros)
    assert push_bandwidth(one, 1.0, base_config) == pytest.approx(8.0e5, rel=1e-12)
    none = SystemAction(0, zeros, zeros, zeros)
    assert push_bandwidth(none, 1.0, base_config) == 0.0
    two = SystemAction(0, (1, 1, 0, 0), zeros, zeros)
    tasks = (Task(16000, 30000, 800.0), Task(17000, 30000, 800.0),
             Task(16000, 30000, 800.0), Task(16000, 30000, 800.0))
    config = SystemConfig(tasks=tasks, cache_capacity=40000, num_cores=8,
                          core_frequency=1.7e8, slot_length=0.02,
                          switched_capacitance=1e-19)
    assert push_bandwidth(two, 3.0, config) == pytest.approx(
        33000 / (0.02 * 2.0), rel=1e-12)


# -- step ---------------------------------------------------------------------

def test_step_joint_action(base_config):
    state = initial_state(base_config, 1)
    action = SystemAction(reactive_cores=5, push=(0, 0, 1, 0),
                          cache_delta_input=(1, 0, 1, 0),
                          cache_delta_output=(0, 0, 0, 0))
    next_state, costs = step(state, action, 1.0, 3, base_config)
    assert next_state.request == 3
    assert next_state.input_cached == (1, 0, 1, 0)
    assert next_state.output_cached == (0, 0, 0, 0)
    br = reactive_bandwidth(state, action, 1.0, base_config)
    bp = push_bandwidth(action, 1.0, base_config)
    er = reactive_energy(state, action, base_config)
    assert costs.weighted_cost == pytest.approx(br + bp + 1.0 * er, rel=1e-12)
    assert costs.reward == pytest.approx(-1e-6 * costs.weighted_cost, rel=1e-12)


def test_step_cache_hit_is_free(base_config):
    state = SystemState(request=2, input_cached=(0, 0, 0, 0),
                        output_cached=(0, 1, 0, 0))
    next_state, costs = step(state, noop_action(4, cores=0), 1.0, 1, base_config)
    assert costs.weighted_cost == 0.0
    assert costs.reward == 0.0
    assert next_state.input_cached == state.input_cached
    assert next_state.output_cached == state.output_cached


def test_step_rejects_invalid_action(base_config):
    state = initial_state(base_config, 1)
    with pytest.raises(ActionError):
        step(state, noop_action(4, cores=0), 1.0, 1, base_config)


def test_step_costs_match_reevaluation(base_config):
    rng = np.random.default_rng(3)
    for _ in range(300):
        state = random_state(base_config, rng)
        action = random_valid_action(state, base_config, rng)
        snr = float(rng.choice([0.5, 1.0, 2.0, 3.0]))
        _, costs = step(state, action, snr,
                        int(rng.integers(1, 5)), base_config)
        br = reactive_bandwidth(state, action, snr, base_config)
        bp = push_bandwidth(action, snr, base_config)
        er = reactive_energy(state, action, base_config)
        assert costs.reactive_bandwidth == br
        assert costs.push_bandwidth == bp
        assert costs.reactive_energy == er
        assert costs.bandwidth == br + bp
        assert costs.energy == er
        assert costs.weighted_cost == br + bp + base_config.cost_weight * er


def test_step_is_pure(base_config):
    state = initial_state(base_config, 2)
    action = SystemAction(reactive_cores=6, push=(1, 0, 0, 0),
                          cache_delta_input=(1, 1, 0, 0),
                          cache_delta_output=(0, 0, 0, 0))
    results = [step(state, action, 2.0, 4, base_config) for _ in range(3)]
    assert all(r == results[0] for r in results)


# -- request traces -----------------------------------------------------------

def test_trace_length_zero(base_config):
    model = TransitionModel(matrix=build_transition_matrix(4, 0.7, 0))
    assert len(sample_request_trace(model, 0, 1)) == 0


def test_trace_deterministic(base_config):
    model = TransitionModel(matrix=build_transition_matrix(4, 0.7, 0))
    a = sample_request_trace(model, 10, 42)
    b = sample_request_trace(model, 10, 42)
    assert np.array_equal(a, b)


def test_trace_empirical_frequency_matches_p_max():
    model = TransitionModel(matrix=build_transition_matrix(4, 0.7, 5))
    trace = sample_request_trace(model, 1_000_000, 11)
    # count the dominant transition frequency per source task
    q = model.matrix
    for i in range(4):
        j = int(np.argmax(q[i]))
        from_i = trace[:-1] == i + 1
        count_ij = np.sum(from_i & (trace[1:] == j + 1))
        freq = count_ij / max(np.sum(from_i), 1)
        assert abs(freq - 0.7) < 0.01


# -- transition matrix construction -------------------------------------------

def test_build_matrix_two_tasks():
    q = build_transition_matrix(2, 0.7, 3)
    for row in q:
        assert sorted(row) == pytest.approx([0.3, 0.7], abs=1e-12)


def test_build_matrix_rows_sum_to_one():
    for seed in range(5):
        q = build_transition_matrix(6, 0.55, seed)
        assert np.max(np.abs(q.sum(axis=1) - 1.0)) < 1e-12


def test_build_matrix_max_exactly_off_diagonal():
    q = build_transition_matrix(4, 0.7, 9)
    for i in range(4):
        j = int(np.argmax(q[i]))
        assert j != i
        assert q[i, j] == 0.7


def test_build_matrix_rejects_bad_p_max():
    with pytest.raises(ConfigError):
        build_transition_matrix(4, 1.2, 0)
    with pytest.raises(ConfigError):
        build_transition_matrix(4, 0.0, 0)


# -- invariants ---------------------------------------------------------------

def test_capacity_preserved_under_valid_actions(base_config):
    rng = np.random.default_rng(17)
    state = initial_state(base_config, 1)
    for _ in range(2000):
        action = random_valid_action(state, base_config, rng)
        state, costs = step(state, action, 1.0,
                            int(rng.integers(1, 5)), base_config)
        assert state.cache_bits(base_config) <= base_config.cache_capacity
        assert costs.reward <= 0.0
        assert min(costs.reactive_bandwidth, costs.push_bandwidth,
                   costs.reactive_energy, costs.bandwidth, costs.energy,
                   costs.weighted_cost) >= 0.0


def test_cache_hit_dominance(base_config):
    state = SystemState(request=3, input_cached=(0, 0, 1, 0),
                        output_cached=(0, 0, 1, 0))
    costs = cost_breakdown(state, noop_action(4, cores=0), 1.0, base_config)
    assert costs.reactive_bandwidth == 0.0
    assert costs.reactive_energy == 0.0


def test_snr_monotonicity(base_config):
    state = initial_state(base_config, 1)
    action = SystemAction(reactive_cores=5, push=(0, 1, 0, 0),
                          cache_delta_input=(0, 0, 0, 0),
                          cache_delta_output=(0, 0, 0, 0))
    snrs = [0.5, 1.0, 2.0, 3.0]
    rb = [reactive_bandwidth(state, action, s, base_config) for s in snrs]
    pb = [push_bandwidth(action, s, base_config) for s in snrs]
    assert all(a > b for a, b in zip(rb, rb[1:]))
    assert all(a > b for a, b in zip(pb, pb[1:]))


def test_core_count_tradeoff(base_config):
    state = initial_state(base_config, 1)
    floor = min_workable_cores(base_config.task(1), base_config)
    bw, en = [], []
    for cores in range(floor, base_config.num_cores + 1):
        action = noop_action(4, cores=cores)
        bw.append(reactive_bandwidth(state, action, 1.0, base_config))
        en.append(reactive_energy(state, action, base_config))
    assert all(a > b for a, b in zip(bw, bw[1:]))
    assert all(a < b for a, b in zip(en, en[1:]))


def test_reward_within_configured_bounds(base_config):
    rng = np.random.default_rng(23)
    b_max, e_max = cost_bounds(base_config, snr_min=0.5)
    bound = base_config.reward_scale * (b_max + base_config.cost_weight * e_max)
    state = initial_state(base_config, 1)
    for _ in range(500):
        action = random_valid_action(state, base_config, rng)
        state, costs = step(state, action, float(rng.choice([0.5, 1, 2, 3])),
                            int(rng.integers(1, 5)), base_config)
        assert -bound <= costs.reward <= 0.0


@given(st.integers(min_value=0, max_value=10 ** 6))
@settings(max_examples=30, deadline=None)
def test_config_rejects_infeasible_tasks(extra_bits):
    # demand beyond M * f_D must be rejected
    tasks = (Task(400001 + extra_bits, 1000, 800.0),)
    with pytest.raises(ConfigError, match="infeasible"):
        SystemConfig(tasks=tasks, cache_capacity=0, num_cores=8,
                     core_frequency=1.7e8, slot_length=0.02,
                     switched_capacitance=1e-19)


def test_snr_schedule_lookup():
    model = TransitionModel(matrix=build_transition_matrix(3, 0.6, 0),
                            snr_schedule=((0, 1.0), (300, 2.0), (600, 0.5)))
    assert model.snr_at(0) == 1.0
    assert model.snr_at(299) == 1.0
    assert model.snr_at(300) == 2.0
    assert model.snr_at(10_000) == 0.5
