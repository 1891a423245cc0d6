"""Exact solution of the joint control problem on tiny instances.

Enumerates every system state satisfying the cache-capacity constraint and
every valid action per state, assembles the expected-cost table from the
simulator's own cost mechanics, and runs value iteration on the discounted
MDP. Costs depend only on (state, action); stochasticity enters solely
through the request chain.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .env import (ConfigError, SystemAction, SystemConfig, SystemState,
                  TransitionModel, cached_bits, cost_breakdown,
                  min_workable_cores, stationary_distribution,
                  validate_action)


class EnumerationBudgetError(RuntimeError):
    pass


@dataclass
class EnumeratedMdp:
    config: SystemConfig
    model: TransitionModel
    snr: float
    states: list[SystemState]
    state_index: dict[SystemState, int]
    actions: list[list[SystemAction]]          # per state
    costs: list[np.ndarray]                    # per state, per action
    next_index: list[list[np.ndarray]]         # per state, action: index by next request

    @property
    def num_states(self) -> int:
        return len(self.states)

    def index_of(self, state: SystemState) -> int:
        return self.state_index[state]


def _cache_states(config: SystemConfig):
    f = config.num_tasks
    for bits in itertools.product((0, 1), repeat=2 * f):
        s_in = bits[:f]
        s_out = bits[f:]
        if cached_bits(s_in, s_out, config) <= config.cache_capacity:
            yield s_in, s_out


def _valid_actions(state: SystemState, config: SystemConfig):
    f = config.num_tasks
    ri = state.request - 1
    if state.output_cached[ri]:
        core_choices = [0]
    else:
        floor = min_workable_cores(config.task(state.request), config)
        core_choices = list(range(floor, config.num_cores + 1))
    for cores in core_choices:
        for push in itertools.product((0, 1), repeat=f):
            in_ranges = []
            out_ranges = []
            for k in range(f):
                c_k = cores if k == ri else 0
                si = state.input_cached[k]
                so = state.output_cached[k]
                in_ranges.append(range(-si, min(push[k] + c_k, 1 - si) + 1))
                out_ranges.append(range(-so, min(c_k, 1 - so) + 1))
            for dsi in itertools.product(*in_ranges):
                nxt_in = tuple(s + d for s, d in zip(state.input_cached, dsi))
                for dso in itertools.product(*out_ranges):
                    nxt_out = tuple(s + d for s, d in zip(state.output_cached, dso))
                    if cached_bits(nxt_in, nxt_out, config) > config.cache_capacity:
                        continue
                    yield SystemAction(reactive_cores=cores, push=push,
                                       cache_delta_input=dsi,
                                       cache_delta_output=dso)


def enumerate_mdp(config: SystemConfig, model: TransitionModel, snr: float,
                  budget: int = 10_000_000) -> EnumeratedMdp:
    """Build the complete finite MDP for a fixed channel quality."""
    f = config.num_tasks
    if model.num_tasks != f:
        raise ConfigError("transition model size does not match config")
    raw_actions = (config.num_cores + 1) * (2 ** f) * (3 ** (2 * f))
    raw_states = f * (4 ** f)
    if raw_states * raw_actions > budget:
        raise EnumerationBudgetError(
            f"enumeration needs up to {raw_states} states x {raw_actions} "
            f"actions = {raw_states * raw_actions} pairs, budget {budget}")

    states: list[SystemState] = []
    for request in range(1, f + 1):
        for s_in, s_out in _cache_states(config):
            states.append(SystemState(request=request, input_cached=s_in,
                                      output_cached=s_out))
    state_index = {s: i for i, s in enumerate(states)}

    actions, costs, next_index = [], [], []
    for state in states:
        acts = list(_valid_actions(state, config))
        row_costs = np.empty(len(acts))
        row_next = []
        for a_idx, action in enumerate(acts):
            verdict = validate_action(state, action, config)
            if not verdict.ok:
                raise RuntimeError(
                    f"enumerated action failed validation: {verdict.violations}")
            row_costs[a_idx] = cost_breakdown(state, action, snr, config).weighted_cost
            nxt_in = tuple(s + d for s, d in
                           zip(state.input_cached, action.cache_delta_input))
            nxt_out = tuple(s + d for s, d in
                            zip(state.output_cached, action.cache_delta_output))
            row_next.append(np.array(
                [state_index[SystemState(r, nxt_in, nxt_out)]
                 for r in range(1, f + 1)], dtype=np.int64))
        actions.append(acts)
        costs.append(row_costs)
        next_index.append(row_next)

    return EnumeratedMdp(config=config, model=model, snr=snr, states=states,
                         state_index=state_index, actions=actions,
                         costs=costs, next_index=next_index)


def value_iteration(mdp: EnumeratedMdp, gamma: float, tolerance: float = 1e-9,
                    max_sweeps: int = 100_000,
                    residuals: list | None = None
                    ) -> tuple[np.ndarray, list[int], float]:
    """Minimize discounted cost; returns (values, greedy policy, phi*).

    phi* is the optimal discounted cost from the start distribution
    (stationary request, empty cache). Sweep sup-norm residuals are appended
    to `residuals` when a list is supplied.
    """
    if not 0.0 < gamma < 1.0:
        raise ConfigError("gamma must lie in (0, 1)")
    n = mdp.num_states
    q_rows = [mdp.model.matrix[s.request - 1] for s in mdp.states]
    values = np.zeros(n)
    policy = [0] * n
    for _ in range(max_sweeps):
        new_values = np.empty(n)
        for i in range(n):
            # expected next value per action, averaging over next requests
            expected = np.array(
                [q_rows[i] @ values[idx] for idx in mdp.next_index[i]])
            totals = mdp.costs[i] + gamma * expected
            best = int(np.argmin(totals))
            policy[i] = best
            new_values[i] = totals[best]
        residual = float(np.max(np.abs(new_values - values)))
        if residuals is not None:
            residuals.append(residual)
        values = new_values
        if residual < tolerance:
            break
    else:
        raise RuntimeError("value iteration failed to converge")
    return values, policy, start_cost(mdp, values)


def start_cost(mdp: EnumeratedMdp, values: np.ndarray) -> float:
    """Expected value from (stationary request, empty cache)."""
    p = stationary_distribution(mdp.model)
    zeros = (0,) * mdp.config.num_tasks
    total = 0.0
    for request in range(1, mdp.config.num_tasks + 1):
        total += p[request - 1] * values[
            mdp.index_of(SystemState(request, zeros, zeros))]
    return float(total)


def evaluate_policy(mdp: EnumeratedMdp, policy, gamma: float) -> np.ndarray:
    """Exact discounted cost per state for a stationary policy.

    `policy` maps a SystemState to a SystemAction (or is a per-state action
    index list from value_iteration). Solves the linear Bellman system.
    """
    n = mdp.num_states
    cost_vec = np.empty(n)
    transition = np.zeros((n, n))
    for i, state in enumerate(mdp.states):
        if callable(policy):
            action = policy(state)
            verdict = validate_action(state, action, mdp.config)
            if not verdict.ok:
                raise ConfigError(
                    f"policy invalid at state {state}: {verdict.violations}")
            cost_vec[i] = cost_breakdown(state, action, mdp.snr,
                                         mdp.config).weighted_cost
            nxt_in = tuple(s + d for s, d in
                           zip(state.input_cached, action.cache_delta_input))
            nxt_out = tuple(s + d for s, d in
                            zip(state.output_cached, action.cache_delta_output))
            next_idx = np.array([mdp.state_index[SystemState(r, nxt_in, nxt_out)]
                                 for r in range(1, mdp.config.num_tasks + 1)])
        else:
            a_idx = policy[i]
            cost_vec[i] = mdp.costs[i][a_idx]
            next_idx = mdp.next_index[i][a_idx]
        q_row = mdp.model.matrix[state.request - 1]
        for r, j in enumerate(next_idx):
            transition[i, j] += q_row[r]
    solution = np.linalg.solve(np.eye(n) - gamma * transition, cost_vec)
    return solution


def policy_rows(mdp: EnumeratedMdp, values: np.ndarray, policy: list[int]):
    """CSV-friendly rows (request, cache bits, value, chosen action fields)."""
    rows = []
    for i, state in enumerate(mdp.states):
        action = mdp.actions[i][policy[i]]
        rows.append([
            state.request,
            "".join(str(b) for b in state.input_cached),
            "".join(str(b) for b in state.output_cached),
            repr(float(values[i])),
            action.reactive_cores,
            "".join(str(b) for b in action.push),
            ",".join(str(d) for d in action.cache_delta_input),
            ",".join(str(d) for d in action.cache_delta_output),
        ])
    return rows
