"""Comparison policies: recency/frequency heuristics and SAC ablations.

The two heuristics serve every request reactively with a fixed core count
of round(0.75 M), push the input of one other task chosen by recency or
frequency, cache input data only, and evict by the mirrored rule when the
cache overflows. The SAC ablations are expressed as action-space masks
consumed by the codec: DFNC forbids pushing and caching, DFC forbids
pushing only, PTDFC restricts nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .codec import FULL_ACTION_SPACE, ActionMask
from .env import (ConfigError, SystemAction, SystemConfig, SystemState,
                  cached_bits, min_workable_cores)

SAC_ALGORITHMS = ("PTDFC", "DFC", "DFNC")
HEURISTIC_ALGORITHMS = ("MRU-LRU", "MFU-LFU")
ALGORITHMS = SAC_ALGORITHMS + HEURISTIC_ALGORITHMS


def restricted_action_space(kind: str) -> ActionMask:
    if kind == "DFNC":
        return ActionMask(allow_push=False, allow_cache=False)
    if kind == "DFC":
        return ActionMask(allow_push=False, allow_cache=True)
    if kind == "PTDFC":
        return FULL_ACTION_SPACE
    raise ConfigError(f"unknown SAC action-space kind {kind!r}")


@dataclass
class RecencyTracker:
    """Per-task last-request time and cumulative request counts."""

    last_request: list[float]
    counts: list[int]
    now: int = -1

    @classmethod
    def for_tasks(cls, num_tasks: int) -> "RecencyTracker":
        return cls(last_request=[-float("inf")] * num_tasks,
                   counts=[0] * num_tasks)

    def observe(self, t: int, request: int) -> None:
        if t < self.now:
            raise ValueError("observations must be time-ordered")
        self.now = t
        self.last_request[request - 1] = t
        self.counts[request - 1] += 1


def heuristic_cores(state: SystemState, config: SystemConfig) -> int:
    """Fixed 0.75 M cores, raised to the latency floor, zero on cache hit."""
    if state.output_cached[state.request - 1]:
        return 0
    fixed = int(np.floor(0.75 * config.num_cores + 0.5))
    return max(fixed, min_workable_cores(config.task(state.request), config))


def _heuristic_action(state: SystemState, tracker: RecencyTracker,
                      config: SystemConfig, score) -> SystemAction:
    """Shared push/evict skeleton; `score(k)` orders tasks (higher = keep)."""
    f = config.num_tasks
    ri = state.request - 1
    cores = heuristic_cores(state, config)

    push = [0] * f
    candidates = [k for k in range(f)
                  if k != ri
                  and state.input_cached[k] + state.output_cached[k] == 0
                  and score(k) > -float("inf")]
    pushed = max(candidates, key=lambda k: (score(k), -k)) if candidates else None
    if pushed is not None:
        push[pushed] = 1

    dsi = [0] * f
    dso = [0] * f
    # cache whatever input data reaches the device this slot
    adds = []
    if pushed is not None:
        adds.append(pushed)
    downloads = (state.input_cached[ri] == 0 and state.output_cached[ri] == 0)
    if downloads:
        adds.append(ri)
    for k in adds:
        dsi[k] = 1

    def used():
        nxt_in = tuple(min(s + d, 1) for s, d in zip(state.input_cached, dsi))
        return cached_bits(nxt_in, state.output_cached, config)

    # evict the lowest-scoring cached inputs until the update fits
    while used() > config.cache_capacity:
        evictable = [k for k in range(f) if state.input_cached[k] == 1 and dsi[k] == 0]
        if evictable:
            victim = min(evictable, key=lambda k: (score(k), k))
            dsi[victim] = -1
            continue
        # still over: withdraw speculative adds, push first being pointless
        if pushed is not None and dsi[pushed] == 1:
            dsi[pushed] = 0
            push[pushed] = 0
            pushed = None
            continue
        if downloads and dsi[ri] == 1:
            dsi[ri] = 0
            continue
        break

    return SystemAction(reactive_cores=cores, push=tuple(push),
                        cache_delta_input=tuple(dsi),
                        cache_delta_output=tuple(dso))


def mru_lru_policy(state: SystemState, tracker: RecencyTracker,
                   config: SystemConfig) -> SystemAction:
    """Push the most-recently-used other task, evict least-recently-used."""
    return _heuristic_action(state, tracker, config,
                             lambda k: tracker.last_request[k])


def mfu_lfu_policy(state: SystemState, tracker: RecencyTracker,
                   config: SystemConfig) -> SystemAction:
    """Push the most-frequently-used other task, evict least-frequently-used."""
    return _heuristic_action(
        state, tracker, config,
        lambda k: tracker.counts[k] if tracker.counts[k] > 0 else -float("inf"))


HEURISTICS = {"MRU-LRU": mru_lru_policy, "MFU-LFU": mfu_lfu_policy}


def rollout_heuristic(policy, config: SystemConfig, trace: np.ndarray,
                      snr_for_step, collect: list | None = None
                      ) -> dict[str, float]:
    """Replay a heuristic over a request trace; returns per-step mean costs.

    `snr_for_step(t)` supplies the channel quality; `collect`, when given,
    receives (t, state, action, costs) tuples. The tracker observes each
    request as it arrives, so pushing decisions use the history up to and
    including the current slot.
    """
    from .env import initial_state, step

    steps = len(trace) - 1
    tracker = RecencyTracker.for_tasks(config.num_tasks)
    state = initial_state(config, int(trace[0])) if steps >= 0 and len(trace) else None
    sums = {"bandwidth": 0.0, "energy": 0.0, "weighted_cost": 0.0, "reward": 0.0}
    rewards = []
    for t in range(steps):
        tracker.observe(t, state.request)
        action = policy(state, tracker, config)
        next_state, costs = step(state, action, snr_for_step(t),
                                 int(trace[t + 1]), config)
        if collect is not None:
            collect.append((t, state, action, costs))
        state = next_state
        sums["bandwidth"] += costs.bandwidth
        sums["energy"] += costs.energy
        sums["weighted_cost"] += costs.weighted_cost
        sums["reward"] += costs.reward
        rewards.append(costs.reward)
    n = max(steps, 1)
    return {"mean_bandwidth": sums["bandwidth"] / n,
            "mean_energy": sums["energy"] / n,
            "mean_weighted_cost": sums["weighted_cost"] / n,
            "mean_reward": sums["reward"] / n,
            "steps": steps,
            "rewards": rewards}
