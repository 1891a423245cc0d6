"""Shared generators for random states and valid actions."""

import numpy as np

from mecopt.env import (SystemAction, SystemConfig, SystemState, cached_bits,
                        min_workable_cores)


def random_state(config: SystemConfig, rng: np.random.Generator) -> SystemState:
    """Random request plus cache bits that respect the capacity limit."""
    f = config.num_tasks
    s_in = [0] * f
    s_out = [0] * f
    slots = [(kind, k) for kind in (0, 1) for k in range(f)]
    rng.shuffle(slots)
    for kind, k in slots:
        if rng.random() < 0.5:
            continue
        if kind == 0:
            s_in[k] = 1
            if cached_bits(s_in, s_out, config) > config.cache_capacity:
                s_in[k] = 0
        else:
            s_out[k] = 1
            if cached_bits(s_in, s_out, config) > config.cache_capacity:
                s_out[k] = 0
    return SystemState(request=int(rng.integers(1, f + 1)),
                       input_cached=tuple(s_in), output_cached=tuple(s_out))


def random_valid_action(state: SystemState, config: SystemConfig,
                        rng: np.random.Generator) -> SystemAction:
    """Uniformly-ish sampled action satisfying every validity constraint."""
    f = config.num_tasks
    ri = state.request - 1
    if state.output_cached[ri]:
        cores = 0
    else:
        floor = min_workable_cores(config.task(state.request), config)
        cores = int(rng.integers(floor, config.num_cores + 1))
    push = [int(rng.integers(0, 2)) for _ in range(f)]
    dsi = []
    dso = []
    for k in range(f):
        c_k = cores if k == ri else 0
        si = state.input_cached[k]
        so = state.output_cached[k]
        dsi.append(int(rng.integers(-si, min(push[k] + c_k, 1 - si) + 1)))
        dso.append(int(rng.integers(-so, min(c_k, 1 - so) + 1)))

    def used():
        nxt_in = [s + d for s, d in zip(state.input_cached, dsi)]
        nxt_out = [s + d for s, d in zip(state.output_cached, dso)]
        return cached_bits(nxt_in, nxt_out, config)

    # withdraw additions, then evict, until the update fits
    while used() > config.cache_capacity:
        adds = [(kind, k) for k in range(f)
                for kind, deltas in ((0, dsi), (1, dso)) if deltas[k] == 1]
        if adds:
            kind, k = adds[int(rng.integers(len(adds)))]
            (dsi if kind == 0 else dso)[k] = 0
            continue
        kept = [(kind, k) for k in range(f)
                for kind, deltas, bits in ((0, dsi, state.input_cached),
                                           (1, dso, state.output_cached))
                if bits[k] == 1 and deltas[k] == 0]
        kind, k = kept[int(rng.integers(len(kept)))]
        (dsi if kind == 0 else dso)[k] = -1

    return SystemAction(reactive_cores=cores, push=tuple(push),
                        cache_delta_input=tuple(dsi),
                        cache_delta_output=tuple(dso))
