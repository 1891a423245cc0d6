"""Continuous-to-discrete action mapping: quantization, repair, scaling.

The learner emits a vector in [-1, 1]^(3F+1) laid out as
[cores, push_1..F, dsi_1..F, dso_1..F]. Denormalization produces a
ContinuousAction with component ranges [0, M], [0, 1]^F, [-1, 1]^2F;
`quantize` bins each component onto its integer selection set, and
`correct` deterministically repairs the result into a valid SystemAction.

Quantization uses uniform binning: for a selection set {lo..hi} with bin
width w = (hi - lo) / (hi - lo + 1), a raw value v maps to
lo + floor((v - lo) / w), clipped at hi. Repair applies seven rules in
order: core floor/zeroing, push suppression for cached tasks, single-push
selection, mandatory caching of the pushed input, capacity eviction by
ascending raw preference, opportunistic reactive caching of the request by
descending raw preference, and window clipping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .env import (SystemAction, SystemConfig, SystemState, cached_bits,
                  min_workable_cores)


@dataclass(frozen=True)
class ContinuousAction:
    reactive_cores_raw: float               # in [0, M]
    push_raw: tuple[float, ...]             # in [0, 1] each
    cache_delta_input_raw: tuple[float, ...]   # in [-1, 1] each
    cache_delta_output_raw: tuple[float, ...]  # in [-1, 1] each

    @property
    def num_tasks(self) -> int:
        return len(self.push_raw)


@dataclass(frozen=True)
class ActionMask:
    """Restriction of the learner's action space.

    Masked components are removed from the learner's action vector and read
    as neutral zeros by the codec; the repair rules skip masked additions.
    """
    allow_push: bool = True
    allow_cache: bool = True

    def active_dims(self, num_tasks: int) -> np.ndarray:
        active = np.ones(3 * num_tasks + 1, dtype=bool)
        if not self.allow_push:
            active[1:1 + num_tasks] = False
        if not self.allow_cache:
            active[1 + num_tasks:] = False
        return active

    def action_dim(self, num_tasks: int) -> int:
        return int(self.active_dims(num_tasks).sum())


FULL_ACTION_SPACE = ActionMask()


def quantize_component(value: float, lo: int, hi: int) -> int:
    """Uniform-threshold integer projection of value in [lo, hi]."""
    if hi == lo:
        return lo
    width = (hi - lo) / (hi - lo + 1)
    return min(lo + math.floor((value - lo) / width), hi)


def quantize(raw: ContinuousAction, config: SystemConfig) -> SystemAction:
    """Bin every component onto its selection set; may still be invalid."""
    m = config.num_cores
    return SystemAction(
        reactive_cores=quantize_component(raw.reactive_cores_raw, 0, m),
        push=tuple(quantize_component(v, 0, 1) for v in raw.push_raw),
        cache_delta_input=tuple(
            quantize_component(v, -1, 1) for v in raw.cache_delta_input_raw),
        cache_delta_output=tuple(
            quantize_component(v, -1, 1) for v in raw.cache_delta_output_raw),
    )


def correct(state: SystemState, action: SystemAction, raw: ContinuousAction,
            config: SystemConfig,
            mask: ActionMask = FULL_ACTION_SPACE) -> SystemAction:
    """Repair a quantized action into one that always validates.

    Total and idempotent; the raw continuous values only break ties and
    order capacity evictions/additions, never change feasibility.
    """
    f = config.num_tasks
    req = state.request
    ri = req - 1
    task = config.task(req)

    # Rule 1: serve the request — core floor when the output is uncached,
    # zero cores when it is cached.
    if state.output_cached[ri]:
        cores = 0
    else:
        cores = max(min(action.reactive_cores, config.num_cores),
                    min_workable_cores(task, config))

    # Rule 2: never push tasks with any data already cached.
    push = [0 if (state.input_cached[k] + state.output_cached[k] >= 1
                  or not mask.allow_push) else action.push[k]
            for k in range(f)]

    # Rule 3: at most one push; keep the largest raw preference.
    candidates = [k for k in range(f) if push[k] == 1]
    if len(candidates) > 1:
        keep = max(candidates, key=lambda k: (raw.push_raw[k], -k))
        push = [1 if k == keep else 0 for k in range(f)]

    dsi = list(action.cache_delta_input) if mask.allow_cache else [0] * f
    dso = list(action.cache_delta_output) if mask.allow_cache else [0] * f

    def core_count(k):
        return cores if k == ri else 0

    def clip_windows():
        # out-of-window deltas cannot take effect, so they must not count
        # toward capacity either; Rule 7 applied eagerly and again at the end
        for k in range(f):
            si = state.input_cached[k]
            so = state.output_cached[k]
            dsi[k] = min(max(dsi[k], -si), min(push[k] + core_count(k), 1 - si))
            dso[k] = min(max(dso[k], -so), min(core_count(k), 1 - so))

    clip_windows()

    def next_bit(bits, deltas, k):
        return min(max(bits[k] + deltas[k], 0), 1)

    def used_bits():
        nxt_in = tuple(next_bit(state.input_cached, dsi, k) for k in range(f))
        nxt_out = tuple(next_bit(state.output_cached, dso, k) for k in range(f))
        return cached_bits(nxt_in, nxt_out, config)

    # Rule 4: the pushed input must be cached — unless that single addition
    # would break an otherwise-satisfied capacity constraint.
    for k in range(f):
        if push[k] == 1 and mask.allow_cache:
            before = used_bits()
            prior = dsi[k]
            dsi[k] = 1
            if before <= config.cache_capacity and used_bits() > config.cache_capacity:
                dsi[k] = prior

    # Rule 5: while over capacity, drop would-be-cached entries in ascending
    # raw-preference order (ties: lower task index, inputs before outputs).
    while used_bits() > config.cache_capacity:
        entries = []
        for k in range(f):
            if next_bit(state.input_cached, dsi, k) == 1:
                entries.append((raw.cache_delta_input_raw[k], k, 0))
            if next_bit(state.output_cached, dso, k) == 1:
                entries.append((raw.cache_delta_output_raw[k], k, 1))
        if not entries:
            break
        _, k, kind = min(entries, key=lambda e: (e[0], e[1], e[2]))
        if kind == 0:
            dsi[k] = -state.input_cached[k]
            # a push whose mandated cache add was just dropped is pure waste
            if push[k] == 1:
                push[k] = 0
        else:
            dso[k] = -state.output_cached[k]

    # Rule 6: with slack left, add reactive caches for the requested task in
    # descending raw-preference order. Input needs a transmission source
    # (push or download), output needs a computation.
    if mask.allow_cache:
        additions = [(raw.cache_delta_input_raw[ri], 0),
                     (raw.cache_delta_output_raw[ri], 1)]
        for _, kind in sorted(additions, key=lambda e: -e[0]):
            if kind == 0:
                eligible = (state.input_cached[ri] == 0 and dsi[ri] != 1
                            and push[ri] + cores > 0)
                size = task.input_bits
            else:
                eligible = (state.output_cached[ri] == 0 and dso[ri] != 1
                            and cores > 0)
                size = task.output_bits
            if eligible and used_bits() + size <= config.cache_capacity:
                if kind == 0:
                    dsi[ri] = 1
                else:
                    dso[ri] = 1

    # Rule 7: clip deltas into the per-task windows.
    clip_windows()

    return SystemAction(reactive_cores=cores, push=tuple(push),
                        cache_delta_input=tuple(dsi),
                        cache_delta_output=tuple(dso))


@dataclass
class NormalizationSpec:
    """Affine [-1, 1] scaling for state and action vectors.

    Out-of-bounds inputs are clamped; `clamp_events` counts occurrences for
    diagnostics.
    """

    state_bounds: np.ndarray   # (2F+1, 2) columns lo, hi
    action_bounds: np.ndarray  # (3F+1, 2)
    clamp_events: int = 0

    @classmethod
    def for_config(cls, config: SystemConfig) -> "NormalizationSpec":
        f = config.num_tasks
        state = np.zeros((2 * f + 1, 2))
        state[0] = (1.0, float(max(f, 2)))   # request index
        state[1:, 0] = 0.0                   # cache bits
        state[1:, 1] = 1.0
        action = np.zeros((3 * f + 1, 2))
        action[0] = (0.0, float(config.num_cores))
        action[1:1 + f, 0] = 0.0             # push
        action[1:1 + f, 1] = 1.0
        action[1 + f:, 0] = -1.0             # cache deltas
        action[1 + f:, 1] = 1.0
        return cls(state_bounds=state, action_bounds=action)

    @property
    def state_dim(self) -> int:
        return self.state_bounds.shape[0]

    @property
    def action_dim(self) -> int:
        return self.action_bounds.shape[0]

    def _to_unit(self, values: np.ndarray, bounds: np.ndarray) -> np.ndarray:
        lo, hi = bounds[:, 0], bounds[:, 1]
        if np.any(values < lo - 1e-12) or np.any(values > hi + 1e-12):
            self.clamp_events += 1
        clipped = np.clip(values, lo, hi)
        return 2.0 * (clipped - lo) / (hi - lo) - 1.0

    def _from_unit(self, values: np.ndarray, bounds: np.ndarray) -> np.ndarray:
        lo, hi = bounds[:, 0], bounds[:, 1]
        if np.any(values < -1.0 - 1e-12) or np.any(values > 1.0 + 1e-12):
            self.clamp_events += 1
        clipped = np.clip(values, -1.0, 1.0)
        return lo + (clipped + 1.0) * (hi - lo) / 2.0

    def normalize_state(self, state: SystemState) -> np.ndarray:
        vec = np.concatenate(([float(state.request)],
                              np.asarray(state.input_cached, dtype=float),
                              np.asarray(state.output_cached, dtype=float)))
        return self._to_unit(vec, self.state_bounds)

    def normalize_action(self, cont: ContinuousAction) -> np.ndarray:
        vec = np.concatenate(([cont.reactive_cores_raw],
                              cont.push_raw, cont.cache_delta_input_raw,
                              cont.cache_delta_output_raw))
        return self._to_unit(vec, self.action_bounds)

    def denormalize_action(self, vec: np.ndarray,
                           mask: ActionMask = FULL_ACTION_SPACE
                           ) -> ContinuousAction:
        """Expand a (possibly masked) learner vector to a ContinuousAction."""
        f = (self.action_dim - 1) // 3
        full = np.zeros(self.action_dim)
        active = mask.active_dims(f)
        full[active] = np.asarray(vec, dtype=float)
        values = self._from_unit(full, self.action_bounds)
        # masked components read as raw zero: quantizes to a no-op
        values[~active] = 0.0
        return ContinuousAction(
            reactive_cores_raw=float(values[0]),
            push_raw=tuple(values[1:1 + f]),
            cache_delta_input_raw=tuple(values[1 + f:1 + 2 * f]),
            cache_delta_output_raw=tuple(values[1 + 2 * f:]))
