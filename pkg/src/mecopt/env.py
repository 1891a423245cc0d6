"""Single-user edge system: tasks, request chain, cache, channel, costs.

The device serves one task request per slot of length tau. A request is
satisfied from the output cache (free), computed from the cached input, or
downloaded and computed within the slot. The controller additionally pushes
input data of unrequested tasks and edits the per-task input/output cache
bits, subject to the device cache capacity C (bits).

Conventions:
  - task indices are 1-based ({1..F}); cache vectors are tuples of length F
    where position k corresponds to task k+1.
  - SNR values are dimensionless linear ratios plugged into log2(1+snr).
  - all value types are immutable; `step` is a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ROW_SUM_TOL = 1e-12


class ConfigError(ValueError):
    """Invalid configuration or model parameter."""


class ActionError(ValueError):
    """A discrete action failed validation; carries the violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid action: " + "; ".join(self.violations))


@dataclass(frozen=True)
class Task:
    input_bits: int        # bits downloaded before computing
    output_bits: int       # bits produced by the computation
    cycles_per_bit: float  # CPU cycles needed per input bit

    def __post_init__(self):
        if self.input_bits <= 0 or self.output_bits <= 0:
            raise ConfigError("task data sizes must be positive")
        if self.cycles_per_bit <= 0:
            raise ConfigError("cycles_per_bit must be positive")


@dataclass(frozen=True)
class SystemConfig:
    tasks: tuple[Task, ...]
    cache_capacity: int          # C, bits
    num_cores: int               # M
    core_frequency: float        # f_D, cycles/s
    slot_length: float           # tau, s
    switched_capacitance: float  # mu
    cost_weight: float = 1.0     # lambda, weights energy against bandwidth
    reward_scale: float = 1e-6   # kappa
    discount: float = 0.99       # gamma

    def __post_init__(self):
        if not self.tasks:
            raise ConfigError("at least one task required")
        if self.cache_capacity < 0:
            raise ConfigError("cache_capacity must be >= 0")
        if self.num_cores <= 0:
            raise ConfigError("num_cores must be positive")
        for name in ("core_frequency", "slot_length", "switched_capacitance",
                     "reward_scale"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.cost_weight < 0:
            raise ConfigError("cost_weight must be >= 0")
        if not 0.0 < self.discount < 1.0:
            raise ConfigError("discount must lie in (0, 1)")
        for k, task in enumerate(self.tasks, start=1):
            # every task must be computable within one slot using all cores
            demand = task.input_bits * task.cycles_per_bit / self.slot_length
            if demand > self.num_cores * self.core_frequency * (1 + 1e-12):
                raise ConfigError(
                    f"task {k} infeasible: needs {demand:.3g} cycles/s, "
                    f"device peaks at {self.num_cores * self.core_frequency:.3g}")

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    def task(self, request: int) -> Task:
        return self.tasks[request - 1]


@dataclass(frozen=True)
class TransitionModel:
    """Request Markov chain plus the channel-quality schedule."""

    matrix: np.ndarray                        # F x F row-stochastic
    snr_schedule: tuple[tuple[int, float], ...] = ((0, 1.0),)
    snr_change_period: int = 300              # epochs between SNR redraws

    def __post_init__(self):
        q = np.asarray(self.matrix, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
            raise ConfigError("transition matrix must be square")
        if np.any(q < 0):
            raise ConfigError("transition probabilities must be >= 0")
        if np.any(np.abs(q.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise ConfigError("transition matrix rows must sum to 1")
        q = q.copy()
        q.flags.writeable = False
        object.__setattr__(self, "matrix", q)
        unreachable = _unreachable_states(q)
        if unreachable:
            raise ConfigError(
                "request chain is not irreducible; unreachable task set: "
                + "{" + ", ".join(str(s + 1) for s in sorted(unreachable)) + "}")
        if self.snr_change_period <= 0:
            raise ConfigError("snr_change_period must be positive")
        sched = tuple((int(e), float(v)) for e, v in self.snr_schedule)
        if not sched or sched[0][0] != 0:
            raise ConfigError("snr_schedule must start at epoch 0")
        if any(v <= 0 for _, v in sched):
            raise ConfigError("snr values must be positive linear ratios")
        if any(b[0] <= a[0] for a, b in zip(sched, sched[1:])):
            raise ConfigError("snr_schedule epochs must be increasing")
        object.__setattr__(self, "snr_schedule", sched)

    @property
    def num_tasks(self) -> int:
        return self.matrix.shape[0]

    def snr_at(self, epoch: int) -> float:
        value = self.snr_schedule[0][1]
        for start, snr in self.snr_schedule:
            if epoch >= start:
                value = snr
            else:
                break
        return value


def _unreachable_states(q: np.ndarray) -> set[int]:
    """States not in a single communicating class covering everything.

    Checks mutual reachability over the support graph; returns the set of
    states that cannot be reached from state 0 or cannot reach state 0.
    """
    n = q.shape[0]
    support = q > 0.0

    def reach(adj):
        seen = {0}
        frontier = [0]
        while frontier:
            i = frontier.pop()
            for j in np.nonzero(adj[i])[0]:
                if j not in seen:
                    seen.add(int(j))
                    frontier.append(int(j))
        return seen

    forward = reach(support)
    backward = reach(support.T)
    return set(range(n)) - (forward & backward)


@dataclass(frozen=True)
class SystemState:
    request: int                     # A(t), task index in {1..F}
    input_cached: tuple[int, ...]    # S^I, bits per task
    output_cached: tuple[int, ...]   # S^O, bits per task

    def cache_bits(self, config: SystemConfig) -> int:
        return cached_bits(self.input_cached, self.output_cached, config)


@dataclass(frozen=True)
class SystemAction:
    reactive_cores: int                   # cores for the requested task
    push: tuple[int, ...]                 # b_f in {0,1}
    cache_delta_input: tuple[int, ...]    # in {-1,0,1}
    cache_delta_output: tuple[int, ...]   # in {-1,0,1}


@dataclass(frozen=True)
class CostBreakdown:
    reactive_bandwidth: float  # B^R, Hz
    push_bandwidth: float      # B^P, Hz
    reactive_energy: float     # E^R, J
    bandwidth: float           # B = B^R + B^P
    energy: float              # E = E^R
    weighted_cost: float       # B + lambda * E
    reward: float              # -kappa * weighted_cost


@dataclass(frozen=True)
class Verdict:
    ok: bool
    violations: tuple[str, ...] = ()


def cached_bits(input_cached, output_cached, config: SystemConfig) -> int:
    total = 0
    for task, si, so in zip(config.tasks, input_cached, output_cached):
        total += task.input_bits * si + task.output_bits * so
    return total


def initial_state(config: SystemConfig, request: int) -> SystemState:
    zeros = (0,) * config.num_tasks
    return SystemState(request=request, input_cached=zeros, output_cached=zeros)


def min_workable_cores(task: Task, config: SystemConfig) -> int:
    """Smallest core count that finishes the task within the slot."""
    quotient = (task.input_bits * task.cycles_per_bit
                / (config.slot_length * config.core_frequency))
    return max(1, math.ceil(quotient - 1e-9))


def validate_action(state: SystemState, action: SystemAction,
                    config: SystemConfig) -> Verdict:
    """Check a discrete action against every feasibility constraint.

    Never raises; returns a verdict with one labeled entry per violated
    constraint. A state with an uncached output must be served, so the
    core count must reach the latency floor in that case.
    """
    violations = []
    f = config.num_tasks
    req = state.request
    task = config.task(req)
    out_cached = state.output_cached[req - 1]

    if not 0 <= action.reactive_cores <= config.num_cores:
        violations.append(
            f"reactive-cores: {action.reactive_cores} outside 0..{config.num_cores}")
    if out_cached and action.reactive_cores != 0:
        violations.append(
            "reactive-cores: must be 0 when the requested output is cached")
    if not out_cached:
        floor = min_workable_cores(task, config)
        if action.reactive_cores < floor:
            violations.append(
                f"latency: request {req} needs >= {floor} cores, "
                f"got {action.reactive_cores}")

    for k in range(f):
        if action.push[k] not in (0, 1):
            violations.append(f"push: task {k + 1} value {action.push[k]} not a bit")

    for k in range(f):
        si = state.input_cached[k]
        so = state.output_cached[k]
        cores_k = action.reactive_cores if (k + 1) == req else 0
        dsi = action.cache_delta_input[k]
        dso = action.cache_delta_output[k]
        hi_in = min(action.push[k] + cores_k, 1 - si)
        if not -si <= dsi <= hi_in:
            violations.append(
                f"cache-input-window: task {k + 1} delta {dsi} outside [{-si}, {hi_in}]")
        hi_out = min(cores_k, 1 - so)
        if not -so <= dso <= hi_out:
            violations.append(
                f"cache-output-window: task {k + 1} delta {dso} outside [{-so}, {hi_out}]")

    next_in = tuple(s + d for s, d in zip(state.input_cached, action.cache_delta_input))
    next_out = tuple(s + d for s, d in zip(state.output_cached, action.cache_delta_output))
    if all(v in (0, 1) for v in next_in + next_out):
        used = cached_bits(next_in, next_out, config)
        if used > config.cache_capacity:
            violations.append(
                f"cache-capacity: {used} bits exceed capacity {config.cache_capacity}")

    return Verdict(ok=not violations, violations=tuple(violations))


def reactive_bandwidth(state: SystemState, action: SystemAction, snr: float,
                       config: SystemConfig) -> float:
    """Bandwidth spent downloading the requested input within the slot.

    Zero whenever the input or the output of the request is already cached.
    """
    req = state.request
    if state.input_cached[req - 1] or state.output_cached[req - 1]:
        return 0.0
    task = config.task(req)
    cores = action.reactive_cores
    if cores <= 0:
        raise ActionError(["latency infeasible: no cores for an uncached request"])
    remaining = config.slot_length - (task.input_bits * task.cycles_per_bit
                                      / (cores * config.core_frequency))
    if remaining <= 0:
        raise ActionError([
            f"latency infeasible: {cores} cores leave no transmission time"])
    return task.input_bits / (remaining * math.log2(1.0 + snr))


def reactive_energy(state: SystemState, action: SystemAction,
                    config: SystemConfig) -> float:
    """Computation energy mu * c^2 * f_D^2 * I * w for the requested task."""
    req = state.request
    if state.output_cached[req - 1]:
        return 0.0
    task = config.task(req)
    c = action.reactive_cores
    return (config.switched_capacitance * c * c
            * config.core_frequency ** 2
            * task.input_bits * task.cycles_per_bit)


def push_bandwidth(action: SystemAction, snr: float,
                   config: SystemConfig) -> float:
    """Bandwidth spent pushing input data of selected tasks this slot."""
    pushed_bits = sum(task.input_bits * b
                      for task, b in zip(config.tasks, action.push))
    if pushed_bits == 0:
        return 0.0
    return pushed_bits / (config.slot_length * math.log2(1.0 + snr))


def cost_breakdown(state: SystemState, action: SystemAction, snr: float,
                   config: SystemConfig) -> CostBreakdown:
    br = reactive_bandwidth(state, action, snr, config)
    bp = push_bandwidth(action, snr, config)
    er = reactive_energy(state, action, config)
    bandwidth = br + bp
    energy = er
    weighted = bandwidth + config.cost_weight * energy
    return CostBreakdown(
        reactive_bandwidth=br, push_bandwidth=bp, reactive_energy=er,
        bandwidth=bandwidth, energy=energy, weighted_cost=weighted,
        reward=-config.reward_scale * weighted)


def step(state: SystemState, action: SystemAction, snr: float,
         next_request: int, config: SystemConfig
         ) -> tuple[SystemState, CostBreakdown]:
    """Apply one slot: costs for (state, action), then the cache update.

    The caller supplies next_request (drawn from the transition model row of
    state.request), which keeps this function pure and lets the exact DP
    solver reuse identical mechanics.
    """
    verdict = validate_action(state, action, config)
    if not verdict.ok:
        raise ActionError(verdict.violations)
    if not 1 <= next_request <= config.num_tasks:
        raise ConfigError(f"next_request {next_request} outside 1..{config.num_tasks}")
    costs = cost_breakdown(state, action, snr, config)
    next_state = SystemState(
        request=next_request,
        input_cached=tuple(s + d for s, d in
                           zip(state.input_cached, action.cache_delta_input)),
        output_cached=tuple(s + d for s, d in
                            zip(state.output_cached, action.cache_delta_output)))
    return next_state, costs


def stationary_distribution(model: TransitionModel) -> np.ndarray:
    """Limiting distribution p solving p = pQ with sum(p) = 1."""
    q = model.matrix
    n = q.shape[0]
    a = q.T - np.eye(n)
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    p = np.linalg.solve(a, b)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def build_transition_matrix(num_tasks: int, p_max: float, rng_seed) -> np.ndarray:
    """Synthetic request chain: one dominant off-diagonal hop per row.

    Row i places p_max on one randomly chosen j != i and spreads the rest
    over all other columns (the diagonal included) proportionally to |u|
    with u drawn uniformly.
    """
    if num_tasks < 2:
        raise ConfigError("need at least 2 tasks for a transition matrix")
    if not 0.0 < p_max < 1.0:
        raise ConfigError("p_max must lie in (0, 1)")
    rng = _as_rng(rng_seed)
    q = np.zeros((num_tasks, num_tasks))
    for i in range(num_tasks):
        choices = [j for j in range(num_tasks) if j != i]
        j = int(rng.choice(choices))
        others = [k for k in range(num_tasks) if k != j]
        weights = np.abs(rng.random(len(others)))
        weights /= weights.sum()
        q[i, others] = (1.0 - p_max) * weights
        q[i, j] = p_max
    return q


def sample_request_trace(model: TransitionModel, length: int, rng_seed) -> np.ndarray:
    """Frame-by-frame request sampling; 1-based task indices.

    The initial request is drawn from the stationary distribution so the
    trace is stationary from the first slot.
    """
    if length < 0:
        raise ConfigError("trace length must be >= 0")
    rng = _as_rng(rng_seed)
    trace = np.empty(length, dtype=np.int64)
    if length == 0:
        return trace
    cumulative = np.cumsum(model.matrix, axis=1)
    p0 = np.cumsum(stationary_distribution(model))
    uniforms = rng.random(length)
    current = int(np.searchsorted(p0, uniforms[0], side="right"))
    current = min(current, model.num_tasks - 1)
    trace[0] = current + 1
    for t in range(1, length):
        current = int(np.searchsorted(cumulative[current], uniforms[t], side="right"))
        current = min(current, model.num_tasks - 1)
        trace[t] = current + 1
    return trace


def build_snr_schedule(num_epochs: int, rng_seed, period: int = 300,
                       values: tuple[float, ...] = (0.5, 1.0, 2.0, 3.0),
                       ) -> tuple[tuple[int, float], ...]:
    """Piecewise-constant SNR plan redrawn uniformly every `period` epochs."""
    rng = _as_rng(rng_seed)
    schedule = []
    epoch = 0
    while epoch < max(num_epochs, 1):
        schedule.append((epoch, float(rng.choice(values))))
        epoch += period
    return tuple(schedule)


def default_tasks(num_tasks: int = 4, rng_seed=0, base_input: int = 16000,
                  base_output: int = 30000, cycles_per_bit: float = 800.0,
                  offset_fraction: float = 0.1) -> tuple[Task, ...]:
    """Tasks around the base sizes with a seeded uniform integer offset."""
    rng = _as_rng(rng_seed)
    tasks = []
    for _ in range(num_tasks):
        di = int(rng.integers(-round(base_input * offset_fraction),
                              round(base_input * offset_fraction) + 1)) if offset_fraction else 0
        do = int(rng.integers(-round(base_output * offset_fraction),
                              round(base_output * offset_fraction) + 1)) if offset_fraction else 0
        tasks.append(Task(input_bits=base_input + di, output_bits=base_output + do,
                          cycles_per_bit=cycles_per_bit))
    return tuple(tasks)


def default_config(num_tasks: int = 4, rng_seed=0, offset_fraction: float = 0.1,
                   **overrides) -> SystemConfig:
    """The stock single-user setup used throughout the experiments."""
    fields = dict(
        tasks=default_tasks(num_tasks, rng_seed=rng_seed,
                            offset_fraction=offset_fraction),
        cache_capacity=40000,
        num_cores=8,
        core_frequency=1.7e8,
        slot_length=0.02,
        switched_capacitance=1e-19,
        cost_weight=1.0,
        reward_scale=1e-6,
        discount=0.99,
    )
    fields.update(overrides)
    return SystemConfig(**fields)


def default_transition_model(config: SystemConfig, p_max: float = 0.7, rng_seed=0,
                             snr_schedule=((0, 1.0),),
                             snr_change_period: int = 300) -> TransitionModel:
    matrix = build_transition_matrix(config.num_tasks, p_max, rng_seed)
    return TransitionModel(matrix=matrix, snr_schedule=tuple(snr_schedule),
                           snr_change_period=snr_change_period)


def cost_bounds(config: SystemConfig, snr_min: float) -> tuple[float, float]:
    """Worst-case per-slot bandwidth and energy over all valid actions."""
    worst_reactive = 0.0
    for task in config.tasks:
        floor = min_workable_cores(task, config)
        remaining = config.slot_length - (task.input_bits * task.cycles_per_bit
                                          / (floor * config.core_frequency))
        if remaining > 0:
            worst_reactive = max(
                worst_reactive,
                task.input_bits / (remaining * math.log2(1.0 + snr_min)))
    all_push = sum(t.input_bits for t in config.tasks)
    b_max = worst_reactive + all_push / (config.slot_length * math.log2(1.0 + snr_min))
    e_max = max(config.switched_capacitance * config.num_cores ** 2
                * config.core_frequency ** 2 * t.input_bits * t.cycles_per_bit
                for t in config.tasks)
    return b_max, e_max


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
