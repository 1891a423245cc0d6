"""Experiment orchestration: seeded runs, parameter sweeps, reports.

A sweep instantiates the same seeded setup per value of one variable, runs
each requested algorithm (training the SAC variants, replaying the
heuristics on identical request traces), and emits one CSV row per
(algorithm, value) with mean costs and the epochs-to-convergence measure.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import config_io
from .baselines import (ALGORITHMS, HEURISTICS, SAC_ALGORITHMS,
                        restricted_action_space, rollout_heuristic)
from .env import (ConfigError, SystemConfig, TransitionModel,
                  build_snr_schedule, build_transition_matrix, default_tasks,
                  sample_request_trace)
from .sac import (SacHyper, TrainSchedule, evaluate_agent, load_agent,
                  save_agent, train)

SWEEP_RANGES = {
    "cache_capacity": lambda v: v >= 0,
    "num_cores": lambda v: v >= 1,
    "num_tasks": lambda v: v >= 2,
    "p_max": lambda v: 0.0 < v < 1.0,
    "core_frequency": lambda v: v > 0,
    "input_bits": lambda v: v >= 1,
    "output_bits": lambda v: v >= 1,
    "slot_length": lambda v: v > 0,
    "cost_weight": lambda v: v >= 0,
    "snr": lambda v: v > 0,
}

SWEEP_COLUMNS = ["algorithm", "sweep_var", "value", "mean_bandwidth",
                 "mean_energy", "mean_weighted_cost", "epochs_to_converge"]

# relative training lengths mirror the observed convergence difficulty
EPOCH_WEIGHTS = {"PTDFC": 1.0, "DFC": 0.7, "DFNC": 0.4}


@dataclass(frozen=True)
class ExperimentSpec:
    algorithms: tuple[str, ...] = ("PTDFC",)
    config_overrides: dict = field(default_factory=dict)
    sweep_var: str | None = None
    sweep_values: tuple = ()
    trace_length: int = 200_000
    seed: int = 0
    snr_mode: str = "fixed"        # "fixed" | "dynamic"
    snr_value: float = 1.0
    out_dir: str = "."
    train_epochs: int = 40
    steps_per_epoch: int = 1000
    hyper: SacHyper = SacHyper()
    eval_every: int = 10
    eval_epochs: int = 2
    offset_fraction: float = 0.1

    def __post_init__(self):
        algos = (self.algorithms,) if isinstance(self.algorithms, str) \
            else tuple(self.algorithms)
        object.__setattr__(self, "algorithms", algos)
        for algo in algos:
            if algo not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {algo!r}; "
                                  f"choose from {', '.join(ALGORITHMS)}")
        if self.sweep_var is not None:
            if self.sweep_var not in SWEEP_RANGES:
                raise ConfigError(
                    f"unknown sweep variable {self.sweep_var!r}; "
                    f"choose from {', '.join(sorted(SWEEP_RANGES))}")
            if not self.sweep_values:
                raise ConfigError("sweep requires at least one value")
            check = SWEEP_RANGES[self.sweep_var]
            for v in self.sweep_values:
                if not check(v):
                    raise ConfigError(
                        f"sweep value {v!r} outside the valid range of "
                        f"{self.sweep_var}")
        if self.snr_mode not in ("fixed", "dynamic"):
            raise ConfigError("snr_mode must be 'fixed' or 'dynamic'")
        if self.trace_length < 1:
            raise ConfigError("trace_length must be positive")


def build_config(overrides: dict, seed: int = 0,
                 offset_fraction: float = 0.1) -> SystemConfig:
    """Default setup with named overrides (task sizes rebuild the task set)."""
    ov = dict(overrides)
    num_tasks = int(ov.pop("num_tasks", 4))
    base_input = int(ov.pop("input_bits", 16000))
    base_output = int(ov.pop("output_bits", 30000))
    cycles = float(ov.pop("cycles_per_bit", 800.0))
    tasks = default_tasks(num_tasks, rng_seed=seed, base_input=base_input,
                          base_output=base_output, cycles_per_bit=cycles,
                          offset_fraction=offset_fraction)
    fields = dict(tasks=tasks, cache_capacity=40000, num_cores=8,
                  core_frequency=1.7e8, slot_length=0.02,
                  switched_capacitance=1e-19, cost_weight=1.0,
                  reward_scale=1e-6, discount=0.99)
    for key in list(ov):
        if key in fields:
            fields[key] = ov.pop(key)
    if ov:
        raise ConfigError(f"unknown config overrides: {sorted(ov)}")
    if isinstance(fields["cache_capacity"], float):
        fields["cache_capacity"] = int(fields["cache_capacity"])
    if isinstance(fields["num_cores"], float):
        fields["num_cores"] = int(fields["num_cores"])
    return SystemConfig(**fields)


def build_model(config: SystemConfig, spec: ExperimentSpec,
                p_max: float) -> TransitionModel:
    matrix = build_transition_matrix(config.num_tasks, p_max, spec.seed)
    if spec.snr_mode == "fixed":
        schedule = ((0, spec.snr_value),)
    else:
        schedule = build_snr_schedule(spec.train_epochs, spec.seed)
    return TransitionModel(matrix=matrix, snr_schedule=schedule,
                           snr_change_period=300)


def algorithm_epochs(spec: ExperimentSpec, algorithm: str) -> int:
    weight = EPOCH_WEIGHTS.get(algorithm, 1.0)
    return max(1, round(spec.train_epochs * weight))


def run_point(spec: ExperimentSpec, value=None, keep_agents: dict | None = None
              ) -> list[list]:
    """All algorithms at one sweep value; returns CSV rows."""
    overrides = dict(spec.config_overrides)
    snr_value = spec.snr_value
    p_max = float(overrides.pop("p_max", 0.7))
    if spec.sweep_var is not None:
        if spec.sweep_var == "snr":
            snr_value = float(value)
        elif spec.sweep_var == "p_max":
            p_max = float(value)
        else:
            overrides[spec.sweep_var] = value
    point_spec = replace(spec, snr_value=snr_value)
    config = build_config(overrides, seed=spec.seed,
                          offset_fraction=spec.offset_fraction)
    model = build_model(config, point_spec, p_max)
    eval_snr = (spec.snr_value if spec.snr_mode == "fixed"
                else model.snr_at(spec.train_epochs - 1))
    if spec.sweep_var == "snr":
        eval_snr = snr_value

    rows = []
    for algo in spec.algorithms:
        if algo in SAC_ALGORITHMS:
            mask = restricted_action_space(algo)
            schedule = TrainSchedule(
                epochs=algorithm_epochs(spec, algo),
                steps_per_epoch=spec.steps_per_epoch,
                eval_every=spec.eval_every, eval_epochs=spec.eval_epochs)
            result = train(config, model, schedule, hyper=spec.hyper,
                           mask=mask, seed=spec.seed)
            if keep_agents is not None:
                keep_agents[(algo, value)] = (result.agent, config, model)
            summary = evaluate_agent(result.agent, config, model, eval_snr,
                                     spec.trace_length, seed=spec.seed + 1,
                                     mask=mask)
            rewards = [float(r[1]) for r in result.metrics]
            regimes = regime_starts(model, schedule.epochs)
            try:
                report = convergence_report(rewards, regimes)
                converged = report[-1]["convergence_epoch"]
            except ConfigError:
                converged = ""
        else:
            policy = HEURISTICS[algo]
            trace = sample_request_trace(model, spec.trace_length + 1,
                                         spec.seed + 1)
            summary = rollout_heuristic(policy, config, trace,
                                        lambda t: eval_snr)
            chunk = spec.steps_per_epoch
            rewards = [float(np.mean(summary["rewards"][i:i + chunk]))
                       for i in range(0, len(summary["rewards"]), chunk)
                       if len(summary["rewards"][i:i + chunk]) == chunk]
            try:
                report = convergence_report(rewards, [0])
                converged = report[-1]["convergence_epoch"]
            except ConfigError:
                converged = ""
        rows.append([
            algo,
            spec.sweep_var or "",
            "" if value is None else repr(float(value)),
            repr(summary["mean_bandwidth"]),
            repr(summary["mean_energy"]),
            repr(summary["mean_weighted_cost"]),
            converged,
        ])
    return rows


def run(spec: ExperimentSpec, csv_path=None, keep_agents: dict | None = None
        ) -> list[list]:
    """Execute the whole experiment; returns (and optionally writes) rows."""
    values = list(spec.sweep_values) if spec.sweep_var is not None else [None]
    rows = []
    for value in values:
        rows.extend(run_point(spec, value, keep_agents=keep_agents))
    if csv_path is not None:
        config_io.write_csv(csv_path, SWEEP_COLUMNS, rows)
    return rows


def regime_starts(model: TransitionModel, num_epochs: int) -> list[int]:
    starts = [e for e, _ in model.snr_schedule if e < num_epochs]
    return starts or [0]


def convergence_report(epoch_rewards, regime_starts=(0,), window: int = 10,
                       tolerance: float = 0.05) -> list[dict]:
    """Epochs-to-convergence per SNR regime.

    Convergence epoch (1-based, relative to the regime start) is the first
    epoch whose trailing moving mean stays within `tolerance` of the
    regime's final mean for the rest of the regime. Early epochs use the
    shorter available window.
    """
    rewards = [float(r) for r in epoch_rewards]
    n = len(rewards)
    starts = sorted(set(int(s) for s in regime_starts))
    if not starts or starts[0] != 0:
        starts = [0] + starts
    report = []
    for i, start in enumerate(starts):
        end = starts[i + 1] if i + 1 < len(starts) else n
        segment = rewards[start:end]
        if len(segment) < window:
            raise ConfigError(
                f"regime starting at epoch {start} has {len(segment)} epochs, "
                f"needs at least {window}")
        final_mean = float(np.mean(segment[-window:]))
        band = tolerance * max(abs(final_mean), 1e-12)
        moving = [float(np.mean(segment[max(0, e - window + 1):e + 1]))
                  for e in range(len(segment))]
        convergence = len(segment)
        for e in range(len(segment)):
            if all(abs(m - final_mean) <= band for m in moving[e:]):
                convergence = e + 1
                break
        report.append({"regime_start": start, "regime_end": end,
                       "final_mean": final_mean,
                       "convergence_epoch": convergence})
    return report


def read_metrics_csv(path) -> list[dict]:
    import csv

    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def emit_qualitative_trace(checkpoint_path, config: SystemConfig,
                           model: TransitionModel, steps: int,
                           hyper: SacHyper = SacHyper(), seed: int = 0,
                           snr: float | None = None) -> list[list]:
    """Replay a trained policy and log per-slot state/action/cost records."""
    agent, manifest = load_agent(checkpoint_path, hyper, config.discount)
    digest = config_io.config_digest(config, model)
    stored = manifest.get("config_digest")
    if stored is not None and stored != digest:
        raise ConfigError(
            f"checkpoint was trained on config {stored}, supplied config is "
            f"{digest}")
    mask = restricted_action_space(manifest.get("algorithm", "PTDFC"))
    collect: list = []
    use_snr = snr if snr is not None else model.snr_at(0)
    evaluate_agent(agent, config, model, use_snr, steps, seed=seed, mask=mask,
                   collect=collect)
    rows = []
    for t, state, action, costs in collect:
        rows.append([
            t, state.request, repr(float(use_snr)),
            "".join(str(b) for b in state.input_cached),
            "".join(str(b) for b in state.output_cached),
            action.reactive_cores,
        ] + list(action.push) + list(action.cache_delta_input)
            + list(action.cache_delta_output)
            + [repr(costs.bandwidth), repr(costs.energy), repr(costs.reward)])
    return rows


def qualitative_trace_columns(num_tasks: int) -> list[str]:
    cols = ["t", "request", "snr", "input_cached", "output_cached", "cores"]
    cols += [f"push_{k}" for k in range(1, num_tasks + 1)]
    cols += [f"dsi_{k}" for k in range(1, num_tasks + 1)]
    cols += [f"dso_{k}" for k in range(1, num_tasks + 1)]
    cols += ["bandwidth", "energy", "reward"]
    return cols


def output_dir(spec_dir: str | None = None) -> str:
    """Resolve the output directory; MECOPT_OUT overrides everything."""
    return os.environ.get("MECOPT_OUT") or spec_dir or "."
