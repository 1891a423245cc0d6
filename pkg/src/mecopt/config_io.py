"""Flat key-value serialization for configs and models, plus trace CSV.

Config format: text, one `key = value` per line, `#` comments allowed.
Documented keys:

  system config     F, C, M, f_D, tau, mu, lambda, kappa, gamma,
                    task.<k>.input_bits, task.<k>.output_bits,
                    task.<k>.cycles_per_bit          (k in 1..F)
  transition model  q.<i>.<j>  (row-stochastic entries, i,j in 1..F),
                    snr.<epoch> (schedule value starting at that epoch),
                    snr_change_period

Trace CSV columns (F tasks):
  t, request, snr, cores, push_1..push_F, dsi_1..dsi_F, dso_1..dso_F,
  reactive_bw, push_bw, reactive_energy, bandwidth, energy,
  weighted_cost, reward
"""

from __future__ import annotations

import csv
import hashlib
import io

from .env import (ConfigError, CostBreakdown, SystemAction, SystemConfig,
                  SystemState, Task, TransitionModel)


def parse_kv(text: str) -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value.strip()
    return pairs


def format_kv(pairs: dict[str, str]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in pairs.items())


def config_to_kv(config: SystemConfig) -> dict[str, str]:
    pairs = {
        "F": str(config.num_tasks),
        "C": str(config.cache_capacity),
        "M": str(config.num_cores),
        "f_D": repr(config.core_frequency),
        "tau": repr(config.slot_length),
        "mu": repr(config.switched_capacitance),
        "lambda": repr(config.cost_weight),
        "kappa": repr(config.reward_scale),
        "gamma": repr(config.discount),
    }
    for k, task in enumerate(config.tasks, start=1):
        pairs[f"task.{k}.input_bits"] = str(task.input_bits)
        pairs[f"task.{k}.output_bits"] = str(task.output_bits)
        pairs[f"task.{k}.cycles_per_bit"] = repr(task.cycles_per_bit)
    return pairs


def config_from_kv(pairs: dict[str, str]) -> SystemConfig:
    try:
        f = int(pairs["F"])
        tasks = tuple(
            Task(input_bits=int(pairs[f"task.{k}.input_bits"]),
                 output_bits=int(pairs[f"task.{k}.output_bits"]),
                 cycles_per_bit=float(pairs[f"task.{k}.cycles_per_bit"]))
            for k in range(1, f + 1))
        return SystemConfig(
            tasks=tasks,
            cache_capacity=int(pairs["C"]),
            num_cores=int(pairs["M"]),
            core_frequency=float(pairs["f_D"]),
            slot_length=float(pairs["tau"]),
            switched_capacitance=float(pairs["mu"]),
            cost_weight=float(pairs["lambda"]),
            reward_scale=float(pairs["kappa"]),
            discount=float(pairs["gamma"]),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc


def model_to_kv(model: TransitionModel) -> dict[str, str]:
    pairs: dict[str, str] = {}
    n = model.num_tasks
    for i in range(n):
        for j in range(n):
            pairs[f"q.{i + 1}.{j + 1}"] = repr(float(model.matrix[i, j]))
    for epoch, snr in model.snr_schedule:
        pairs[f"snr.{epoch}"] = repr(snr)
    pairs["snr_change_period"] = str(model.snr_change_period)
    return pairs


def model_from_kv(pairs: dict[str, str]) -> TransitionModel:
    import numpy as np

    entries = {}
    for key, value in pairs.items():
        if key.startswith("q."):
            _, i, j = key.split(".")
            entries[(int(i) - 1, int(j) - 1)] = float(value)
    if not entries:
        raise ConfigError("no transition-matrix entries (q.<i>.<j>) found")
    n = max(max(i, j) for i, j in entries) + 1
    matrix = np.zeros((n, n))
    for (i, j), value in entries.items():
        matrix[i, j] = value
    schedule = sorted(
        (int(key.split(".")[1]), float(value))
        for key, value in pairs.items() if key.startswith("snr."))
    if not schedule:
        schedule = [(0, 1.0)]
    period = int(pairs.get("snr_change_period", "300"))
    return TransitionModel(matrix=matrix, snr_schedule=tuple(schedule),
                           snr_change_period=period)


def write_config_file(path, config: SystemConfig,
                      model: TransitionModel | None = None) -> None:
    pairs = config_to_kv(config)
    if model is not None:
        pairs.update(model_to_kv(model))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_kv(pairs))


def read_config_file(path) -> tuple[SystemConfig, TransitionModel | None]:
    with open(path, encoding="utf-8") as fh:
        pairs = parse_kv(fh.read())
    config = config_from_kv(pairs)
    model = None
    if any(k.startswith("q.") for k in pairs):
        model = model_from_kv(pairs)
        if model.num_tasks != config.num_tasks:
            raise ConfigError("transition matrix size does not match F")
    return config, model


def config_digest(config: SystemConfig, model: TransitionModel | None = None) -> str:
    pairs = config_to_kv(config)
    if model is not None:
        pairs.update(model_to_kv(model))
    blob = format_kv(dict(sorted(pairs.items())))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def trace_columns(num_tasks: int) -> list[str]:
    cols = ["t", "request", "snr", "cores"]
    cols += [f"push_{k}" for k in range(1, num_tasks + 1)]
    cols += [f"dsi_{k}" for k in range(1, num_tasks + 1)]
    cols += [f"dso_{k}" for k in range(1, num_tasks + 1)]
    cols += ["reactive_bw", "push_bw", "reactive_energy", "bandwidth",
             "energy", "weighted_cost", "reward"]
    return cols


def trace_row(t: int, state: SystemState, snr: float, action: SystemAction,
              costs: CostBreakdown) -> list:
    row = [t, state.request, repr(float(snr)), action.reactive_cores]
    row += list(action.push)
    row += list(action.cache_delta_input)
    row += list(action.cache_delta_output)
    row += [repr(float(v)) for v in (
        costs.reactive_bandwidth, costs.push_bandwidth, costs.reactive_energy,
        costs.bandwidth, costs.energy, costs.weighted_cost, costs.reward)]
    return row


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def format_csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()
