"""Command-line interface: train, sweep, oracle, trace, report.

Exit codes: 0 success, 1 configuration error, 2 runtime error. The output
directory can be forced globally with the MECOPT_OUT environment variable.
"""

from __future__ import annotations

import os
import sys

import click

from . import config_io, harness
from .baselines import ALGORITHMS, SAC_ALGORITHMS, restricted_action_space
from .env import ConfigError, default_config, default_transition_model
from .harness import ExperimentSpec, build_config, build_model, output_dir
from .oracle import enumerate_mdp, policy_rows, value_iteration
from .sac import SacHyper, TrainSchedule, save_agent, train


@click.group()
def cli():
    """Joint computing/pushing/caching experiments for a single-user edge system."""


def _load_setup(config_path, spec: ExperimentSpec, p_max: float):
    if config_path:
        config, model = config_io.read_config_file(config_path)
        if model is None:
            model = build_model(config, spec, p_max)
        return config, model
    config = build_config(spec.config_overrides, seed=spec.seed,
                          offset_fraction=spec.offset_fraction)
    return config, build_model(config, spec, p_max)


def _hyper_options(fn):
    fn = click.option("--hidden", default=256, show_default=True)(fn)
    fn = click.option("--lr", default=1e-4, show_default=True)(fn)
    fn = click.option("--alpha-lr", default=None, type=float,
                      help="temperature step size (default: --lr)")(fn)
    fn = click.option("--batch-size", default=256, show_default=True)(fn)
    fn = click.option("--optimizer", default="adam",
                      type=click.Choice(["adam", "sgd"]), show_default=True)(fn)
    return fn


@cli.command("train")
@click.option("--algorithm", default="PTDFC",
              type=click.Choice(list(SAC_ALGORITHMS)), show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="key-value config file (system + optional model)")
@click.option("--epochs", default=40, show_default=True)
@click.option("--steps-per-epoch", default=1000, show_default=True)
@click.option("--eval-every", default=10, show_default=True)
@click.option("--eval-epochs", default=2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--snr", default=1.0, show_default=True,
              help="fixed linear SNR (ignored with --snr-mode dynamic)")
@click.option("--snr-mode", default="fixed",
              type=click.Choice(["fixed", "dynamic"]), show_default=True)
@click.option("--p-max", default=0.7, show_default=True)
@click.option("--out", default=None, help="output directory")
@click.option("--dump-actions", is_flag=True,
              help="also write pre/post-correction action pairs as CSV")
@_hyper_options
def train_cmd(algorithm, config_path, epochs, steps_per_epoch, eval_every,
              eval_epochs, seed, snr, snr_mode, p_max, out, dump_actions,
              hidden, lr, alpha_lr, batch_size, optimizer):
    """Train one SAC variant; writes metrics CSV and a checkpoint."""
    from .sac import METRICS_COLUMNS

    hyper = SacHyper(hidden=hidden, lr=lr, alpha_lr=alpha_lr,
                     batch_size=batch_size, optimizer=optimizer)
    spec = ExperimentSpec(algorithms=(algorithm,), seed=seed,
                          snr_mode=snr_mode, snr_value=snr,
                          train_epochs=epochs, hyper=hyper)
    config, model = _load_setup(config_path, spec, p_max)
    out = output_dir(out)
    os.makedirs(out, exist_ok=True)

    mask = restricted_action_space(algorithm)
    schedule = TrainSchedule(epochs=epochs, steps_per_epoch=steps_per_epoch,
                             eval_every=eval_every, eval_epochs=eval_epochs)
    dump = [] if dump_actions else None
    result = train(config, model, schedule, hyper=hyper, mask=mask, seed=seed,
                   action_dump=dump,
                   divergence_checkpoint=os.path.join(out, "diverged.ckpt"))

    metrics_path = os.path.join(out, f"metrics_{algorithm}.csv")
    config_io.write_csv(metrics_path, METRICS_COLUMNS, result.metrics)
    ckpt_path = os.path.join(out, f"{algorithm}.ckpt")
    manifest = {"algorithm": algorithm, "epoch": epochs,
                "config_digest": config_io.config_digest(config, model),
                "seed": seed}
    save_agent(ckpt_path, result.agent, manifest)
    config_io.write_config_file(os.path.join(out, "config.kv"), config, model)
    if dump is not None:
        _write_action_dump(os.path.join(out, "actions.csv"), dump,
                           config.num_tasks)
    click.echo(f"metrics: {metrics_path}")
    click.echo(f"checkpoint: {ckpt_path}")


def _write_action_dump(path, dump, num_tasks):
    header = ["t", "request"]
    for stage in ("raw", "fixed"):
        header += [f"{stage}_cores"]
        header += [f"{stage}_push_{k}" for k in range(1, num_tasks + 1)]
        header += [f"{stage}_dsi_{k}" for k in range(1, num_tasks + 1)]
        header += [f"{stage}_dso_{k}" for k in range(1, num_tasks + 1)]
    rows = []
    for t, state, quantized, corrected in dump:
        row = [t, state.request]
        for action in (quantized, corrected):
            row += [action.reactive_cores]
            row += list(action.push)
            row += list(action.cache_delta_input)
            row += list(action.cache_delta_output)
        rows.append(row)
    config_io.write_csv(path, header, rows)


@cli.command("sweep")
@click.option("--var", "sweep_var", required=True,
              type=click.Choice(sorted(harness.SWEEP_RANGES)))
@click.option("--values", required=True,
              help="comma-separated sweep values, e.g. 10000,20000,40000")
@click.option("--algorithms", default="PTDFC,DFC,DFNC,MRU-LRU,MFU-LFU",
              show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--trace-length", default=200000, show_default=True)
@click.option("--epochs", default=40, show_default=True,
              help="PTDFC training epochs (ablations scale down)")
@click.option("--seed", default=0, show_default=True)
@click.option("--snr", default=1.0, show_default=True)
@click.option("--out", default=None)
@_hyper_options
def sweep_cmd(sweep_var, values, algorithms, config_path, trace_length,
              epochs, seed, snr, out, hidden, lr, alpha_lr, batch_size,
              optimizer):
    """Sweep one variable across algorithms; writes CSV and figures."""
    algos = tuple(a.strip() for a in algorithms.split(",") if a.strip())
    try:
        value_list = tuple(float(v) for v in values.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad sweep values {values!r}: {exc}") from exc
    if sweep_var in ("cache_capacity", "num_cores", "num_tasks",
                     "input_bits", "output_bits"):
        value_list = tuple(int(v) for v in value_list)
    overrides = {}
    if config_path:
        config, _ = config_io.read_config_file(config_path)
        overrides = {
            "num_tasks": config.num_tasks,
            "cache_capacity": config.cache_capacity,
            "num_cores": config.num_cores,
            "core_frequency": config.core_frequency,
            "slot_length": config.slot_length,
            "cost_weight": config.cost_weight,
        }
    hyper = SacHyper(hidden=hidden, lr=lr, alpha_lr=alpha_lr,
                     batch_size=batch_size, optimizer=optimizer)
    spec = ExperimentSpec(algorithms=algos, config_overrides=overrides,
                          sweep_var=sweep_var, sweep_values=value_list,
                          trace_length=trace_length, seed=seed,
                          snr_value=snr, train_epochs=epochs, hyper=hyper)
    from . import plots

    out = output_dir(out)
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, f"sweep_{sweep_var}.csv")
    rows = harness.run(spec, csv_path=csv_path)
    fig_path = plots.plot_sweep(rows, os.path.join(out, f"sweep_{sweep_var}.png"),
                                sweep_var)
    click.echo(f"rows: {csv_path}")
    click.echo(f"figure: {fig_path}")


@cli.command("oracle")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--num-tasks", default=2, show_default=True)
@click.option("--snr", default=1.0, show_default=True)
@click.option("--gamma", default=0.9, show_default=True)
@click.option("--p-max", default=0.7, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--tolerance", default=1e-9, show_default=True)
@click.option("--out", default=None)
def oracle_cmd(config_path, num_tasks, snr, gamma, p_max, seed, tolerance, out):
    """Solve a tiny instance exactly; writes the value/policy CSV."""
    if config_path:
        config, model = config_io.read_config_file(config_path)
        if model is None:
            spec = ExperimentSpec(seed=seed)
            model = build_model(config, spec, p_max)
    else:
        config = tiny_config(num_tasks)
        spec = ExperimentSpec(seed=seed)
        model = build_model(config, spec, p_max)
    out = output_dir(out)
    os.makedirs(out, exist_ok=True)
    mdp = enumerate_mdp(config, model, snr)
    values, policy, phi_star = value_iteration(mdp, gamma, tolerance)
    path = os.path.join(out, "oracle_policy.csv")
    config_io.write_csv(path, ["request", "input_cached", "output_cached",
                               "value", "cores", "push", "dsi", "dso"],
                        policy_rows(mdp, values, policy))
    click.echo(f"states: {mdp.num_states}")
    click.echo(f"optimal discounted cost from empty cache: {phi_star!r}")
    click.echo(f"policy: {path}")


def tiny_config(num_tasks: int = 2):
    """Small instance that stays inside the enumeration budget."""
    from .env import SystemConfig, Task

    tasks = tuple(Task(input_bits=8000, output_bits=12000,
                       cycles_per_bit=800.0) for _ in range(num_tasks))
    return SystemConfig(tasks=tasks, cache_capacity=8000, num_cores=2,
                        core_frequency=1.7e8, slot_length=0.04,
                        switched_capacitance=1e-19, cost_weight=1.0,
                        reward_scale=1e-6, discount=0.9)


@cli.command("trace")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True))
@click.option("--steps", default=4, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None)
def trace_cmd(checkpoint, config_path, steps, seed, out):
    """Replay a checkpoint and log request/cache/action/reward per slot."""
    config, model = config_io.read_config_file(config_path)
    if model is None:
        raise ConfigError("trace requires a config file with a transition model")
    out = output_dir(out)
    os.makedirs(out, exist_ok=True)
    rows = harness.emit_qualitative_trace(checkpoint, config, model, steps,
                                          seed=seed)
    path = os.path.join(out, "qualitative_trace.csv")
    config_io.write_csv(path, harness.qualitative_trace_columns(config.num_tasks),
                        rows)
    click.echo(f"trace: {path}")


@cli.command("report")
@click.option("--metrics", "metrics_paths", multiple=True, required=True,
              type=click.Path(exists=True),
              help="metrics CSV from train (repeatable)")
@click.option("--window", default=10, show_default=True)
@click.option("--tolerance", default=0.05, show_default=True)
@click.option("--regime-starts", default="0", show_default=True,
              help="comma-separated regime start epochs")
@click.option("--out", default=None)
def report_cmd(metrics_paths, window, tolerance, regime_starts, out):
    """Convergence report plus a reward-vs-epoch figure."""
    from . import plots

    out = output_dir(out)
    os.makedirs(out, exist_ok=True)
    starts = [int(v) for v in regime_starts.split(",") if v.strip()]
    series = {}
    report_rows = []
    for path in metrics_paths:
        rows = harness.read_metrics_csv(path)
        label = os.path.splitext(os.path.basename(path))[0].replace("metrics_", "")
        rewards = [float(r["train_reward"]) for r in rows]
        series[label] = rewards
        for entry in harness.convergence_report(rewards, starts, window,
                                                tolerance):
            report_rows.append([label, entry["regime_start"],
                                entry["regime_end"],
                                repr(entry["final_mean"]),
                                entry["convergence_epoch"]])
            click.echo(f"{label}: regime {entry['regime_start']}.."
                       f"{entry['regime_end']} converged after "
                       f"{entry['convergence_epoch']} epochs")
    csv_path = os.path.join(out, "convergence_report.csv")
    config_io.write_csv(csv_path, ["series", "regime_start", "regime_end",
                                   "final_mean", "convergence_epoch"],
                        report_rows)
    fig_path = plots.plot_convergence(series,
                                      os.path.join(out, "convergence.png"),
                                      starts)
    click.echo(f"report: {csv_path}")
    click.echo(f"figure: {fig_path}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(1)
    except click.UsageError as exc:
        click.echo(f"configuration error: {exc.format_message()}", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(2)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        click.echo(f"runtime error: {exc}", err=True)
        sys.exit(2)
    sys.exit(0)


if __name__ == "__main__":
    main()
