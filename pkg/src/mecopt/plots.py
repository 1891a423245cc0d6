"""Figure rendering for sweep and convergence reports (PNG files, no GUI)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

ALGO_STYLE = {
    "PTDFC": dict(color="tab:red", marker="o"),
    "DFC": dict(color="tab:blue", marker="s"),
    "DFNC": dict(color="tab:green", marker="^"),
    "MRU-LRU": dict(color="tab:orange", marker="v"),
    "MFU-LFU": dict(color="tab:purple", marker="d"),
}

SWEEP_LABELS = {
    "cache_capacity": "cache size C (bits)",
    "num_cores": "computing cores M",
    "num_tasks": "number of tasks F",
    "p_max": "maximum transition probability",
    "core_frequency": "core frequency f_D (cycles/s)",
    "input_bits": "input size (bits)",
    "output_bits": "output size (bits)",
    "slot_length": "slot length tau (s)",
    "cost_weight": "cost weight lambda",
    "snr": "channel SNR (linear)",
}


def plot_sweep(rows, out_path, sweep_var: str | None = None) -> str:
    """Two panels: mean transmission and computation cost vs sweep value."""
    series: dict[str, list] = {}
    var = sweep_var
    for row in rows:
        algo, row_var, value, mean_b, mean_e = row[0], row[1], row[2], row[3], row[4]
        var = var or (row_var or None)
        series.setdefault(algo, []).append(
            (float(value) if value != "" else 0.0, float(mean_b), float(mean_e)))
    fig, (ax_b, ax_e) = plt.subplots(1, 2, figsize=(9, 3.4))
    for algo, points in series.items():
        points.sort()
        xs = [p[0] for p in points]
        style = ALGO_STYLE.get(algo, {})
        ax_b.plot(xs, [p[1] for p in points], label=algo, **style)
        ax_e.plot(xs, [p[2] for p in points], label=algo, **style)
    xlabel = SWEEP_LABELS.get(var or "", var or "")
    ax_b.set_xlabel(xlabel)
    ax_b.set_ylabel("mean transmission cost (Hz)")
    ax_e.set_xlabel(xlabel)
    ax_e.set_ylabel("mean computation cost (J)")
    ax_b.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)


def plot_convergence(metric_series: dict[str, list[float]], out_path,
                     regime_starts=() ) -> str:
    """Reward-vs-epoch curves, with vertical markers at regime changes."""
    fig, ax = plt.subplots(figsize=(7, 3.6))
    for label, rewards in metric_series.items():
        style = ALGO_STYLE.get(label, {})
        ax.plot(range(1, len(rewards) + 1), rewards, label=label,
                linewidth=1.2, color=style.get("color"))
    for start in regime_starts:
        if start > 0:
            ax.axvline(start, color="gray", linestyle=":", linewidth=0.8)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean reward per step")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return str(out_path)
