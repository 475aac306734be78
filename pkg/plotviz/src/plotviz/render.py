"""Figure rendering: tradeoff scatters and cumulative trace panels.

Pure functions of their input files: read CSVs, write one image, return a
summary of what was drawn (handy for tests and scripting).  Rendering uses
the Agg backend so no display is required.
"""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .frames import load_sweep, load_trace


@dataclass(frozen=True)
class RenderSummary:
    n_series: int
    n_points: int
    labels: tuple[str, ...]


def plot_tradeoff(sweep_csv, out_path, title: str | None = None) -> RenderSummary:
    """Scatter mean communication cost against mean regret per threshold.

    One series per algorithm; each dot is one threshold setting, annotated
    with its value.
    """
    points = load_sweep(sweep_csv).aggregated_points()
    by_algo: dict[str, list[dict]] = {}
    for p in points:
        by_algo.setdefault(p["algorithm"], []).append(p)

    fig, ax = plt.subplots(figsize=(7.2, 4.8))
    labels = []
    for algo, pts in sorted(by_algo.items()):
        xs = [p["mean_c"] for p in pts]
        ys = [p["mean_r"] for p in pts]
        ax.scatter(xs, ys, label=algo, s=36)
        for p in pts:
            ax.annotate(
                p["label"], (p["mean_c"], p["mean_r"]),
                textcoords="offset points", xytext=(6, 4), fontsize=8,
            )
            labels.append(p["label"])
    ax.set_xlabel("communication cost $C_T$ (transfers)")
    ax.set_ylabel("cumulative regret / reward $R_T$")
    if title:
        ax.set_title(title)
    if by_algo:
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return RenderSummary(len(by_algo), len(points), tuple(labels))


def plot_traces(trace_csvs, out_path, title: str | None = None) -> RenderSummary:
    """Two stacked panels: cumulative regret and cumulative communication."""
    traces = [load_trace(path) for path in trace_csvs]
    fig, (ax_r, ax_c) = plt.subplots(2, 1, figsize=(7.2, 6.4), sharex=True)
    for tr in traces:
        ax_r.plot(tr.t, tr.cum_regret, label=tr.name)
        ax_c.plot(tr.t, tr.cum_comm, label=tr.name)
    ax_r.set_ylabel("cumulative regret / reward")
    ax_c.set_ylabel("cumulative communication")
    ax_c.set_xlabel("step $t$")
    for ax in (ax_r, ax_c):
        ax.grid(True, alpha=0.3)
        if traces:
            ax.legend()
    if title:
        ax_r.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return RenderSummary(len(traces), sum(len(tr.t) for tr in traces), tuple(t.name for t in traces))
