"""Plots for federated-bandit sweep and trace CSVs."""

from .frames import MissingColumnError, SweepFrame, TraceFrame, load_sweep, load_trace
from .render import RenderSummary, plot_tradeoff, plot_traces

__all__ = [
    "MissingColumnError",
    "RenderSummary",
    "SweepFrame",
    "TraceFrame",
    "load_sweep",
    "load_trace",
    "plot_tradeoff",
    "plot_traces",
]

__version__ = "0.1.0"
