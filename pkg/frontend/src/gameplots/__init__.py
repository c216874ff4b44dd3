"""Figure generation for local-game planning experiment outputs."""

from .figures import (FigureSpec, SchemaError, extract_series,
                      plot_metric_vs_p, plot_trajectories, read_summary,
                      read_trajectories, trailing_trace)

__all__ = [
    "FigureSpec",
    "SchemaError",
    "extract_series",
    "plot_metric_vs_p",
    "plot_trajectories",
    "read_summary",
    "read_trajectories",
    "trailing_trace",
]
