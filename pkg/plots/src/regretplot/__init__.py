from .plotting import PlotSpec, SchemaError, plotted_arrays, read_aggregate_csv, render_regret_plot

__version__ = "0.1.0"

__all__ = ["PlotSpec", "SchemaError", "plotted_arrays", "read_aggregate_csv", "render_regret_plot"]
