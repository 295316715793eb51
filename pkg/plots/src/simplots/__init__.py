"""Static figures from simstack experiment CSVs: ascent traces per
spacing case and sum rate against the layer count."""

from .render import FigureSpec, PlotError, plot_convergence, plot_sweep, read_records

__version__ = "0.1.0"

__all__ = ["FigureSpec", "PlotError", "plot_convergence", "plot_sweep",
           "read_records", "__version__"]
