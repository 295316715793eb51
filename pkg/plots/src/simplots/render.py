"""CSV reading and figure rendering.

The input files are the experiment runner's CSV output: comment lines
starting with ``#``, one header row, then data rows with fixed columns.
Aggregation across Monte-Carlo realizations (mean, standard error) happens
here so the raw per-realization data stays in the CSV.

Rendering is deterministic for a given matplotlib version: fixed figure
geometry, the Agg backend and no timestamps in the image metadata, so a
fixture CSV maps to a stable image checksum.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["FigureSpec", "PlotError", "read_records", "plot_convergence", "plot_sweep"]


class PlotError(Exception):
    """Unusable input: missing file, missing columns or no data rows."""


@dataclass(frozen=True)
class FigureSpec:
    """What to render: input CSVs, figure kind (``convergence`` or
    ``sweep``), output image path and axis labels."""

    csv_paths: tuple
    kind: str
    output: Path
    x_label: str = ""
    y_label: str = "sum rate (bits/s/Hz)"
    title: str = ""
    dpi: int = 120
    size: tuple = (7.2, 4.5)

    def __post_init__(self):
        if self.kind not in ("convergence", "sweep"):
            raise ValueError("kind must be 'convergence' or 'sweep'")
        object.__setattr__(self, "csv_paths", tuple(Path(p) for p in self.csv_paths))
        object.__setattr__(self, "output", Path(self.output))


REQUIRED = {
    "convergence": ("experiment", "mode", "realization", "iteration", "sum_rate_bps_hz"),
    "sweep": ("mode", "L", "realization", "sum_rate_bps_hz"),
}


def read_records(path, required):
    """Data rows of one runner CSV as a list of dicts; ``#`` comment lines
    are skipped and the named columns must exist."""
    path = Path(path)
    if not path.exists():
        raise PlotError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        data_lines = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(data_lines)
    header = reader.fieldnames or []
    missing = [column for column in required if column not in header]
    if missing:
        raise PlotError(f"{path}: missing columns {missing} (header: {header})")
    rows = list(reader)
    if not rows:
        raise PlotError(f"{path}: no data rows")
    return rows


def _new_figure(spec: FigureSpec):
    fig, ax = plt.subplots(figsize=spec.size, dpi=spec.dpi)
    ax.set_xlabel(spec.x_label)
    ax.set_ylabel(spec.y_label)
    if spec.title:
        ax.set_title(spec.title)
    ax.grid(True, alpha=0.3)
    return fig, ax


def _save(fig, ax, spec: FigureSpec):
    ax.legend(fontsize=8)
    fig.tight_layout()
    spec.output.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(spec.output, format="png")
    plt.close(fig)
    return spec.output


def plot_convergence(spec: FigureSpec):
    """One curve per (experiment, mode): the per-iteration sum rate averaged
    across realizations. Legend labels come straight from the CSV fields."""
    series = defaultdict(lambda: defaultdict(list))
    for path in spec.csv_paths:
        for row in read_records(path, REQUIRED["convergence"]):
            key = (row["experiment"], row["mode"])
            series[key][int(row["iteration"])].append(float(row["sum_rate_bps_hz"]))
    fig, ax = _new_figure(spec)
    ax.set_xlabel(spec.x_label or "iteration")
    for (experiment, mode) in sorted(series):
        per_iteration = series[(experiment, mode)]
        iterations = sorted(per_iteration)
        means = [float(np.mean(per_iteration[i])) for i in iterations]
        marker = "o" if len(iterations) == 1 else None
        ax.plot(iterations, means, marker=marker, label=f"{experiment} {mode}")
    return _save(fig, ax, spec)


def plot_sweep(spec: FigureSpec):
    """Mean sum rate against the layer count, one series per mode, with
    standard-error bars across realizations."""
    groups = defaultdict(list)
    for path in spec.csv_paths:
        for row in read_records(path, REQUIRED["sweep"]):
            groups[(row["mode"], int(row["L"]))].append(float(row["sum_rate_bps_hz"]))
    fig, ax = _new_figure(spec)
    ax.set_xlabel(spec.x_label or "layer count L")
    modes = sorted({mode for mode, _ in groups})
    for mode in modes:
        layer_counts = sorted(layer for m, layer in groups if m == mode)
        means = np.array([np.mean(groups[(mode, layer)]) for layer in layer_counts])
        errors = np.array([
            np.std(groups[(mode, layer)], ddof=1) / np.sqrt(len(groups[(mode, layer)]))
            if len(groups[(mode, layer)]) > 1 else 0.0
            for layer in layer_counts])
        ax.errorbar(layer_counts, means, yerr=errors, marker="o", capsize=3,
                    label=mode)
    ax.set_xticks(sorted({layer for _, layer in groups}))
    return _save(fig, ax, spec)
