"""Regret-curve rendering from the experiment harness's aggregate CSV.

The input contract is the aggregate CSV schema
(algo,t,mean_R,std_R,mean_R_over_sqrt_t); this package parses it directly and
never imports the simulator. Each figure ships with a JSON data sidecar
holding the exact plotted arrays, so correctness is testable without image
diffing.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

REQUIRED_COLUMNS = ("algo", "t", "mean_R", "std_R", "mean_R_over_sqrt_t")
Y_CHOICES = ("r", "r_over_sqrt_t")

# fixed styling so repeated renders are identical
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
_FIGSIZE = (7.0, 4.5)
_DPI = 144


class SchemaError(ValueError):
    """Aggregate CSV does not match the expected schema."""


@dataclass
class PlotSpec:
    """What to render: which CSV, which algorithms, which y-axis."""

    csv_path: str | Path
    out_path: str | Path
    algorithms: list[str] | None = None  # None -> every algorithm in the CSV
    band: bool = True
    y_axis: str = "r_over_sqrt_t"

    def __post_init__(self) -> None:
        if self.y_axis not in Y_CHOICES:
            raise SchemaError(f"y_axis must be one of {Y_CHOICES}, got {self.y_axis!r}")


def read_aggregate_csv(path: str | Path) -> dict[str, dict[str, np.ndarray]]:
    """Parse the aggregate CSV into per-algorithm column arrays."""
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln]
    if not lines:
        raise SchemaError(f"{path}: empty file")
    header = lines[0].split(",")
    for column in REQUIRED_COLUMNS:
        if column not in header:
            raise SchemaError(f"{path}: missing column {column!r}")
    idx = {name: header.index(name) for name in REQUIRED_COLUMNS}
    per_algo: dict[str, dict[str, list]] = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise SchemaError(f"{path}: malformed row {ln!r}")
        algo = parts[idx["algo"]]
        rows = per_algo.setdefault(algo, {"t": [], "mean_R": [], "std_R": [], "mean_R_over_sqrt_t": []})
        rows["t"].append(int(parts[idx["t"]]))
        for column in ("mean_R", "std_R", "mean_R_over_sqrt_t"):
            rows[column].append(float(parts[idx[column]]))
    return {
        algo: {name: np.asarray(values) for name, values in rows.items()}
        for algo, rows in per_algo.items()
    }


def plotted_arrays(spec: PlotSpec) -> dict[str, dict[str, list[float]]]:
    """The exact arrays a render of `spec` draws, keyed by algorithm."""
    data = read_aggregate_csv(spec.csv_path)
    algos = spec.algorithms if spec.algorithms is not None else sorted(data)
    missing = [a for a in algos if a not in data]
    if missing:
        raise SchemaError(f"algorithms not present in {spec.csv_path}: {', '.join(missing)}")
    out: dict[str, dict[str, list[float]]] = {}
    for algo in algos:
        cols = data[algo]
        t = cols["t"].astype(float)
        if spec.y_axis == "r":
            y = cols["mean_R"]
            band = cols["std_R"]
        else:
            y = cols["mean_R_over_sqrt_t"]
            band = cols["std_R"] / np.sqrt(t)
        entry = {"t": cols["t"].tolist(), "y": y.tolist()}
        entry["band"] = band.tolist() if spec.band else None
        out[algo] = entry
    return out


def render_regret_plot(spec: PlotSpec) -> tuple[Path, Path]:
    """Write the figure and its data sidecar; returns both paths."""
    arrays = plotted_arrays(spec)
    out_path = Path(spec.out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    fig, ax = plt.subplots(figsize=_FIGSIZE, dpi=_DPI)
    for i, (algo, entry) in enumerate(arrays.items()):
        color = _COLORS[i % len(_COLORS)]
        t = np.asarray(entry["t"], dtype=float)
        y = np.asarray(entry["y"], dtype=float)
        ax.plot(t, y, label=algo, color=color, linewidth=1.6)
        if entry["band"] is not None:
            band = np.asarray(entry["band"], dtype=float)
            ax.fill_between(t, y - band, y + band, color=color, alpha=0.18, linewidth=0)
    ax.set_xlabel("round t")
    ax.set_ylabel("regret / sqrt(t)" if spec.y_axis == "r_over_sqrt_t" else "cumulative regret")
    ax.legend(loc="best", frameon=False)
    ax.grid(True, alpha=0.25)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)

    sidecar_path = out_path.with_suffix(out_path.suffix + ".data.json")
    # keys stay in request order (insertion order is deterministic)
    sidecar = {"y_axis": spec.y_axis, "band": spec.band, "source": str(spec.csv_path), "algorithms": arrays}
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return out_path, sidecar_path
