"""Residual-decay and progress figures over solver run CSVs.

The decay figure shows running-average residual columns on log-log axes
with a least-squares power-law fit and a reference curve proportional to
``t^(-1/4)`` anchored at the first retained point.  The progress figure
shows objective and feasibility against the cumulative stochastic gradient
count.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

#: Column order of the solver's run CSVs; inputs must match it exactly.
CSV_COLUMNS = (
    "t", "grad_evals", "objective", "feasibility", "lambda_norm",
    "r_kkt_sq", "r_cons", "r_comp_abs", "inner_iters", "subproblem_residual",
)


class SchemaError(ValueError):
    """Input CSV does not carry the expected columns."""


@dataclass
class FigureSpec:
    """What to draw: input CSVs, the x column, the y columns, axis scaling,
    the reference exponent and where to write the image."""

    csv_paths: Sequence[Path]
    out_path: Path
    x_column: str = "t"
    y_columns: Sequence[str] = ("r_kkt_sq",)
    loglog: bool = True
    reference_exponent: float = -0.25
    title: Optional[str] = None

    def __post_init__(self):
        for name in [self.x_column, *self.y_columns]:
            if name not in CSV_COLUMNS:
                raise SchemaError(
                    f"column {name!r} is not in the run CSV schema; "
                    f"available columns: {list(CSV_COLUMNS)}"
                )


@dataclass
class DecayResult:
    """Numbers behind a rendered decay figure, one entry per curve."""

    out_path: Path
    slopes: dict = field(default_factory=dict)
    intercepts: dict = field(default_factory=dict)
    legend_labels: list = field(default_factory=list)
    series: dict = field(default_factory=dict)


def read_series(path, x_column: str, y_column: str) -> tuple[np.ndarray, np.ndarray]:
    """(x, y) pairs of one column, skipping rows where the cell is empty."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise SchemaError(
                f"{path} does not match the run CSV schema; header is "
                f"{reader.fieldnames}, expected {list(CSV_COLUMNS)}"
            )
        xs, ys = [], []
        for row in reader:
            if row[y_column] != "" and row[x_column] != "":
                xs.append(float(row[x_column]))
                ys.append(float(row[y_column]))
    return np.asarray(xs), np.asarray(ys)


def power_law_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares line through (log x, log y); positive values only."""
    keep = (x > 0) & (y > 0)
    if int(np.sum(keep)) < 2:
        raise ValueError("power-law fit needs at least two positive points")
    slope, intercept = np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)
    return float(slope), float(intercept)


def _curve_label(y_column: str, path: Path, multi_file: bool) -> str:
    return f"{y_column} ({path.name})" if multi_file else y_column


def render_decay_figure(spec: FigureSpec) -> DecayResult:
    """Render the decay figure and return the fitted slopes and labels."""
    result = DecayResult(out_path=Path(spec.out_path))
    paths = [Path(p) for p in spec.csv_paths]
    multi = len(paths) > 1
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for path in paths:
        for column in spec.y_columns:
            x, y = read_series(path, spec.x_column, column)
            if x.size == 0:
                raise ValueError(f"{path} has no usable {column} values")
            key = _curve_label(column, path, multi)
            result.series[key] = (x.copy(), y.copy())
            ax.plot(x, y, marker="o", markersize=2.5, linewidth=1.0, label=key)
            slope, intercept = power_law_fit(x, y)
            result.slopes[key] = slope
            result.intercepts[key] = intercept
            fit_label = f"fit {key}: slope {slope:.8f}"
            ax.plot(x, np.exp(intercept) * x**slope, linestyle="--", linewidth=1.0,
                    label=fit_label)
    # reference curve anchored at the first retained point of the first curve
    first_key = next(iter(result.series))
    x0s, y0s = result.series[first_key]
    ref = y0s[0] * (x0s / x0s[0]) ** spec.reference_exponent
    ax.plot(x0s, ref, linestyle=":", color="k", linewidth=1.2,
            label=f"reference t^{spec.reference_exponent:g}")
    if spec.loglog:
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel(spec.x_column)
    ax.set_ylabel("running average")
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    result.legend_labels = [t.get_text() for t in ax.get_legend().get_texts()]
    fig.tight_layout()
    result.out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(result.out_path, dpi=150)
    plt.close(fig)
    return result


def render_progress_figure(
    csv_paths: Sequence[Path],
    out_path: Path,
    x_column: str = "grad_evals",
    columns: Sequence[str] = ("objective", "feasibility"),
    logx: bool = True,
) -> Path:
    """Objective / feasibility panels against cumulative stochastic
    gradients, one panel per column, one curve per CSV."""
    for name in [x_column, *columns]:
        if name not in CSV_COLUMNS:
            raise SchemaError(
                f"column {name!r} is not in the run CSV schema; "
                f"available columns: {list(CSV_COLUMNS)}"
            )
    paths = [Path(p) for p in csv_paths]
    fig, axes = plt.subplots(1, len(columns), figsize=(5.2 * len(columns), 4.0))
    if len(columns) == 1:
        axes = [axes]
    for ax, column in zip(axes, columns):
        for path in paths:
            x, y = read_series(path, x_column, column)
            label = path.name if len(paths) > 1 else column
            ax.plot(x, y, linewidth=1.2, label=label)
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(x_column)
        ax.set_ylabel(column)
        ax.grid(True, which="both", alpha=0.3)
        if len(paths) > 1:
            ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
