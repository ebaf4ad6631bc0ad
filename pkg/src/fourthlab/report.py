"""CSV and SVG output with deterministic formatting."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.15e}"
    if v is None:
        return ""
    return str(v)


def config_line(config: Mapping[str, object]) -> str:
    return "# config: " + " ".join(f"{k}={config[k]}" for k in sorted(config))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence], config: Mapping[str, object]) -> Path:
    """Comment line echoing ``config``, a header row, then rows with 16 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(config_line(config) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "fourthlab"
    matplotlib.rcParams["svg.fonttype"] = "none"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def heatmap_svg(path, xs, ys, values, title: str, xlabel: str, ylabel: str, invalid=None) -> Path:
    """Cell map of ``values[iy, ix]``; NaN cells are blank, ``invalid`` cells are hatched."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 5))
    mesh = ax.pcolormesh(xs, ys, np.ma.masked_invalid(values), shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="certified constant")
    if invalid is not None and np.any(invalid):
        iy, ix = np.nonzero(invalid)
        ax.scatter(np.asarray(xs)[ix], np.asarray(ys)[iy], marker="x", color="red", s=12, label="invalid")
        ax.legend(loc="upper left")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    out = _save(fig, path)
    plt.close(fig)
    return out


def lines_svg(path, panels: Sequence[tuple[str, Sequence[tuple[str, np.ndarray, np.ndarray]]]], xlabel: str) -> Path:
    """One stacked panel per ``(ylabel, [(label, x, y), ...])``."""
    plt = _pyplot()
    fig, axes = plt.subplots(len(panels), 1, figsize=(6, 2.4 * len(panels)), sharex=False, squeeze=False)
    for ax, (ylabel, series) in zip(axes[:, 0], panels):
        for label, x, y in series:
            ax.plot(x, y, label=label)
        ax.set_ylabel(ylabel)
        if len(series) > 1:
            ax.legend(fontsize="small")
    axes[-1, 0].set_xlabel(xlabel)
    fig.tight_layout()
    out = _save(fig, path)
    plt.close(fig)
    return out
