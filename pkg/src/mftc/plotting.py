"""SVG line plots drawn from the CSV tables already on disk.

Plots read the CSV files back rather than the in-memory arrays, so they are
a pure view of the numerical outputs. SVG output is made byte-stable by a
fixed hash salt and by dropping the date metadata.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {"svg.hashsalt": "mftc", "svg.fonttype": "none", "figure.figsize": (6.0, 4.0),
         "axes.grid": True, "grid.alpha": 0.3}


def _save(fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def plot_riccati(csv_path, out_path) -> Path:
    """Entries of P(t) and Sigma(t) against time."""
    series = defaultdict(lambda: ([], []))
    for r in _rows(csv_path):
        if r["matrix_name"] not in ("P", "Sigma"):
            continue
        ts, vs = series[(r["matrix_name"], r["row"], r["col"])]
        ts.append(float(r["time"]))
        vs.append(float(r["value"]))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, sharex=True)
        for (name, i, j), (ts, vs) in sorted(series.items()):
            ax = axes[0] if name == "P" else axes[1]
            ax.plot(ts, vs, lw=1.2, label=f"[{i},{j}]")
        for ax, name in zip(axes, ("P(t)", "Sigma(t)")):
            ax.set_title(name)
            ax.set_xlabel("t")
            if len(ax.lines) <= 9:
                ax.legend(fontsize=7)
        fig.tight_layout()
        return _save(fig, Path(out_path))


def plot_value(csv_path, out_path) -> Path:
    """Value-to-go along the optimal flow."""
    rows = _rows(csv_path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot([float(r["time"]) for r in rows], [float(r["value"]) for r in rows], lw=1.5, color="k")
        ax.set_xlabel("s")
        ax.set_ylabel("V(Y(s), s)")
        fig.tight_layout()
        return _save(fig, Path(out_path))


def plot_trajectories(csv_path, out_path) -> Path:
    """Particle paths y_0(s) for scalar states."""
    paths = defaultdict(lambda: ([], []))
    for r in _rows(csv_path):
        ts, ys = paths[int(r["particle_index"])]
        ts.append(float(r["time"]))
        ys.append(float(r["y_0"]))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for p in sorted(paths):
            ax.plot(*paths[p], lw=0.8, color="tab:blue", alpha=0.7)
        ax.set_xlabel("s")
        ax.set_ylabel("y(s)")
        fig.tight_layout()
        return _save(fig, Path(out_path))
