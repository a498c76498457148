"""Small matplotlib helpers for experiment figures (Agg backend, atomic PNG output)."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.frameon": False,
}


def save_figure(fig, path) -> Path:
    """Save to a temporary sibling and rename; no timestamp metadata."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".png")
    os.close(fd)
    try:
        fig.savefig(tmp, format="png", metadata={"Software": None})
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
        plt.close(fig)
    return path


def line_plot(path, x, series: dict, xlabel: str = "", ylabel: str = "", title: str = "",
              logx: bool = False, logy: bool = False, markers: bool = True) -> Path:
    """One line per entry of ``series`` (label -> y values) against shared x."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for label, y in series.items():
            ax.plot(x, y, "o-" if markers else "-", ms=3, lw=1.2, label=label)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend()
        fig.tight_layout()
        return save_figure(fig, path)


def scatter_plot(path, x, y, c=None, xlabel: str = "", ylabel: str = "", title: str = "",
                 logx: bool = False, logy: bool = False, hline: float | None = None) -> Path:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.scatter(x, y, c=c, s=6, **({"cmap": "viridis"} if c is not None else {}))
        if hline is not None:
            ax.axhline(hline, color="k", lw=0.8, ls="--")
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return save_figure(fig, path)


def disc_plot(path, centers: np.ndarray, radii: Sequence[float], labels: Sequence[int] | None = None,
              title: str = "") -> Path:
    """Discs in a 2-D chart, coloured by label."""
    centers = np.asarray(centers, float)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.2, 4.2))
        cmap = plt.get_cmap("tab10")
        for i, (c, r) in enumerate(zip(centers, radii)):
            lab = 0 if labels is None else int(labels[i])
            col = "0.7" if lab < 0 else cmap(lab % 10)
            ax.add_patch(plt.Circle(c[:2], r, fill=False, color=col, lw=0.8))
            ax.plot(c[0], c[1], ".", color=col, ms=2)
        ax.set_aspect("equal")
        ax.autoscale_view()
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return save_figure(fig, path)
