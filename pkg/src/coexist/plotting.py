"""Static figures for run reports (always rendered off-screen)."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 3.2),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "svg.hashsalt": "coexist",
}
COLORS = ("#1f5f99", "#b8562a")


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"Date": None} if path.suffix == ".svg" else {"Software": None}
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata=meta)
    plt.close(fig)
    return path


def plot_solution(t: np.ndarray, comps: Sequence[np.ndarray], path: Path,
                  bands: Optional[Sequence[tuple[float, float]]] = None, title: str = "") -> Path:
    """One panel per component; the shaded band spans the localization radii ``[r_j, R_j]``."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(comps), sharex=True)
        for j, (ax, x) in enumerate(zip(np.atleast_1d(axes), comps)):
            if bands is not None:
                lo, hi = bands[j]
                ax.axhspan(lo, hi, color=COLORS[j], alpha=0.12, lw=0, label=f"[r, R] = [{lo:g}, {hi:g}]")
            ax.plot(t, x, color=COLORS[j], lw=1.4, label=f"x{j + 1}")
            ax.set_xlabel("t")
            ax.set_xlim(0.0, 1.0)
            ax.legend(loc="best", frameon=False)
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def plot_planar(fixed_points: Sequence[dict], region: np.ndarray, path: Path, title: str = "") -> Path:
    """Fixed points of the radial bump map over the annular region boundary."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.0, 4.0))
        poly = np.vstack([region, region[:1]])
        ax.plot(poly[:, 0], poly[:, 1], color="0.4", lw=1.0, label="region boundary")
        for sign, color in ((1, COLORS[0]), (-1, COLORS[1])):
            pts = np.array([[p["r"] * np.cos(p["theta"]), p["r"] * np.sin(p["theta"])]
                            for p in fixed_points if p["sign"] == sign])
            if len(pts):
                ax.plot(pts[:, 0], pts[:, 1], ".", color=color, ms=4, label=f"fixed points ({'+' if sign > 0 else '-'})")
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.legend(loc="upper right", frameon=False)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_ratios(xs: np.ndarray, series: dict, path: Path, ylabel: str = "ratio") -> Path:
    """Log-log view of sampled asymptotic ratios."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for (name, ys), color in zip(series.items(), plt.cm.tab10.colors):
            ax.loglog(xs[: len(ys)], ys, ".-", ms=3, lw=1.0, color=color, label=name)
        ax.set_xlabel("x")
        ax.set_ylabel(ylabel)
        ax.legend(loc="best", frameon=False, fontsize=7)
        return _save(fig, path)
