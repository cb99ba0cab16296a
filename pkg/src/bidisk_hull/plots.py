"""SVG figures: coordinate projections of the limit sample and the gap sequence."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import PointCloud  # noqa: E402

PLOTS = ("proj1", "proj2", "gaps")

plt.rcParams["svg.hashsalt"] = "bidisk-hull"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def plot_projection(V: PointCloud, Y: PointCloud, axis: int, path: Path) -> Path:
    """Scatter of the z- (axis 1) or w-projection (axis 2) inside the unit circle."""
    fig, ax = plt.subplots(figsize=(5, 5))
    t = np.linspace(0, 2 * np.pi, 361)
    ax.plot(np.cos(t), np.sin(t), color="0.6", lw=0.8)
    pv = V.z if axis == 1 else V.w
    py = Y.z if axis == 1 else Y.w
    ax.scatter(pv.real, pv.imag, s=2, color="tab:blue", label="V")
    ax.scatter(py.real, py.imag, s=2, color="tab:red", label="Y")
    ax.set_xlim(-1.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.set_aspect("equal")
    ax.set_title(f"projection onto the {'z' if axis == 1 else 'w'}-plane")
    ax.legend(loc="upper right")
    return _save(fig, path)


def plot_gaps(indices, gaps, path: Path) -> Path:
    """One marker per consecutive pair of selected clouds."""
    fig, ax = plt.subplots(figsize=(6, 4))
    stages = [i + 1 for i in indices[1:]]
    ax.plot(stages, list(gaps), marker="o")
    ax.set_xlabel("stage of later cloud")
    ax.set_ylabel("Hausdorff gap")
    ax.set_title("gaps along the selected subsequence")
    return _save(fig, path)
