"""Figures written next to the CSV artifacts: training curves, CAMs, one-vs-one scatters."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def figure(width=6.0, height=None, nrows=1, ncols=1, **kwargs):
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    with plt.rc_context(STYLE):
        return plt.subplots(nrows, ncols, figsize=(width, height or width * golden), **kwargs)


def save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig.savefig(path)
    plt.close(fig)
    return path


def plot_history(history, path) -> Path:
    fig, ax = figure()
    epochs = np.arange(len(history.loss))
    ax.plot(epochs, history.loss, color="C0", lw=1.2, label="training loss")
    if history.best_epoch >= 0:
        ax.axvline(history.best_epoch, color="0.6", ls="--", lw=0.8, label="best epoch")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    twin = ax.twinx()
    twin.plot(epochs, history.accuracy, color="C1", lw=1.0, label="training accuracy")
    twin.set_ylabel("accuracy")
    twin.set_ylim(0, 1.02)
    handles = ax.get_legend_handles_labels()[0] + twin.get_legend_handles_labels()[0]
    ax.legend(handles, [h.get_label() for h in handles], loc="center right", frameon=False)
    return save(fig, path)


def plot_cam(series: np.ndarray, normalized: np.ndarray, path, title=None) -> Path:
    """Each channel of ``series`` (C, L) drawn as a line coloured by the CAM score."""
    series = np.atleast_2d(series)
    fig, ax = figure()
    t = np.arange(series.shape[1])
    norm = plt.Normalize(0.0, 1.0)
    for channel in series:
        points = np.column_stack([t, channel])[:, None, :]
        segments = np.concatenate([points[:-1], points[1:]], axis=1)
        lc = LineCollection(segments, cmap="jet", norm=norm, linewidths=2)
        lc.set_array(0.5 * (normalized[:-1] + normalized[1:]))
        ax.add_collection(lc)
    ax.set_xlim(t[0], t[-1])
    pad = 0.05 * (np.ptp(series) or 1.0)
    ax.set_ylim(series.min() - pad, series.max() + pad)
    ax.set_xlabel("time")
    fig.colorbar(lc, ax=ax, label="CAM (normalized)")
    if title:
        ax.set_title(title)
    return save(fig, path)


def plot_one_vs_one(acc_a, acc_b, name_a: str, name_b: str, path, wtl=None, p_value=None) -> Path:
    fig, ax = figure(4.0, 4.0)
    ax.plot([0, 1], [0, 1], color="0.6", lw=0.8)
    ax.scatter(acc_b, acc_a, s=14, color="C0", alpha=0.8, edgecolor="none")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_aspect("equal")
    ax.set_xlabel(f"{name_b} accuracy")
    ax.set_ylabel(f"{name_a} accuracy")
    lines = []
    if wtl is not None:
        lines.append(f"W/T/L {name_a}: {wtl[0]}/{wtl[1]}/{wtl[2]}")
    if p_value is not None:
        lines.append(f"Wilcoxon p = {p_value:.4f}")
    if lines:
        ax.text(0.04, 0.96, "\n".join(lines), transform=ax.transAxes, va="top", fontsize=8)
    return save(fig, path)


def plot_filters(bank, path) -> Path:
    fig, axes = figure(7.0, 5.0, nrows=3, ncols=1, sharex=True)
    for ax, kind in zip(axes, ("increase", "decrease", "peak")):
        for kernel in bank.kernels:
            if kernel.kind == kind:
                ax.plot(np.arange(kernel.size), kernel.coefficients, lw=0.9, label=str(kernel.size))
        ax.set_ylabel(kind)
        ax.legend(ncol=6, frameon=False, loc="upper right")
    axes[-1].set_xlabel("tap")
    return save(fig, path)
