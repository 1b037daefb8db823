"""Matplotlib figures written next to the JSON/CSV artifacts.

All functions take plain data, write one file and return its path. The
Agg backend is forced so nothing tries to open a window.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .reports import to_uint8  # noqa: E402

LABEL_COLORS = {"continuous": "tab:blue", "discrete": "tab:orange", "redundant": "0.7"}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_loss_curves(curves, path, window=50):
    """Reconstruction loss per step, one line per run.

    ``curves`` maps a label to a sequence of losses; a trailing moving
    average of ``window`` steps is drawn over the raw trace.
    """
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, losses in curves.items():
        losses = np.asarray(losses, dtype=float)
        (line,) = ax.plot(losses, alpha=0.25, lw=0.8)
        if len(losses) >= window:
            smooth = np.convolve(losses, np.ones(window) / window, mode="valid")
            ax.plot(np.arange(window - 1, len(losses)), smooth, color=line.get_color(), label=label)
        else:
            line.set_label(label)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("reconstruction MSE")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_effect_matrix(report, path):
    E = report.effect_matrix
    fig, ax = plt.subplots(figsize=(6, max(2.5, 0.18 * len(E) + 1)))
    im = ax.imshow(E, aspect="auto", cmap="viridis", vmin=0.0, vmax=max(1.0, float(E.max(initial=0))))
    ax.set_xticks(range(len(report.factors)))
    ax.set_xticklabels(report.factors, rotation=45, ha="right")
    ax.set_ylabel(f"{report.probe_target} neuron")
    ax.set_title(f"{report.model_id}  score {report.score:.2f}", fontsize=9)
    fig.colorbar(im, ax=ax, label="max |effect|")
    return _save(fig, path)


def plot_probe_grid(report, path, max_rows=None):
    """Rows are neurons, columns are deltas: one picture per perturbation."""
    profiles = report.profiles if max_rows is None else report.profiles[:max_rows]
    deltas = report.schedule.deltas
    ncols = len(deltas)
    fig, axes = plt.subplots(
        len(profiles), ncols, figsize=(0.9 * ncols + 1.2, 0.9 * len(profiles) + 0.4), squeeze=False
    )
    for r, profile in enumerate(profiles):
        strip = profile.strip
        width = strip.shape[2] // ncols
        for c in range(ncols):
            ax = axes[r, c]
            ax.imshow(to_uint8(strip[:, :, c * width:(c + 1) * width]), interpolation="nearest")
            ax.set_xticks([])
            ax.set_yticks([])
            if r == 0:
                ax.set_title(f"{deltas[c]:+.1f}", fontsize=8)
            if c == 0:
                ax.set_ylabel(
                    f"{profile.neuron}\n{profile.label[:4]}",
                    fontsize=7,
                    color=LABEL_COLORS.get(profile.label, "k"),
                )
    return _save(fig, path)


def plot_comparison(comparison, path):
    a, b = comparison["baseline"], comparison["ddf"]
    labels = ("continuous", "discrete", "redundant")
    x = np.arange(len(labels))
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(7, 3), gridspec_kw={"width_ratios": [3, 1]})
    ax0.bar(x - 0.2, [a["counts"][k] for k in labels], 0.4, label="baseline")
    ax0.bar(x + 0.2, [b["counts"][k] for k in labels], 0.4, label="ddf")
    ax0.set_xticks(x)
    ax0.set_xticklabels(labels)
    ax0.set_ylabel("neurons")
    ax0.legend(frameon=False)
    ax1.bar([0, 1], [a["disentanglement_score"], b["disentanglement_score"]], color=["C0", "C1"])
    ax1.set_xticks([0, 1])
    ax1.set_xticklabels(["baseline", "ddf"])
    ax1.set_ylabel("factors per active neuron")
    return _save(fig, path)


def plot_cosine_histogram(stats, path):
    o = stats["orthogonality"]
    edges = np.asarray(o["histogram"]["edges"])
    counts = np.asarray(o["histogram"]["counts"])
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", color="0.6")
    sigma = o["expected_std"]
    grid = np.linspace(edges[0], edges[-1], 200)
    density = np.exp(-0.5 * (grid / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))
    ax.plot(grid, density * counts.sum() * np.diff(edges).mean(), color="k", lw=1)
    ax.set_xlabel(f"cosine of random bipolar pairs, d = {stats['d']}")
    ax.set_ylabel("pairs")
    return _save(fig, path)


def plot_score_curve(steps, scores, path):
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(steps, scores, marker="o")
    ax.set_xlabel("training step")
    ax.set_ylabel("disentanglement score")
    return _save(fig, path)
