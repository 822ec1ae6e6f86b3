"""Report figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .hough import OrientationHistogram  # noqa: E402


def plot_noise_study(report, path) -> None:
    """Median and 10-90 percentile band of recovered/true gamma against noise.

    One panel per true gamma, one curve per clutter kind.
    """
    cells = report.summary()
    gammas = sorted({c.gamma_true for c in cells})
    fig, axes = plt.subplots(1, len(gammas), figsize=(4.5 * len(gammas), 3.6),
                             squeeze=False, sharey=True)
    for ax, g in zip(axes[0], gammas):
        for kind in sorted({c.kind for c in cells}):
            sel = sorted((c for c in cells if c.gamma_true == g and c.kind == kind),
                         key=lambda c: c.noise)
            x = np.array([c.noise for c in sel])
            med = np.array([c.median for c in sel]) / g
            lo = np.array([c.p10 for c in sel]) / g
            hi = np.array([c.p90 for c in sel]) / g
            line, = ax.plot(x, med, marker="o", label=kind.replace("_", " "))
            ax.fill_between(x, lo, hi, color=line.get_color(), alpha=0.2)
        ax.axhline(1.0, color="k", lw=0.8, ls="--")
        ax.set_title(f"gamma = {g:g}")
        ax.set_xlabel("noise fraction")
        ax.grid(alpha=0.3)
    axes[0, 0].set_ylabel("recovered / true gamma")
    axes[0, -1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_histograms(histograms: dict[str, OrientationHistogram], path) -> None:
    """Overlay of normalised orientation histograms, e.g. before and after correction."""
    fig, ax = plt.subplots(figsize=(6, 3.2))
    for label, h in histograms.items():
        mass = h.bins / h.total if h.total > 0 else h.bins
        ax.step(np.degrees(h.bin_centers()), mass, where="post", label=label, lw=1.0)
    ax.set_xlabel("normal orientation (deg)")
    ax.set_ylabel("fraction of edgels")
    ax.set_xlim(0, 180)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
