"""Figure rendering for synthesis reports (PNG via the Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_synthesis"]


def _show(ax, image, title, vmax=1.0, cmap="gray"):
    ax.imshow(image, cmap=cmap, vmin=0.0, vmax=vmax, origin="lower", interpolation="nearest")
    ax.set_title(title, fontsize=9)
    ax.set_xticks([])
    ax.set_yticks([])


def plot_synthesis(path, sources, targets, truths=None, dpi: int = 120) -> None:
    """Grid of panels: inputs on the first row, one row per target view.

    ``sources`` is a list of ``(input, resynthesized)`` projection pairs,
    ``targets`` a list of synthesized projections and ``truths`` an optional
    matching list of reference projections (entries may be ``None``).
    """
    truths = list(truths) if truths is not None else [None] * len(targets)
    ncols = max(3, 2 * len(sources))
    nrows = 1 + len(targets)
    fig, axes = plt.subplots(nrows, ncols, figsize=(2.6 * ncols, 1.8 * nrows), squeeze=False)
    for ax in axes.ravel():
        ax.set_axis_off()

    for i, (given, resynth) in enumerate(sources):
        for j, (img, label) in enumerate(((given, "input"), (resynth, "re-synth"))):
            ax = axes[0, 2 * i + j]
            ax.set_axis_on()
            _show(ax, img.data[0], f"{label} {img.angle:g}\N{DEGREE SIGN}")

    for r, (pred, truth) in enumerate(zip(targets, truths), start=1):
        ax = axes[r, 0]
        ax.set_axis_on()
        _show(ax, pred.data[0], f"synth {pred.angle:g}\N{DEGREE SIGN}")
        if truth is None:
            continue
        diff = np.abs(pred.data[0] - truth.data[0])
        for c, (img, title, vmax, cmap) in enumerate(
            ((truth.data[0], "truth", 1.0, "gray"), (diff, "|diff|", max(diff.max(), 1e-12), "magma")),
            start=1,
        ):
            axes[r, c].set_axis_on()
            _show(axes[r, c], img, f"{title} {pred.angle:g}\N{DEGREE SIGN}", vmax, cmap)

    fig.tight_layout()
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
