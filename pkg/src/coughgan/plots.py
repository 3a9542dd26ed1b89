"""Matplotlib figures written next to the training outputs."""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
}


def plot_sample_grid(unit_maps, path, ncols: int = 2):
    """Grey-scale grid of generated maps (values in [0, 1])."""
    n = len(unit_maps)
    nrows = max(1, math.ceil(n / ncols))
    with plt.rc_context(STYLE):
        fig, axs = plt.subplots(nrows, ncols, figsize=(2 * ncols, 3 * nrows), squeeze=False)
        for k, ax in enumerate(axs.flat):
            ax.axis("off")
            if k < n:
                img = unit_maps[k]
                ax.imshow(img[..., 0] if img.ndim == 3 else img, cmap="gray", vmin=0, vmax=1,
                          origin="lower", aspect="auto")
        fig.savefig(path)
        plt.close(fig)


def plot_history(history, path):
    """Total loss per epoch for each series, train solid and test dashed."""
    with plt.rc_context(STYLE):
        fig, axs = plt.subplots(1, 2, figsize=(9, 3))
        for series, color in (("generator", "C0"), ("discriminator_real", "C1"), ("discriminator_fake", "C2")):
            for split, table, ls in (("train", history.train, "-"), ("test", history.test, "--")):
                recs = table.get(series, [])
                if not recs:
                    continue
                epochs = range(1, len(recs) + 1)
                axs[0].plot(epochs, [r.total for r in recs], ls, color=color, label=f"{series} ({split})")
                if series != "generator":
                    axs[1].plot(epochs, [r.validity_accuracy for r in recs], ls, color=color,
                                label=f"{series} ({split})")
        axs[0].set_xlabel("epoch")
        axs[0].set_ylabel("total loss")
        axs[1].set_xlabel("epoch")
        axs[1].set_ylabel("real/fake accuracy")
        axs[1].set_ylim(-0.05, 1.05)
        axs[0].legend(loc="best")
        fig.savefig(path)
        plt.close(fig)
