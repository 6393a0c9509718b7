"""Static report figures written next to the CSV tables.

Rendering uses the non-interactive Agg backend; every function takes an
output path and closes its figure.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "savefig.dpi": 120,
}


def _grid(n: int, width: float = 9.0):
    ncols = min(4, n)
    nrows = math.ceil(n / ncols)
    golden = (math.sqrt(5) - 1) / 2
    fig, axes = plt.subplots(nrows, ncols, figsize=(width, width * golden * nrows / 2),
                             squeeze=False, sharex=True)
    for ax in axes.flat[n:]:
        ax.set_visible(False)
    return fig, axes.flat


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_trajectories(t, reference, predicted, path, names=None,
                      labels=("reference", "prediction"), title=None):
    """One panel per state variable: reference against prediction."""
    reference = np.asarray(reference)
    predicted = np.asarray(predicted)
    D = reference.shape[1]
    names = names or [f"z{i + 1}" for i in range(D)]
    with plt.rc_context(RC):
        fig, axes = _grid(D)
        for i, ax in enumerate(axes):
            if i >= D:
                break
            ax.plot(t, reference[:, i], color="0.55", label=labels[0])
            ax.plot(t[:predicted.shape[0]], predicted[:, i], color="C0", ls="--",
                    label=labels[1])
            ax.set_title(names[i])
        axes[0].legend(frameon=False)
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def plot_error_series(t, err, bound, path, names=None, title=None):
    """Normalized error per variable with the measurement bound as a
    horizontal line."""
    err = np.asarray(err)
    D = err.shape[1]
    names = names or [f"z{i + 1}" for i in range(D)]
    with plt.rc_context(RC):
        fig, axes = _grid(D)
        for i, ax in enumerate(axes):
            if i >= D:
                break
            ax.plot(t, err[:, i], color="C0", label="prediction error")
            if bound is not None and np.isfinite(bound[i]):
                ax.axhline(bound[i], color="C3", lw=1.0, label="measurement bound")
                ax.axhline(-bound[i], color="C3", lw=1.0, ls=":")
            ax.set_title(names[i])
        axes[0].legend(frameon=False)
        if title:
            fig.suptitle(title)
        return _save(fig, path)


def plot_flight_summary(flights, mean_err, bound, path, title=None):
    """Mean normalized error per flight against the measurement bound."""
    x = np.arange(len(flights))
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(max(4.0, 0.18 * len(flights) + 2), 3.0))
        ax.plot(x, mean_err, "o-", color="C0", ms=3, label="mean |error|")
        if bound is not None:
            ax.plot(x, bound, color="C3", label="measurement bound")
        ax.set_xticks(x)
        ax.set_xticklabels(flights, rotation=90)
        ax.set_ylabel("normalized error")
        ax.legend(frameon=False)
        if title:
            ax.set_title(title)
        return _save(fig, path)
