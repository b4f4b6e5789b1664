"""Matplotlib figures written next to the CSV outputs (SVG by default)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (4.2, 2.8),
    # stable element ids so repeated renders are byte-identical
    "svg.hashsalt": "omega-lab",
    "svg.fonttype": "none",
}

MARKERS = "odsv^<>p*h"


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = path.suffix.lstrip(".") or "svg"
    meta = {"Date": None} if fmt in ("svg", "pdf") else None
    fig.tight_layout()
    fig.savefig(path, format=fmt, metadata=meta)
    plt.close(fig)
    return path


def validation_curves(histories: dict, path) -> Path:
    """Validation accuracy over training steps, one line per run."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, hist in sorted(histories.items()):
            ax.plot([h["step"] for h in hist], [h["val_accuracy"] for h in hist], label=name, lw=1.2)
        ax.set_xlabel("training step")
        ax.set_ylabel("val. accuracy")
        ax.set_ylim(-0.02, 1.02)
        ax.axhline(0.5, color="0.6", lw=0.6, ls=":")
        if histories:
            ax.legend(frameon=False)
        return _save(fig, path)


def range_curves(grids: dict, path, train_max_len: int | None = None) -> Path:
    """Per-length test accuracy; the shaded band is the training length range."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, grid in sorted(grids.items()):
            ax.plot(grid["lengths"], grid["accuracy"], label=name, lw=1.0)
        if train_max_len is not None:
            ax.axvspan(0, train_max_len, color="0.9", zorder=0)
        ax.set_xlabel("sequence length")
        ax.set_ylabel("accuracy")
        ax.set_ylim(-0.02, 1.02)
        if grids:
            ax.legend(frameon=False)
        return _save(fig, path)


def state_scatter(n_states, values, groups, ylabel: str, result, path) -> Path:
    """Scatter of a per-run quantity against automaton size, annotated with Pearson r and p."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for i, g in enumerate(sorted(set(groups))):
            xs = [x for x, gg in zip(n_states, groups) if gg == g]
            ys = [y for y, gg in zip(values, groups) if gg == g]
            ax.scatter(xs, ys, marker=MARKERS[i % len(MARKERS)], s=18, label=g)
        ax.set_xlabel("number of DBA states")
        ax.set_ylabel(ylabel)
        if result is not None:
            ax.set_title(f"r = {result.r:.3f}, p = {result.p:.3g}", fontsize=8)
        if len(set(groups)) > 1:
            ax.legend(frameon=False)
        return _save(fig, path)
