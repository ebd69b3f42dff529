"""Figures for benchmark reports, rendered off-screen to PNG files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

METHODS = ("input", "rl_baseline", "cider")
LABELS = {"input": "blurred", "rl_baseline": "RL baseline", "cider": "CiDeR"}
COLORS = {"input": "0.6", "rl_baseline": "#4477aa", "cider": "#cc6677"}
# fixed metadata keeps reruns byte-stable
_META = {"Software": None}


def _style(ax):
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.tick_params(direction="out", length=3)


def metric_bars(per_image: dict, metric: str, path) -> Path:
    """Grouped bars of the per-image average of ``metric`` for each method."""
    names = sorted(per_image)
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(names) + 2), 3.2), dpi=110)
    width = 0.8 / len(METHODS)
    x = np.arange(len(names))
    for j, m in enumerate(METHODS):
        vals = [per_image[n].get(f"{metric}_{m}") for n in names]
        vals = [np.nan if v is None else v for v in vals]
        ax.bar(x + (j - 1) * width, vals, width, label=LABELS[m], color=COLORS[m])
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30 if len(names) > 4 else 0, ha="right" if len(names) > 4 else "center")
    ax.set_ylabel(metric.upper())
    if metric == "ssim":
        ax.set_ylim(0, 1)
    ax.legend(frameon=False, fontsize=8, ncol=3, loc="upper left", bbox_to_anchor=(0, 1.15))
    _style(ax)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def gain_scatter(records: list[dict], path) -> Path:
    """SSIM of the RL baseline against CiDeR, one point per record."""
    ok = [r for r in records if r.get("ssim_cider") is not None]
    fig, ax = plt.subplots(figsize=(3.4, 3.4), dpi=110)
    if ok:
        a = np.array([r["ssim_rl_baseline"] for r in ok])
        b = np.array([r["ssim_cider"] for r in ok])
        ax.scatter(a, b, s=14, color=COLORS["cider"], zorder=3)
        lo, hi = min(a.min(), b.min()) - 0.02, max(a.max(), b.max()) + 0.02
        ax.plot([lo, hi], [lo, hi], color="0.7", lw=0.8)
        ax.set_xlim(lo, hi)
        ax.set_ylim(lo, hi)
    ax.set_xlabel("SSIM, RL baseline")
    ax.set_ylabel("SSIM, CiDeR")
    _style(ax)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def comparison_panel(images: dict[str, np.ndarray], path, title: str = "") -> Path:
    """Side-by-side grayscale panels, e.g. sharp / blurred / RL / CiDeR."""
    n = len(images)
    fig, axes = plt.subplots(1, n, figsize=(2.2 * n, 2.5), dpi=110)
    for ax, (label, img) in zip(np.atleast_1d(axes), images.items()):
        ax.imshow(np.squeeze(img), cmap="gray", vmin=0, vmax=1, interpolation="nearest")
        ax.set_title(label, fontsize=9)
        ax.set_axis_off()
    if title:
        fig.suptitle(title, fontsize=9)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def loss_curve(trace, path) -> Path:
    fig, ax = plt.subplots(figsize=(4, 2.8), dpi=110)
    ax.semilogy(np.arange(1, len(trace) + 1), np.maximum(np.asarray(trace), 1e-12), color=COLORS["cider"], lw=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    _style(ax)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path
