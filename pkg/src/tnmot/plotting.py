"""Figures for the experiment reports, rendered off-screen to PNG files."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _positive(values):
    # log axes cannot show exact zeros or missing entries
    v = np.asarray(values, dtype=np.float64)
    return np.where(np.isfinite(v) & (v > 0), v, np.nan)


def plot_poc(report, path):
    """Cost differences, log errors and flops against the rank."""
    ranks = report.column("rank")
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.6))
    panels = [
        ("cost difference", "cost_diff_svds", "cost_diff_tt"),
        ("sampled log error", "log_err_svds", "log_err_tt"),
        ("flops per sweep", "flops", "flops_tt"),
    ]
    for ax, (title, a, b) in zip(axes, panels):
        ax.semilogy(ranks, _positive(report.column(a)), "o-", label="per-factor SVD")
        if report.summary.get("tt_branch"):
            ax.semilogy(ranks, _positive(report.column(b)), "s--", label="tensor train")
        ax.set_xlabel("rank")
        ax.set_title(title)
    axes[2].axhline(report.summary["flops"], color="gray", lw=0.8, label="exact kernel")
    axes[0].legend(fontsize=8)
    axes[2].legend(fontsize=8)
    return _save(fig, path)


def plot_color(images, recolored, path, report=None):
    """Source images, target and recoloured result in one row; optional error-vs-rank panel."""
    show_err = report is not None and any(np.isfinite(x) for x in report.column("inf_error_vs_full") if x is not None)
    ncols = 5 + int(show_err)
    fig, axes = plt.subplots(1, ncols, figsize=(2.6 * ncols, 2.8))
    titles = ["source 1", "source 2", "source 3", "target", "recoloured"]
    for ax, img, title in zip(axes, list(images) + [recolored], titles):
        ax.imshow(img.pixels, interpolation="nearest")
        ax.set_title(title)
        ax.axis("off")
    if show_err:
        ax = axes[-1]
        ax.semilogy(report.column("rank"), _positive(report.column("inf_error_vs_full")), "o-")
        ax.set_xlabel("rank")
        ax.set_title("sup error vs full")
    return _save(fig, path)


def plot_bridge(report, r_first, r_last, path):
    marg = report.summary["marginals"]
    panels = [np.asarray(r_first), *(m for m in marg[1:-1]), np.asarray(r_last)]
    fig, axes = plt.subplots(1, len(panels), figsize=(2.4 * len(panels), 2.6))
    for k, (ax, grid) in enumerate(zip(axes, panels), start=1):
        ax.imshow(grid, cmap="viridis", interpolation="nearest")
        ax.set_title(f"r{k}")
        ax.axis("off")
    fig.suptitle(f"{report.summary['graph']} graph, rank {report.summary['rank']}")
    return _save(fig, path)
