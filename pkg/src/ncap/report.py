"""Plot-ready CSV emission and matplotlib figure rendering for run outputs.

Figures are written next to the delimited files: accuracy curves, beta_eff
traces (signed value on a symlog axis), predicted-vs-true scatter, and a
rank-correlation bar chart.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import serialize


def _by_model(rows, key="model_id"):
    grouped = {}
    for row in rows:
        grouped.setdefault(row[key], []).append(row)
    return grouped


def write_curve_csvs(observations, out_dir):
    """Split observations into per-quantity plot-ready CSVs.

    observations: list of dicts with model_id, epoch, beta_eff, val_acc.
    """
    acc_path = os.path.join(out_dir, "curves_accuracy.csv")
    beta_path = os.path.join(out_dir, "curves_beta.csv")
    serialize.write_csv(
        acc_path,
        ("model_id", "epoch", "val_acc"),
        [(r["model_id"], r["epoch"], r["val_acc"]) for r in observations],
    )
    serialize.write_csv(
        beta_path,
        ("model_id", "epoch", "beta_eff"),
        [(r["model_id"], r["epoch"], r["beta_eff"]) for r in observations],
    )
    return [acc_path, beta_path]


def write_prediction_csv(ranking, out_dir):
    """Flatten a ranking report into (model, llc, method, predicted, true) rows."""
    rows = []
    for block in ranking["rankings"]:
        for entry in block["models"]:
            for method in ("ours", "lsv", "bsv"):
                if method in entry:
                    rows.append(
                        (entry["model_id"], block["llc"], method,
                         entry[method], entry["true_final"])
                    )
    path = os.path.join(out_dir, "pred_vs_true.csv")
    serialize.write_csv(path, ("model_id", "llc", "method", "predicted", "true_final"), rows)
    return [path]


def render_curve_figures(observations, out_dir):
    paths = []
    for field, fname, ylabel in (
        ("val_acc", "accuracy_curves.png", "validation accuracy"),
        ("beta_eff", "beta_curves.png", "beta_eff"),
    ):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for model_id, rows in sorted(_by_model(observations).items()):
            rows = sorted(rows, key=lambda r: r["epoch"])
            ax.plot([r["epoch"] for r in rows], [r[field] for r in rows],
                    marker=".", label=model_id)
        ax.set_xlabel("epoch")
        ax.set_ylabel(ylabel)
        if field == "beta_eff":
            ax.set_yscale("symlog", linthresh=1e-6)
            ax.axhline(0.0, color="gray", lw=0.5)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = os.path.join(out_dir, fname)
        fig.savefig(path, dpi=120)
        plt.close(fig)
        paths.append(path)
    return paths


def render_ranking_figures(ranking, out_dir):
    paths = []
    blocks = ranking["rankings"]

    fig, axes = plt.subplots(1, len(blocks), figsize=(4.0 * len(blocks), 4.0), squeeze=False)
    for ax, block in zip(axes[0], blocks):
        truths = [e["true_final"] for e in block["models"]]
        for method, marker in (("ours", "o"), ("lsv", "s"), ("bsv", "^")):
            if method in block["models"][0]:
                preds = [e[method] for e in block["models"]]
                ax.scatter(truths, preds, marker=marker, label=method, alpha=0.8)
        lo = min(truths) - 0.02
        hi = max(truths) + 0.02
        ax.plot([lo, hi], [lo, hi], color="gray", lw=0.5)
        ax.set_xlabel("true final accuracy")
        ax.set_ylabel("predicted")
        ax.set_title("llc = %d" % block["llc"])
        ax.legend(fontsize=7)
    fig.tight_layout()
    path = os.path.join(out_dir, "pred_vs_true.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    methods = [m for m in ("ours", "lsv", "bsv") if m in blocks[0]["rho"]]
    width = 0.8 / len(blocks)
    for bi, block in enumerate(blocks):
        xs = [i + bi * width for i in range(len(methods))]
        ax.bar(xs, [block["rho"][m] for m in methods], width=width,
               label="llc=%d" % block["llc"])
    ax.set_xticks([i + width * (len(blocks) - 1) / 2 for i in range(len(methods))])
    ax.set_xticklabels(methods)
    ax.set_ylabel("rank correlation vs true finals")
    ax.set_ylim(-1.05, 1.05)
    ax.axhline(0.0, color="gray", lw=0.5)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(out_dir, "ranking_rho.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)
    return paths


def render_trajectory_figure(times, states, reduced_times, reduced_states, out_dir):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for i in range(states.shape[1]):
        ax.plot(times, states[:, i], color="steelblue", alpha=0.4, lw=0.8)
    ax.plot(reduced_times, reduced_states, color="crimson", lw=2.0, label="mean-field x_av")
    ax.set_xlabel("t")
    ax.set_ylabel("state")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, "trajectory.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]
