"""Report figures. Everything renders to files through the Agg backend."""

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .polyfit import TARGETS, horner_eval  # noqa: E402

ARM_COLORS = {
    "baseline": "0.55",
    "boundary_only": "tab:blue",
    "clip_only": "tab:purple",
    "proposed": "tab:red",
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_training_curves(report, path):
    rows = report.epochs
    ep = [r["epoch"] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4))
    ax = axes[0]
    ax.plot(ep, [r["train_ce_loss"] for r in rows], label="train CE")
    ax.plot(ep, [r["val_loss"] for r in rows], label="val CE")
    bnd = [r["train_boundary_loss_weighted"] for r in rows]
    if any(b > 0 for b in bnd):
        ax.plot(ep, bnd, label="train boundary (weighted)")
        ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend(frameon=False, fontsize=8)

    axes[1].plot(ep, [r["val_accuracy"] for r in rows], color="k")
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("val accuracy")

    ax = axes[2]
    pre = np.array([r["max_abs_preact"] for r in rows]) if rows else np.zeros((0, 0))
    for i in range(pre.shape[1] if pre.ndim == 2 else 0):
        ax.plot(ep, pre[:, i], label=f"layer {i + 1}")
    cfg = report.config
    if cfg.get("activation") == "poly":
        ax.axhline(cfg["alpha"] * cfg["bound"], ls=":", color="k", lw=1, label=r"$\alpha B$")
        ax.axhline(cfg["bound"], ls="--", color="k", lw=1, label="B")
    ax.set_xlabel("epoch")
    ax.set_ylabel("max |preactivation|")
    if pre.size:
        ax.set_yscale("log")
    ax.legend(frameon=False, fontsize=8)
    if report.diverged:
        fig.suptitle(f"diverged at epoch {report.divergence_epoch}", color="tab:red")
    _save(fig, path)


def plot_ablation(result, path):
    arms = list(ARM_COLORS)
    n = len(result.seeds)
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.6))
    rates = [result.success_count(a) / n for a in arms]
    axes[0].bar(arms, rates, color=[ARM_COLORS[a] for a in arms])
    axes[0].set_ylim(0, 1.05)
    axes[0].set_ylabel(f"success rate (n={n})")
    axes[0].tick_params(axis="x", labelrotation=20)
    for i, arm in enumerate(arms):
        accs = []
        for s in result.seeds:
            r = result.reports[(arm, s)]
            accs.append(r.final_val_accuracy if r.final_val_accuracy is not None else math.nan)
        jitter = np.linspace(-0.15, 0.15, n)
        axes[1].scatter(i + jitter, accs, color=ARM_COLORS[arm], s=14)
    axes[1].set_xticks(range(len(arms)))
    axes[1].set_xticklabels(arms, rotation=20)
    axes[1].set_ylabel("final val accuracy (diverged runs omitted)")
    _save(fig, path)


def plot_activation_fit(poly, path):
    b = poly.bound
    x = np.linspace(-1.2 * b, 1.2 * b, 600)
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.plot(x, TARGETS[poly.target](x), color="0.4", lw=1, label=poly.target)
    ax.plot(x, horner_eval(poly, x), color="tab:red", label=f"degree {poly.degree}")
    for s in (-1, 1):
        ax.axvline(s * poly.threshold, ls=":", color="k", lw=1)
    ax.set_ylim(-0.3 * b, 1.3 * b)
    ax.set_xlabel("x")
    ax.legend(frameon=False)
    _save(fig, path)
