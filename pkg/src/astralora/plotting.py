"""Figures written next to the CSV reports (Agg backend, PNG files)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 9,
    "svg.hashsalt": "astralora",
}


def _save(fig, path):
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_sweep(rows, path, digital=None):
    """Accuracy vs surrogate rank, one line (with min/max band) per query budget."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for m in sorted({r["M"] for r in rows}):
            sub = sorted((r for r in rows if r["M"] == m and r["n_ok"]), key=lambda r: r["rank"])
            if not sub:
                continue
            ranks = [r["rank"] for r in sub]
            ax.plot(ranks, [r["acc_mean"] for r in sub], marker="o", label=f"M = {m}")
            ax.fill_between(ranks, [r["acc_min"] for r in sub], [r["acc_max"] for r in sub], alpha=0.2)
        if digital is not None:
            ax.axhline(digital, color="k", ls="--", lw=1, label="digital")
        ax.set_xscale("log")
        ax.set_xlabel("surrogate rank r")
        ax.set_ylabel("test accuracy")
        ax.legend()
        return _save(fig, path)


def plot_probe(rows, path):
    """Relative error vs query budget for each estimator study (log-log)."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for study in ("zo", "transpose"):
            sub = [r for r in rows if r.study == study]
            if sub:
                ax.errorbar([r.budget for r in sub], [r.rel_err for r in sub],
                            yerr=[r.rel_err_std for r in sub], marker="o", capsize=2,
                            label=f"{study} (slope {sub[0].slope:.2f})")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("queries per estimate")
        ax.set_ylabel("relative error")
        ax.legend()
        return _save(fig, path)


def plot_metrics(rows, path):
    """Training loss and test accuracy against step, from ``metrics.csv`` rows."""
    train = [r for r in rows if r[1] == "train"]
    evals = [r for r in rows if r[1] == "eval"]
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.plot([r[0] for r in train], [r[2] for r in train], lw=0.8, label="train loss")
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        if evals:
            ax2 = ax.twinx()
            ax2.plot([r[0] for r in evals], [r[3] for r in evals], "o-", color="C1", label="test accuracy")
            ax2.set_ylabel("accuracy")
            ax2.set_ylim(0, 1.02)
        return _save(fig, path)


def plot_tracking(tracked, frozen, path):
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.semilogy(tracked, label="I-PSI")
        ax.semilogy(frozen, label="frozen")
        ax.set_xlabel("parameter update")
        ax.set_ylabel("relative surrogate error")
        ax.legend()
        return _save(fig, path)
