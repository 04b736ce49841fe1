"""Figure rendering for run and sweep reports.

Figures are written next to the delimited outputs they visualize.  The Agg
backend keeps rendering headless; PNG metadata is stripped so repeated runs
produce stable files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_META = {"Software": None}  # drop the library/version stamp

_MAX_INDIVIDUAL_LINES = 15


def plot_trajectory(traj, path, cfg=None) -> None:
    """Mean sentiment with a std band, individual users on small networks,
    and the applied recommendation as a dashed line."""
    t = np.arange(traj.states.shape[0])
    mean = traj.states.mean(axis=1)
    std = traj.states.std(axis=1)

    fig, ax = plt.subplots(figsize=(7, 4))
    if traj.n <= _MAX_INDIVIDUAL_LINES:
        for i in range(traj.n):
            ax.plot(t, traj.states[:, i], color="steelblue", alpha=0.35, lw=0.8)
    else:
        ax.fill_between(t, mean - std, mean + std, color="steelblue", alpha=0.2,
                        label="mean ± std")
    ax.plot(t, mean, color="steelblue", lw=2, label="mean sentiment")
    ax.plot(t[:-1], traj.controls, color="darkorange", ls="--", lw=1.5,
            label="recommendation u(t)")
    ax.set_xlabel("time step")
    ax.set_ylabel("emotional extremity")
    ax.set_ylim(-0.02, 1.02)
    if cfg is not None:
        ax.set_title(f"{cfg.controller} / {cfg.mode} / rho={cfg.effective_rho:g}")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=150, metadata=_PNG_META)
    plt.close(fig)


def plot_sweep(report, path, cfg=None) -> None:
    """Four-panel sweep summary: misinformation, engagement cost, sentiment
    shift (all vs rho), and the engagement/misinformation Pareto frontier."""
    ok = [e for e in report.entries if e.metrics is not None]
    if not ok:
        return
    rhos = [e.rho for e in ok]
    ms = [e.metrics.misinformation for e in ok]
    eng_mean = [e.metrics.engagement_cost_mean for e in ok]
    eng_median = [e.metrics.engagement_cost_median for e in ok]
    shift_mean = [e.metrics.sentiment_shift_mean for e in ok]
    shift_median = [e.metrics.sentiment_shift_median for e in ok]
    have_m = all(m is not None for m in ms)

    fig, axes = plt.subplots(2, 2, figsize=(10, 7))

    ax = axes[0, 0]
    if have_m:
        ax.plot(rhos, ms, "o-", color="steelblue")
        ax.set_ylabel("misinformation ratio")
    else:
        ax.text(0.5, 0.5, "continuous mode:\nno misinformation metric",
                ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("penalty strength rho")
    ax.set_title("misinformation vs penalty")

    ax = axes[0, 1]
    ax.plot(rhos, eng_mean, "o-", color="steelblue", label="mean")
    ax.plot(rhos, eng_median, "s--", color="darkorange", label="median")
    ax.set_xlabel("penalty strength rho")
    ax.set_ylabel("per-user engagement cost")
    ax.set_title("engagement cost vs penalty")
    ax.legend(fontsize=8)

    ax = axes[1, 0]
    ax.plot(rhos, shift_mean, "o-", color="steelblue", label="mean")
    ax.plot(rhos, shift_median, "s--", color="darkorange", label="median")
    ax.set_xlabel("penalty strength rho")
    ax.set_ylabel("|x(tau) - x(0)|")
    ax.set_title("sentiment shift vs penalty")
    ax.legend(fontsize=8)

    ax = axes[1, 1]
    if report.pareto:
        xs = [p.engagement_cost_median for p in report.pareto]
        ys = [p.misinformation for p in report.pareto]
        ax.plot(xs, ys, "-", color="lightgray", zorder=1)
        front = [p for p in report.pareto if p.non_dominated]
        rest = [p for p in report.pareto if not p.non_dominated]
        if rest:
            ax.scatter([p.engagement_cost_median for p in rest],
                       [p.misinformation for p in rest],
                       color="silver", s=25, zorder=2, label="dominated")
        ax.scatter([p.engagement_cost_median for p in front],
                   [p.misinformation for p in front],
                   color="steelblue", s=35, zorder=3, label="non-dominated")
        for p in report.pareto:
            ax.annotate(f"{p.rho:g}", (p.engagement_cost_median, p.misinformation),
                        fontsize=7, xytext=(3, 3), textcoords="offset points")
        ax.set_xlabel("median per-user engagement cost")
        ax.set_ylabel("misinformation ratio")
        ax.set_title("trade-off frontier (lower-left is better)")
        ax.legend(fontsize=8)
    else:
        ax.text(0.5, 0.5, "no Pareto data", ha="center", va="center",
                transform=ax.transAxes)

    if cfg is not None:
        fig.suptitle(f"{cfg.controller} / {cfg.mode} / seed {cfg.seed}", fontsize=11)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=150, metadata=_PNG_META)
    plt.close(fig)
