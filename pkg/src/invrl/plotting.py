"""Static figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def cost_bars(rows, path, title="Average cumulative cost"):
    """Bar chart of mean cost (with one std whisker) per item and policy.

    ``rows`` are report rows as dicts or ``ReportRow`` objects; cluster rows
    are skipped.
    """
    rows = [r if isinstance(r, dict) else vars(r) for r in rows]
    rows = [r for r in rows if r["scope"] == "item"]
    items = list(dict.fromkeys(str(r["id"]) for r in rows))
    policies = list(dict.fromkeys(r["policy"] for r in rows))
    width = 0.8 / max(len(policies), 1)
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(items) + 2), 3.5))
    x = np.arange(len(items))
    for k, pol in enumerate(policies):
        lookup = {str(r["id"]): r for r in rows if r["policy"] == pol}
        means = [float(lookup[i]["mean_cost"]) if i in lookup else np.nan for i in items]
        stds = [float(lookup[i]["std_cost"]) if i in lookup else 0.0 for i in items]
        ax.bar(x + (k - (len(policies) - 1) / 2) * width, means, width, yerr=stds,
               capsize=2, label=pol)
    ax.set_xticks(x)
    ax.set_xticklabels(items)
    ax.set_xlabel("item")
    ax.set_ylabel("cost ($)")
    ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def learning_curves(curves, path, lines=None, y="normalized_reward",
                    title="Average reward during training"):
    """Plot one line per curve (``{label: rows}``) plus horizontal baselines."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, rows in curves.items():
        xs = [float(r["timesteps"]) for r in rows]
        ys = [float(r[y]) for r in rows]
        ax.plot(xs, ys, lw=1.2, label=label)
    for name, value in (lines or {}).items():
        if not name.startswith("_"):
            ax.axhline(float(value), ls="--", lw=1.0, color="0.4")
            ax.annotate(name, (0, float(value)), xycoords=("axes fraction", "data"),
                        textcoords="offset points", xytext=(4, 3), fontsize=8)
    ax.set_xlabel("timesteps")
    ax.set_ylabel(y.replace("_", " "))
    ax.set_title(title)
    if curves:
        ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
