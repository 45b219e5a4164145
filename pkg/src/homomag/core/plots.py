"""Plotting utilities for convergence and energy reports."""

import base64
from io import BytesIO
from typing import Dict, List, Optional

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

# Set style
plt.style.use('default')
sns.set_palette("husl")


def _to_base64(fig) -> str:
    buffer = BytesIO()
    fig.savefig(buffer, format='png', dpi=150, bbox_inches='tight')
    plt.close(fig)
    buffer.seek(0)
    return base64.b64encode(buffer.getvalue()).decode()


def create_convergence_plot(rows: pd.DataFrame, columns: List[str],
                            laws: Optional[Dict[str, np.ndarray]] = None,
                            title: str = "Error against eps") -> str:
    """Log-log error curves, reference laws scaled to meet the first valid point.

    Args:
        rows: Report rows with an ``eps`` column
        columns: Error columns to draw
        laws: Reference law values per name, evaluated at rows["eps"]
        title: Plot title

    Returns:
        Base64 encoded image string
    """
    ok = rows[rows["status"] == "ok"] if "status" in rows.columns else rows
    if ok.empty:
        return ""
    fig, ax = plt.subplots(figsize=(8, 6))
    eps = ok["eps"].to_numpy()
    anchor = None
    colors = sns.color_palette("husl", len(columns))
    for k, column in enumerate(columns):
        values = ok[column].to_numpy()
        mask = np.isfinite(values) & (values > 0)
        if not mask.any():
            continue
        ax.loglog(eps[mask], values[mask], marker="o", label=column, color=colors[k])
        if anchor is None:
            anchor = (eps[mask][0], values[mask][0])
    if laws and anchor is not None:
        all_eps = rows["eps"].to_numpy()
        for name, values in laws.items():
            ref = np.interp(anchor[0], all_eps[::-1], np.asarray(values)[::-1])
            ax.loglog(all_eps, anchor[1] * np.asarray(values) / ref, linestyle="--", color="gray",
                      alpha=0.7, label=f"{name} (scaled)")
    ax.set_xlabel("eps", fontsize=12)
    ax.set_ylabel("error", fontsize=12)
    ax.set_title(title, fontsize=14, fontweight='bold')
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=9)
    plt.tight_layout()
    return _to_base64(fig)


def create_energy_plot(energy_log: pd.DataFrame, title: str = "Energy history") -> str:
    """Total energy and the damping-corrected balance against time."""
    if energy_log.empty:
        return ""
    fig, ax = plt.subplots(figsize=(8, 5))
    G0 = energy_log["G_total"].iloc[0]
    curves = pd.DataFrame({"t": energy_log["t"], "G": energy_log["G_total"],
                           "G + damping integral": energy_log["G_total"] + energy_log["damping_integral"]})
    long = curves.melt(id_vars="t", var_name="curve", value_name="energy")
    sns.lineplot(data=long, x="t", y="energy", hue="curve", style="curve",
                 palette=sns.color_palette("husl", 2), ax=ax)
    ax.axhline(G0, color="gray", alpha=0.5, linewidth=0.8)
    ax.set_xlabel("t", fontsize=12)
    ax.set_ylabel("energy", fontsize=12)
    ax.set_title(title, fontsize=14, fontweight='bold')
    ax.legend()
    ax.grid(True, alpha=0.3)
    plt.tight_layout()
    return _to_base64(fig)


def create_pairwise_slope_plot(pairwise: Dict[str, List[float]], eps: np.ndarray,
                               title: str = "Local slopes") -> str:
    """Local slope of each error column between neighbouring eps."""
    if not pairwise or len(eps) < 2:
        return ""
    mid = np.sqrt(eps[:-1] * eps[1:])
    fig, ax = plt.subplots(figsize=(8, 5))
    for name, slopes in pairwise.items():
        if slopes:
            ax.semilogx(mid[:len(slopes)], slopes, marker="s", label=name)
    ax.set_xlabel("eps (geometric midpoint)", fontsize=12)
    ax.set_ylabel("local slope", fontsize=12)
    ax.set_title(title, fontsize=14, fontweight='bold')
    ax.legend(fontsize=9)
    ax.grid(True, alpha=0.3)
    plt.tight_layout()
    return _to_base64(fig)
