"""Matplotlib renderings of report data, written next to the delimited output.

Each function takes data already present in the corresponding report and a
target path; nothing here recomputes results. Figures carry no timestamps or
host metadata so repeated runs produce stable files.
"""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = [
    "save_latency_fit",
    "save_adjust_trace",
    "save_sensitivity",
    "save_congestion",
    "save_zone_costs",
    "save_flow_comparison",
]

_SAVE_KW = {"dpi": 150, "metadata": {"Software": None}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_latency_fit(path, f_hat, z_max: float, reference=None, observed_ratios=None):
    """Estimated latency factor over [0, z_max], optionally vs a reference."""
    zs = np.linspace(0.0, max(z_max, 1e-6), 400)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(zs, f_hat.value(zs), label="estimated", color="tab:blue")
    if reference is not None:
        ax.plot(zs, reference.value(zs), label="reference", color="tab:gray",
                linestyle="--")
    if observed_ratios is not None and len(observed_ratios):
        ratios = np.asarray(observed_ratios, dtype=float)
        ax.plot(ratios, f_hat.value(ratios), ".", color="tab:red", markersize=4,
                label="observed ratios")
    ax.set_xlabel("flow / capacity")
    ax.set_ylabel("latency factor")
    ax.legend()
    _finish(fig, path)


def save_adjust_trace(path, objectives):
    """Normalized adjustment objective against the outer iteration count."""
    objectives = np.asarray(objectives, dtype=float)
    base = objectives[0] if objectives.size and objectives[0] > 0 else 1.0
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(objectives.size), objectives / base, marker="o")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective / initial objective")
    ax.set_ylim(bottom=0)
    _finish(fig, path)


def save_sensitivity(path, delta_v_t0, delta_v_m):
    """Per-link objective drops for the two perturbation kinds."""
    n = len(delta_v_t0)
    idx = np.arange(n)
    fig, ax = plt.subplots(figsize=(max(6, n * 0.25), 4))
    ax.plot(idx, delta_v_t0, marker="o", label="free-flow time", color="tab:blue")
    ax.plot(idx, delta_v_m, marker="s", label="capacity", color="tab:red")
    ax.set_xlabel("link")
    ax.set_ylabel("objective drop")
    ax.legend()
    _finish(fig, path)


def save_congestion(path, cm_user, cm_social=None):
    """Per-link congestion (travel time over free-flow time)."""
    n = len(cm_user)
    idx = np.arange(n)
    fig, ax = plt.subplots(figsize=(max(6, n * 0.25), 4))
    ax.plot(idx, cm_user, marker="o", label="user routing", color="tab:blue")
    if cm_social is not None:
        ax.plot(idx, cm_social, marker="s", label="social routing", color="tab:green")
    ax.axhline(1.0, color="tab:gray", linewidth=0.8)
    ax.set_xlabel("link")
    ax.set_ylabel("congestion metric")
    ax.legend()
    _finish(fig, path)


def save_zone_costs(path, costs_user: dict, costs_social: dict | None = None):
    """Bar chart of per-zone travel costs, one or two policies."""
    zones = list(costs_user)
    idx = np.arange(len(zones))
    width = 0.4 if costs_social is not None else 0.8
    fig, ax = plt.subplots(figsize=(max(6, len(zones) * 0.5), 4))
    ax.bar(idx - (width / 2 if costs_social is not None else 0),
           [costs_user[z] for z in zones], width, label="user routing",
           color="tab:blue")
    if costs_social is not None:
        ax.bar(idx + width / 2, [costs_social.get(z, 0.0) for z in zones], width,
               label="social routing", color="tab:green")
    ax.set_xticks(idx)
    ax.set_xticklabels([str(z) for z in zones], rotation=45, ha="right")
    ax.set_ylabel("zone cost (vehicle-hours)")
    ax.legend()
    _finish(fig, path)


def save_flow_comparison(path, flows_user, flows_social):
    """Scatter of social vs user link flows around the diagonal."""
    xu = np.asarray(flows_user, dtype=float)
    xs = np.asarray(flows_social, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 5))
    top = max(xu.max(initial=0.0), xs.max(initial=0.0), 1.0)
    ax.plot([0, top], [0, top], color="tab:gray", linewidth=0.8)
    ax.plot(xu, xs, ".", color="tab:blue")
    ax.set_xlabel("user-routing flow")
    ax.set_ylabel("social-routing flow")
    _finish(fig, path)
