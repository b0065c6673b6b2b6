"""Figure rendering for run reports (PNG files next to the CSV plot data).

Uses the Agg backend and strips the writer metadata so repeated runs of the
same configuration produce byte-identical images.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .grid import GridModel  # noqa: E402

_SAVE_KW = dict(dpi=110, metadata={"Software": None})
_METHOD_COLORS = {"DSW": "#777777", "EXT": "#1f77b4", "CCG": "#d62728",
                  "VENUM": "#2ca02c"}


def _color(name):
    return _METHOD_COLORS.get(name, "#8c564b")


def render_report_figures(report, grid: GridModel, train_errors,
                          outdir) -> list[Path]:
    """Render the standard figure set for one evaluation report."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [violation_summary_figure(report, outdir / "violation_summary.png")]
    written.append(zonal_schedule_figure(report, grid,
                                         outdir / "zonal_schedule.png"))
    fig = deployment_errors_figure(report, grid,
                                   outdir / "deployment_errors.png")
    if fig is not None:
        written.append(fig)
    fig = scenario_scatter_figure(report, train_errors,
                                  outdir / "scenarios_2d.png")
    if fig is not None:
        written.append(fig)
    return written


def violation_summary_figure(report, path) -> Path:
    names = list(report.methods)
    inside = [report.methods[n].violation_pct_inside for n in names]
    outside = [report.methods[n].violation_pct_outside for n in names]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(5.4, 3.4))
    ax.bar(x - 0.18, inside, width=0.36, label="inside set",
           color=[_color(n) for n in names])
    ax.bar(x + 0.18, outside, width=0.36, label="outside set",
           color=[_color(n) for n in names], alpha=0.45)
    ax.set_xticks(x, names)
    ax.set_ylabel("violation probability [%]")
    ax.set_title(f"{report.label}: real-time violations")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return Path(path)


def zonal_schedule_figure(report, grid: GridModel, path) -> Path:
    zones = sorted({n.zone for n in grid.nodes}, key=str)
    methods = [n for n in report.methods
               if report.methods[n].schedule is not None]
    fig, axes = plt.subplots(1, 3, figsize=(9.6, 3.4), sharex=True)
    panels = [("energy", lambda s, idx: s.p[idx].sum()),
              ("reserve up", lambda s, idx: s.r_plus[idx].sum()),
              ("reserve down", lambda s, idx: s.r_minus[idx].sum())]
    width = 0.8 / max(len(methods), 1)
    for ax, (title, getter) in zip(axes, panels):
        for mi, name in enumerate(methods):
            sched = report.methods[name].schedule
            vals = []
            for zone in zones:
                idx = [g_i for g_i, g in enumerate(grid.generators)
                       if grid.nodes[grid.node_index[g.node]].zone == zone]
                vals.append(getter(sched, idx))
            ax.bar(np.arange(len(zones)) + (mi - len(methods) / 2 + 0.5) * width,
                   vals, width=width, label=name, color=_color(name))
        ax.set_xticks(np.arange(len(zones)), [f"zone {z}" for z in zones])
        ax.set_title(title)
        ax.set_ylabel("MW")
    axes[0].legend(frameon=False, fontsize=8)
    fig.suptitle(f"{report.label}: day-ahead schedule by zone")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return Path(path)


def deployment_errors_figure(report, grid: GridModel, path,
                             max_nodes: int = 12) -> Path | None:
    """Per-node deployment-scenario errors with the aggregate requirement
    band, restricted to nodes that actually carry uncertainty."""
    entries = []
    for name, m in report.methods.items():
        if m.deployment is None:
            continue
        for e in m.deployment:
            entries.append((name, e))
    if not entries:
        return None
    active = np.zeros(grid.n_nodes, dtype=bool)
    for _, e in entries:
        active |= np.abs(e.xi) > 1e-9
    nodes = np.nonzero(active)[0][:max_nodes]
    if nodes.size == 0:
        return None
    fig, ax = plt.subplots(figsize=(7.2, 3.6))
    width = 0.8 / len(entries)
    for k, (name, e) in enumerate(entries):
        ax.bar(np.arange(nodes.size) + (k - len(entries) / 2 + 0.5) * width,
               e.xi[nodes], width=width,
               label=f"{name}:{e.tag}", color=_color(name),
               alpha=0.35 + 0.65 * (k % 2))
    ax.axhline(report.requirement.rho_plus, ls="--", lw=0.8, color="k")
    ax.axhline(report.requirement.rho_minus, ls="--", lw=0.8, color="k")
    ax.set_xticks(np.arange(nodes.size),
                  [grid.node_ids[j] for j in nodes])
    ax.set_xlabel("node")
    ax.set_ylabel("error [MW]")
    ax.set_title(f"{report.label}: deployment scenarios")
    ax.legend(frameon=False, fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return Path(path)


def scenario_scatter_figure(report, train_errors, path) -> Path | None:
    """2-D view of the uncertainty set, samples and deployment scenarios
    (drawn only when exactly two coordinates carry uncertainty)."""
    uset = report.uset
    free = np.nonzero(uset.upper - uset.lower > 1e-9)[0]
    if free.size != 2:
        return None
    a, b = int(free[0]), int(free[1])
    fig, ax = plt.subplots(figsize=(4.8, 4.6))
    if train_errors is not None:
        ax.scatter(train_errors[:, a], train_errors[:, b], s=4, c="0.75",
                   lw=0, label="sampled errors")
    lo, hi = uset.lower, uset.upper
    box_x = [lo[a], hi[a], hi[a], lo[a], lo[a]]
    box_y = [lo[b], lo[b], hi[b], hi[b], lo[b]]
    ax.plot(box_x, box_y, "k-", lw=1.0, label="nodal box")
    for rho in (uset.rho_minus, uset.rho_plus):
        ax.plot([lo[a], hi[a]], [rho - lo[a], rho - hi[a]], "r-", lw=1.0)
    markers = {"DSW": "s", "EXT": "^", "CCG": "*", "VENUM": "o"}
    for name, m in report.methods.items():
        if m.deployment is None or not len(m.deployment):
            continue
        pts = np.array([e.xi for e in m.deployment])
        ax.scatter(pts[:, a], pts[:, b], s=90 if name == "CCG" else 45,
                   marker=markers.get(name, "x"), color=_color(name),
                   label=name, zorder=5)
    ax.set_xlabel(f"error at node {uset.node_ids[a]} [MW]")
    ax.set_ylabel(f"error at node {uset.node_ids[b]} [MW]")
    ax.set_title(f"{report.label}: uncertainty set and deployment scenarios")
    ax.legend(frameon=False, fontsize=7, loc="upper left")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
    return Path(path)
