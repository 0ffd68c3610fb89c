"""Figure renderers.

Each renderer loads every input CSV up front (so a bad artifact can never
leave a partial image behind), then draws with a pinned style.  Simulated
curves are solid, integrated curves are dashed, throughout.  Output images
are a pure function of the input CSVs: fixed size, fixed fonts, no
timestamps or version stamps.
"""

from __future__ import annotations

import math
import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import EmptyDataError, SchemaError, load_table, load_trajectory  # noqa: E402

_RC = {
    "figure.figsize": (6.4, 4.8),
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.25,
    "legend.fontsize": 7,
    "svg.hashsalt": "rlplab",
}

_ODE_KW = dict(linestyle="--", color="black", linewidth=1.1)


def _save(fig, out: Path) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, metadata={"Software": None})
    plt.close(fig)


def _numeric_suffix(name: str) -> float:
    match = re.search(r"(\d+)$", name)
    return float(match.group(1)) if match else math.inf


def _variant_dirs(data: Path, prefix: str) -> list[Path]:
    dirs = [p for p in data.iterdir() if p.is_dir() and p.name.startswith(prefix)]
    if not dirs:
        raise FileNotFoundError(f"no {prefix}* variant directories under {data}")
    return sorted(dirs, key=lambda p: _numeric_suffix(p.name))


def _colors(n: int):
    cmap = plt.get_cmap("viridis")
    return [cmap(x) for x in np.linspace(0.0, 0.92, max(n, 2))]


def render_fig1c(data: Path, out: Path) -> None:
    sim = load_trajectory(data / "trajectory_mean.csv")
    ode = load_trajectory(data / "trajectory_ode.csv")
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.plot(sim["t"], sim["expected_reward"], color="tab:blue", label="sim")
        ax.plot(ode["t"], ode["expected_reward"], **_ODE_KW, label="ode")
        ax.set_xlabel("time, t")
        ax.set_ylabel("expected reward")
        ax.legend(loc="upper left")
        for rect, column in (((0.58, 0.56, 0.3, 0.3), "Q"), ((0.58, 0.14, 0.3, 0.3), "R")):
            inset = fig.add_axes(rect)
            inset.plot(sim["t"], sim[column], color="tab:blue", linewidth=0.9)
            inset.plot(ode["t"], ode[column], **_ODE_KW)
            inset.set_ylabel(column, fontsize=7)
            inset.tick_params(labelsize=6)
        _save(fig, out)


def _render_family(
    data: Path,
    out: Path,
    prefix: str,
    ycolumn: str,
    with_ode: bool,
    sim_required: bool = True,
) -> None:
    dirs = _variant_dirs(data, prefix)
    loaded = []
    for d in dirs:
        sim_path = d / "trajectory_mean.csv"
        ode_path = d / "trajectory_ode.csv"
        sim = load_trajectory(sim_path) if (sim_required or sim_path.exists()) else None
        ode = load_trajectory(ode_path) if with_ode else None
        loaded.append((d.name, sim, ode))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for color, (name, sim, ode) in zip(_colors(len(loaded)), loaded):
            if sim is not None:
                ax.plot(sim["t"], sim[ycolumn], color=color, label=name)
            if ode is not None:
                label = None if sim is not None else name
                ax.plot(ode["t"], ode[ycolumn], linestyle="--", color=color if sim is None else "black",
                        linewidth=1.0, label=label)
        ax.set_xscale("log")
        ax.set_xlabel("time, t")
        ax.set_ylabel("normalised overlap" if ycolumn == "rho" else ycolumn.replace("_", " "))
        ax.legend(loc="best")
        _save(fig, out)


def render_fig2a(data: Path, out: Path) -> None:
    _render_family(data, out, "eta2_", "rho", with_ode=True)


def render_fig2b(data: Path, out: Path) -> None:
    _render_family(data, out, "t0_", "rho", with_ode=False)


def render_fig2c(data: Path, out: Path) -> None:
    _render_family(data, out, "beta_", "rho", with_ode=True)


def render_fig5a(data: Path, out: Path) -> None:
    _render_family(data, out, "T", "expected_reward", with_ode=True)


def render_fig5b(data: Path, out: Path) -> None:
    _render_family(data, out, "T", "rho", with_ode=True)


def render_fig5c(data: Path, out: Path) -> None:
    # ODE curves are the primary content here; simulated overlays are drawn
    # when their artifacts exist
    dirs = _variant_dirs(data, "n")
    loaded = []
    for d in dirs:
        ode = load_trajectory(d / "trajectory_ode.csv")
        sim_path = d / "trajectory_mean.csv"
        sim = load_trajectory(sim_path) if sim_path.exists() else None
        loaded.append((d.name, sim, ode))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for color, (name, sim, ode) in zip(_colors(len(loaded)), loaded):
            ax.plot(ode["t"], ode["rho"], linestyle="--", color=color, label=name)
            if sim is not None:
                ax.plot(sim["t"], sim["rho"], color=color)
        ax.set_xscale("log")
        ax.set_xlabel("time, t")
        ax.set_ylabel("normalised overlap")
        ax.legend(loc="upper left")
        _save(fig, out)


def _render_schedule_family(data: Path, out: Path, optimal_label: str, constant_prefix: str) -> None:
    opt = load_trajectory(data / f"trajectory_{optimal_label}.csv")
    constants = sorted(
        (p for p in data.glob(f"trajectory_{constant_prefix}*.csv")),
        key=lambda p: _numeric_suffix(p.stem),
    )
    if not constants:
        raise FileNotFoundError(f"no trajectory_{constant_prefix}*.csv under {data}")
    loaded = [(p.stem.removeprefix("trajectory_"), load_trajectory(p)) for p in constants]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for color, (name, traj) in zip(_colors(len(loaded)), loaded):
            ax.plot(traj["t"], traj["rho"], color=color, label=name)
        ax.plot(opt["t"], opt["rho"], **_ODE_KW, label=optimal_label)
        ax.set_xlabel("time, t")
        ax.set_ylabel("normalised overlap")
        ax.legend(loc="lower right")
        _save(fig, out)


def render_fig3a(data: Path, out: Path) -> None:
    _render_schedule_family(data, out, "optimal_T", "T")


def render_fig3b(data: Path, out: Path) -> None:
    _render_schedule_family(data, out, "optimal_eta", "eta_")


def _trace_groups(data: Path) -> dict:
    trace = load_table(data / "schedule_trace.csv", ("label", "alpha", "T_opt", "eta_opt", "rho", "Q"))
    groups = {}
    for i, label in enumerate(trace["label"]):
        groups.setdefault(label, []).append(i)
    return trace, groups


def render_fig3c(data: Path, out: Path) -> None:
    trace, groups = _trace_groups(data)
    t_labels = sorted(label for label in groups if label.startswith("opt_T_"))
    eta_labels = sorted(label for label in groups if label.startswith("opt_eta_"))
    with plt.rc_context(_RC):
        fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 6.4))
        for color, label in zip(_colors(len(t_labels)), t_labels):
            idx = groups[label]
            top.plot(trace["alpha"][idx] * 900.0, trace["T_opt"][idx], color=color, label=label)
        for color, label in zip(_colors(len(eta_labels)), eta_labels):
            idx = groups[label]
            bottom.plot(trace["alpha"][idx] * 900.0, trace["eta_opt"][idx], color=color, label=label)
        for ax, ylabel in ((top, "T"), (bottom, "eta")):
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_ylabel(ylabel)
            ax.legend(loc="best")
        bottom.set_xlabel("time, t")
        _save(fig, out)


def render_fig4a(data: Path, out: Path) -> None:
    table = load_table(data / "fixed_points.csv", ("eta1", "eta2", "T", "rho_fix", "stability"))
    stability = np.array(table["stability"])
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        stable = stability == "stable"
        ax.plot(
            table["eta2"][stable], table["rho_fix"][stable], ".", markersize=2.5,
            color="tab:blue", label="stable",
        )
        if (~stable).any():
            ax.plot(
                table["eta2"][~stable], table["rho_fix"][~stable], ".", markersize=2.5,
                color="tab:orange", label="unstable",
            )
        ax.set_xlabel("eta2")
        ax.set_ylabel("fixed-point overlap")
        ax.set_ylim(0.0, 1.0)
        ax.legend(loc="center right")
        _save(fig, out)


def _render_phase_map(data: Path, out: Path) -> None:
    table = load_table(data / "phase_map.csv", ("eta1", "eta2", "label"))
    e1 = np.unique(table["eta1"])
    e2 = np.unique(table["eta2"])
    z = np.zeros((len(e2), len(e1)))
    index1 = {v: i for i, v in enumerate(e1)}
    index2 = {v: i for i, v in enumerate(e2)}
    for a, b, label in zip(table["eta1"], table["eta2"], table["label"]):
        z[index2[b], index1[a]] = 1.0 if label == "hybrid_hard" else 0.0
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        cmap = matplotlib.colors.ListedColormap(["#2ca02c", "#ff7f0e"])
        ax.pcolormesh(e1, e2, z, cmap=cmap, vmin=0.0, vmax=1.0, shading="nearest")
        ax.set_xlabel("eta1")
        ax.set_ylabel("eta2")
        _save(fig, out)


def render_fig4b(data: Path, out: Path) -> None:
    _render_phase_map(data, out)


def render_fig4c(data: Path, out: Path) -> None:
    _render_phase_map(data, out)


def render_appendix_d_critical(data: Path, out: Path) -> None:
    table = load_table(data / "convergence.csv", ("eta2", "delta", "t", "alpha", "rho_star"))
    order = np.argsort(table["eta2"])
    with plt.rc_context(_RC):
        fig, (left, right) = plt.subplots(1, 2, figsize=(8.8, 4.2))
        left.semilogy(table["eta2"][order], table["t"][order], "o-", markersize=3)
        left.set_xlabel("eta2")
        left.set_ylabel("time t to 0.99 of fixed point")
        good = table["delta"] > 0.0
        right.loglog(table["delta"][good], table["t"][good], "o", markersize=3)
        right.set_xlabel("|eta2 - eta_crit|")
        right.set_ylabel("t")
        _save(fig, out)


def render_appendix_d_flow(data: Path, out: Path) -> None:
    panels = []
    for name in ("a_eta2_0", "b_eta2_005", "c_eta2_0045"):
        field = load_table(data / name / "flow_field.csv", ("rho", "Q", "drho", "dQ"))
        traj = load_trajectory(data / name / "flow_trajectory.csv")
        panels.append((name, field, traj))
    success = load_table(
        data / "d_success_map" / "success_map.csv", ("eta1", "eta2", "outcome", "final_rho")
    )
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(2, 2, figsize=(8.8, 8.0))
        for ax, (name, field, traj) in zip(axes.flat, panels):
            rho = field["rho"]
            q = field["Q"]
            norm = np.hypot(field["drho"], field["dQ"]) + 1e-300
            ax.quiver(
                rho, q, field["drho"] / norm, field["dQ"] / norm,
                angles="xy", width=2.4e-3, scale=42.0, color="0.55",
            )
            ax.plot(traj["rho"], traj["Q"], color="tab:red", linewidth=1.4)
            ax.set_yscale("log")
            ax.set_title(name, fontsize=8)
            ax.set_xlabel("rho")
            ax.set_ylabel("Q")
        ax = axes.flat[3]
        e1 = np.unique(success["eta1"])
        e2 = np.unique(success["eta2"])
        z = np.zeros((len(e1), len(e2)))
        i1 = {v: i for i, v in enumerate(e1)}
        i2 = {v: i for i, v in enumerate(e2)}
        for a, b, outcome in zip(success["eta1"], success["eta2"], success["outcome"]):
            z[i1[a], i2[b]] = 1.0 if outcome == "aligned" else 0.0
        cmap = matplotlib.colors.ListedColormap(["#d62728", "#2ca02c"])
        ax.pcolormesh(e2, e1, z, cmap=cmap, vmin=0.0, vmax=1.0, shading="nearest")
        ax.set_xlabel("eta2")
        ax.set_ylabel("eta1")
        ax.set_title("d_success_map", fontsize=8)
        _save(fig, out)


def render_appendix_d_unconstrained(data: Path, out: Path) -> None:
    trace, groups = _trace_groups(data)
    eta_labels = sorted(label for label in groups if label.startswith("opt_eta_"))
    t_labels = sorted(label for label in groups if label.startswith("opt_T_"))
    with plt.rc_context(_RC):
        fig, (left, right) = plt.subplots(1, 2, figsize=(8.8, 4.2))
        for color, label in zip(_colors(len(eta_labels)), eta_labels):
            idx = groups[label]
            eff = trace["eta_opt"][idx] / np.sqrt(trace["Q"][idx])
            left.loglog(trace["alpha"][idx] * 900.0, eff, color=color, label=label)
        left.set_xlabel("time, t")
        left.set_ylabel("eta / sqrt(Q)")
        left.legend(loc="best")
        for color, label in zip(_colors(len(t_labels)), t_labels):
            idx = groups[label]
            right.loglog(trace["alpha"][idx] * 900.0, trace["T_opt"][idx], color=color, label=label)
        right.set_xlabel("time, t")
        right.set_ylabel("T")
        right.legend(loc="best")
        _save(fig, out)
