"""Experiment runner: declarative TOML/JSON configs in, CSV/JSON artifacts out.

    rlp <config.toml> [--output-dir DIR] [--threads N] [--seed-offset K]

A config holds exactly one [experiment] table with a `kind` selecting the
engine; see figures/ for one checked-in config per reproduced figure.  Runs
are deterministic: seeds are explicit, parallel units own keyed random
streams and results are aggregated in a fixed order, so re-running a config
reproduces byte-identical CSVs.  Exit status: 0 success, 2 config validation
failure (the message names the offending field), 1 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .artifacts import mean_trajectory, write_csv, write_manifest, write_trajectory
from .core import (
    AllCorrect,
    Breadcrumb,
    EpisodeSpec,
    NOrMore,
    OrderState,
    RewardProtocol,
    Subtask,
    Trajectory,
    expected_reward,
)
from .errors import ConfigError, LabError, ProtocolError
from .ode import GridSpec, IntegratorSpec, OdeConfig, chain_rule_rho, integrate
from .ode import rhs_all_correct, rhs_breadcrumb, rhs_n_or_more, rhs_spherical
from .phase import convergence_time, critical_penalty, find_fixed_points, flow_field, flow_outcome
from .schedules import ConstantEta, ConstantT, OptimalEta, OptimalT, Tabulated, run_schedule_comparison
from .sim import InitSpec, SimConfig, expected_update_oracle, simulate

_REQUIRED = object()


# ---------------------------------------------------------------------------
# Config access with field-path errors
# ---------------------------------------------------------------------------

class _Section:
    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ConfigError(path, f"expected a table, got {type(data).__name__}")
        self.data = data
        self.path = path

    def child(self, key: str) -> "_Section":
        if key not in self.data:
            raise ConfigError(f"{self.path}.{key}", "missing required table")
        return _Section(self.data[key], f"{self.path}.{key}")

    def optional_child(self, key: str) -> Optional["_Section"]:
        if key not in self.data:
            return None
        return _Section(self.data[key], f"{self.path}.{key}")

    def get(self, key: str, kind, default=_REQUIRED, choices=None):
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(f"{self.path}.{key}", "missing required field")
            return default
        value = self.data[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is int and isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
            raise ConfigError(
                f"{self.path}.{key}", f"expected {kind.__name__}, got {type(value).__name__}"
            )
        if choices is not None and value not in choices:
            raise ConfigError(f"{self.path}.{key}", f"must be one of {sorted(choices)}")
        return value

    def get_list(self, key: str, item_kind, default=_REQUIRED):
        if key not in self.data:
            if default is _REQUIRED:
                raise ConfigError(f"{self.path}.{key}", "missing required field")
            return default
        value = self.data[key]
        if not isinstance(value, list):
            raise ConfigError(f"{self.path}.{key}", "expected a list")
        out = []
        for i, item in enumerate(value):
            if item_kind is float and isinstance(item, int) and not isinstance(item, bool):
                item = float(item)
            if not isinstance(item, item_kind) or isinstance(item, bool):
                raise ConfigError(f"{self.path}.{key}[{i}]", f"expected {item_kind.__name__}")
            out.append(item)
        return out


def _axis(sec: _Section) -> np.ndarray:
    """An axis is either an explicit `values` list or a {min, max, n[, kind]}
    range (kind linear|log)."""
    if "values" in sec.data:
        return np.asarray(sec.get_list("values", float), dtype=float)
    lo = sec.get("min", float)
    hi = sec.get("max", float)
    n = sec.get("n", int)
    kind = sec.get("kind", str, default="linear", choices={"linear", "log"})
    if n < 1:
        raise ConfigError(f"{sec.path}.n", "must be >= 1")
    if kind == "log":
        if lo <= 0.0:
            raise ConfigError(f"{sec.path}.min", "log axis needs min > 0")
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def _build_episode(sec: _Section) -> EpisodeSpec:
    try:
        return EpisodeSpec(T=sec.get("T", int), gamma=sec.get("gamma", float, default=1.0))
    except LabError as exc:
        raise ConfigError(sec.path, str(exc)) from exc


def _build_protocol(sec: _Section, spec: EpisodeSpec) -> RewardProtocol:
    kind = sec.get(
        "type", str, choices={"all_correct", "n_or_more", "breadcrumb", "subtask"}
    )
    try:
        if kind == "all_correct":
            proto = AllCorrect(
                eta1=sec.get("eta1", float), eta2=sec.get("eta2", float, default=0.0)
            )
        elif kind == "n_or_more":
            proto = NOrMore(n=sec.get("n", int), eta1=sec.get("eta1", float))
        elif kind == "breadcrumb":
            proto = Breadcrumb(eta1=sec.get("eta1", float), beta=sec.get("beta", float, default=0.0))
        else:
            proto = Subtask(
                T0=sec.get("t0", int),
                r_sub=sec.get("r_sub", float),
                eta1=sec.get("eta1", float),
            )
    except LabError as exc:
        raise ConfigError(sec.path, str(exc)) from exc
    try:
        from .core import check_protocol

        check_protocol(proto, spec)
    except ProtocolError as exc:
        field = {"n_or_more": "n", "subtask": "t0"}.get(kind, "type")
        raise ConfigError(f"{sec.path}.{field}", str(exc)) from exc
    return proto


def _build_integrator(sec: Optional[_Section]) -> IntegratorSpec:
    if sec is None:
        return IntegratorSpec()
    try:
        return IntegratorSpec(
            method=sec.get("method", str, default="rk4", choices={"rk4", "adaptive"}),
            step=sec.get("step", float, default=0.1),
            atol=sec.get("atol", float, default=1e-9),
            rtol=sec.get("rtol", float, default=0.0),
        )
    except LabError as exc:
        raise ConfigError(sec.path, str(exc)) from exc


def _build_grid(sec: Optional[_Section]) -> GridSpec:
    if sec is None:
        return GridSpec()
    try:
        return GridSpec(
            kind=sec.get("kind", str, default="log", choices={"log", "linear"}),
            n_points=sec.get("n_points", int, default=400),
            alpha_min=sec.get("alpha_min", float, default=None),
        )
    except LabError as exc:
        raise ConfigError(sec.path, str(exc)) from exc


def _build_ode_config(
    exp: _Section, spec: EpisodeSpec, protocol: RewardProtocol
) -> OdeConfig:
    sec = exp.child("ode")
    try:
        return OdeConfig(
            spec=spec,
            protocol=protocol,
            r0=sec.get("r0", float, default=0.0),
            q0=sec.get("q0", float, default=1.0),
            alpha_max=sec.get("alpha_max", float),
            spherical=sec.get("spherical", bool, default=False),
            d_ref=sec.get("d_ref", float, default=900.0),
            integrator=_build_integrator(sec.optional_child("integrator")),
            grid=_build_grid(sec.optional_child("grid")),
        )
    except ConfigError:
        raise
    except LabError as exc:
        raise ConfigError(sec.path, str(exc)) from exc


def _build_sim_config(
    exp: _Section, spec: EpisodeSpec, protocol: RewardProtocol, seed: int
) -> SimConfig:
    sec = exp.child("simulate")
    try:
        return SimConfig(
            D=sec.get("D", int),
            spec=spec,
            protocol=protocol,
            n_episodes=sec.get("n_episodes", int),
            seed=seed,
            init=InitSpec(
                q0=sec.get("q0", float, default=1.0), rho0=sec.get("rho0", float, default=0.0)
            ),
            record_every=sec.get("record_every", int, default=None),
            spherical=sec.get("spherical", bool, default=False),
            policy=sec.get(
                "policy", str, default="deterministic", choices={"deterministic", "logistic"}
            ),
            input_mode=sec.get(
                "input_mode", str, default="gaussian", choices={"gaussian", "half_gaussian"}
            ),
        )
    except ConfigError:
        raise
    except LabError as exc:
        raise ConfigError(sec.path, str(exc)) from exc


# ---------------------------------------------------------------------------
# Comparison of simulated and integrated trajectories
# ---------------------------------------------------------------------------

_COMPARE_METRICS = ("rho", "Q", "expected_reward")


def compare(
    sim_trajectories: Sequence[Trajectory],
    ode_trajectory: Trajectory,
    metrics: Sequence[str] = _COMPARE_METRICS,
) -> dict[str, tuple[float, float]]:
    """Sup-norm and mean absolute deviation between the seed-averaged
    simulation and the integrated curve, per metric, on the integration grid
    restricted to the simulated alpha range."""
    sim_mean = (
        sim_trajectories[0] if len(sim_trajectories) == 1 else mean_trajectory(sim_trajectories)
    )
    lo = sim_mean.alpha[0]
    hi = sim_mean.alpha[-1]
    mask = (ode_trajectory.alpha >= lo) & (ode_trajectory.alpha <= hi)
    if not mask.any():
        raise ConfigError("compare", "simulated and integrated alpha ranges are disjoint")
    grid = ode_trajectory.alpha[mask]
    report = {}
    for metric in metrics:
        sim_interp = np.interp(grid, sim_mean.alpha, sim_mean.column(metric))
        gap = np.abs(sim_interp - ode_trajectory.column(metric)[mask])
        report[metric] = (float(gap.max()), float(gap.mean()))
    return report


# ---------------------------------------------------------------------------
# Kind runners (each returns the list of artifact paths it wrote)
# ---------------------------------------------------------------------------

def _threads_from(args_threads: Optional[int]) -> int:
    if args_threads is not None and args_threads > 0:
        return args_threads
    env = os.environ.get("RLP_THREADS", "")
    if env.strip():
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError("RLP_THREADS", f"not an integer: {env!r}") from exc
        if n > 0:
            return n
    return os.cpu_count() or 1


def _pmap(fn, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def _run_seed_trajectories(
    exp: _Section, spec, protocol, seeds: Sequence[int], threads: int
) -> list[Trajectory]:
    configs = [_build_sim_config(exp, spec, protocol, seed) for seed in seeds]
    return _pmap(simulate, configs, threads)


def _write_sim_artifacts(
    out: Path, seeds: Sequence[int], trajectories: list[Trajectory]
) -> list[Path]:
    paths = []
    for seed, traj in zip(seeds, trajectories):
        p = out / f"trajectory_seed{seed}.csv"
        write_trajectory(p, traj)
        paths.append(p)
    mean_path = out / "trajectory_mean.csv"
    write_trajectory(mean_path, mean_trajectory(trajectories))
    paths.append(mean_path)
    return paths


def _kind_simulate(exp: _Section, out: Path, seeds, threads) -> list[Path]:
    spec = _build_episode(exp.child("episode"))
    protocol = _build_protocol(exp.child("protocol"), spec)
    trajectories = _run_seed_trajectories(exp, spec, protocol, seeds, threads)
    return _write_sim_artifacts(out, seeds, trajectories)


def _kind_ode(exp: _Section, out: Path, seeds, threads) -> list[Path]:
    spec = _build_episode(exp.child("episode"))
    protocol = _build_protocol(exp.child("protocol"), spec)
    config = _build_ode_config(exp, spec, protocol)
    path = out / "trajectory_ode.csv"
    write_trajectory(path, integrate(config))
    return [path]


def _kind_compare(exp: _Section, out: Path, seeds, threads) -> list[Path]:
    spec = _build_episode(exp.child("episode"))
    protocol = _build_protocol(exp.child("protocol"), spec)
    trajectories = _run_seed_trajectories(exp, spec, protocol, seeds, threads)
    paths = _write_sim_artifacts(out, seeds, trajectories)
    ode_traj = integrate(_build_ode_config(exp, spec, protocol))
    ode_path = out / "trajectory_ode.csv"
    write_trajectory(ode_path, ode_traj)
    paths.append(ode_path)
    report = compare(trajectories, ode_traj)
    dev_path = out / "deviation.csv"
    write_csv(
        dev_path,
        ("metric", "sup_abs", "mean_abs"),
        [(m, sup, mad) for m, (sup, mad) in report.items()],
    )
    paths.append(dev_path)
    return paths


def _build_schedule_run(sec: _Section):
    mode = sec.get(
        "mode",
        str,
        choices={"constant_T", "constant_eta", "optimal_T", "optimal_eta", "tabulated"},
    )
    label = sec.get("label", str)
    try:
        if mode == "constant_T":
            sched = ConstantT(T=sec.get("T", int), eta=sec.get("eta", float, default=None))
        elif mode == "constant_eta":
            sched = ConstantEta(eta=sec.get("eta", float), T=sec.get("T", int, default=None))
        elif mode == "optimal_T":
            sched = OptimalT(
                eta=sec.get("eta", float),
                t_max=sec.get("t_max", int),
                t_min=sec.get("t_min", int, default=1),
                rho_floor=sec.get("rho_floor", float, default=1e-3),
            )
        elif mode == "optimal_eta":
            sched = OptimalEta(
                T=sec.get("T", int),
                eta_max=sec.get("eta_max", float),
                rho_floor=sec.get("rho_floor", float, default=1e-3),
            )
        else:
            rows = sec.data.get("points")
            if not isinstance(rows, list) or not rows:
                raise ConfigError(f"{sec.path}.points", "tabulated schedule needs rows")
            sched = Tabulated(
                points=tuple((float(r[0]), int(r[1]), float(r[2])) for r in rows)
            )
    except ConfigError:
        raise
    except (LabError, TypeError, IndexError) as exc:
        raise ConfigError(sec.path, str(exc)) from exc
    return label, sched


def _kind_schedule(exp: _Section, out: Path, seeds, threads) -> list[Path]:
    spec = _build_episode(exp.child("episode"))
    protocol = _build_protocol(exp.child("protocol"), spec)
    base = _build_ode_config(exp, spec, protocol)
    runs_sec = exp.data.get("runs")
    if not isinstance(runs_sec, list) or not runs_sec:
        raise ConfigError(f"{exp.path}.runs", "schedule experiments need at least one run")
    labelled = [
        _build_schedule_run(_Section(row, f"{exp.path}.runs[{i}]"))
        for i, row in enumerate(runs_sec)
    ]
    labels = [label for label, _ in labelled]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{exp.path}.runs", "run labels must be unique")
    runs = run_schedule_comparison(base, [sched for _, sched in labelled])
    paths = []
    trace_rows = []
    for label, run in zip(labels, runs):
        p = out / f"trajectory_{label}.csv"
        write_trajectory(p, run.trajectory)
        paths.append(p)
        tr = run.trace
        for k in range(len(tr["alpha"])):
            trace_rows.append(
                (label, tr["alpha"][k], tr["T"][k], tr["eta"][k], tr["rho"][k], tr["Q"][k])
            )
    trace_path = out / "schedule_trace.csv"
    write_csv(trace_path, ("label", "alpha", "T_opt", "eta_opt", "rho", "Q"), trace_rows)
    paths.append(trace_path)
    return paths


def _kind_phase(exp: _Section, out: Path, seeds, threads) -> list[Path]:
    sec = exp.child("phase")
    T = sec.get("T", int)
    Q = sec.get("Q", float, default=1.0)
    e1 = _axis(sec.child("eta1_grid"))
    e2 = _axis(sec.child("eta2_grid"))
    n_scan = sec.get("n_scan", int, default=20001)
    jobs = [(T, float(a), float(b), Q, n_scan) for a in e1 for b in e2]
    results = _pmap(_phase_cell_worker, jobs, threads)
    map_rows = []
    fp_rows = []
    for (Tv, a, b, Qv, _), fps in zip(jobs, results):
        map_rows.append((a, b, fps.label))
        for p in fps.points:
            fp_rows.append((a, b, Tv, p.rho, p.stability))
    map_path = out / "phase_map.csv"
    write_csv(map_path, ("eta1", "eta2", "label"), map_rows)
    fp_path = out / "fixed_points.csv"
    write_csv(fp_path, ("eta1", "eta2", "T", "rho_fix", "stability"), fp_rows)
    return [map_path, fp_path]


def _phase_cell_worker(job):
    T, a, b, Q, n_scan = job
    return find_fixed_points(T, a, b, Q, n_scan=n_scan)


def _kind_flow(exp: _Section, out: Path, seeds, threads) -> list[Path]:
    sec = exp.child("flow")
    T = sec.get("T", int)
    eta1 = sec.get("eta1", float)
    eta2 = sec.get("eta2", float)
    alpha_max = sec.get("alpha_max", float, default=1e4)
    outcome_eps = sec.get("outcome_eps", float, default=0.05)
    rho0 = sec.get("rho0", float, default=0.0)
    q0 = sec.get("q0", float, default=1.0)
    rho_values = _axis(sec.child("rho_grid"))
    q_values = _axis(sec.child("q_grid"))
    field = flow_field(
        T,
        eta1,
        eta2,
        rho_values,
        q_values,
        alpha_max=alpha_max,
        outcome_eps=outcome_eps,
        rho0=rho0,
        q0=q0,
    )
    rows = []
    for i, r in enumerate(field.rho_values):
        for j, q in enumerate(field.q_values):
            rows.append((r, q, field.drho[i, j], field.dq[i, j]))
    field_path = out / "flow_field.csv"
    write_csv(field_path, ("rho", "Q", "drho", "dQ"), rows)
    traj_path = out / "flow_trajectory.csv"
    write_trajectory(traj_path, field.trajectory)
    paths = [field_path, traj_path]

    map_sec = sec.optional_child("map")
    if map_sec is not None:
        m1 = _axis(map_sec.child("eta1_grid"))
        m2 = _axis(map_sec.child("eta2_grid"))
        jobs = [
            (T, float(a), float(b), alpha_max, outcome_eps, rho0, q0) for a in m1 for b in m2
        ]
        outcomes = _pmap(_flow_outcome_worker, jobs, threads)
        rows = [
            (a, b, label, final_rho)
            for (_, a, b, *_), (label, final_rho) in zip(jobs, outcomes)
        ]
        map_path = out / "success_map.csv"
        write_csv(map_path, ("eta1", "eta2", "outcome", "final_rho"), rows)
        paths.append(map_path)
    return paths


def _flow_outcome_worker(job):
    T, a, b, alpha_max, eps, rho0, q0 = job
    label, final_rho, _ = flow_outcome(
        T, a, b, alpha_max=alpha_max, outcome_eps=eps, rho0=rho0, q0=q0
    )
    return label, final_rho


def _kind_convergence(exp: _Section, out: Path, seeds, threads) -> list[Path]:
    sec = exp.child("convergence")
    T = sec.get("T", int)
    eta1 = sec.get("eta1", float)
    Q = sec.get("Q", float, default=1.0)
    rho0 = sec.get("rho0", float, default=0.0)
    fraction = sec.get("fraction", float, default=0.99)
    alpha_max = sec.get("alpha_max", float, default=1e7)
    mode = sec.get("eta2_mode", str, default="absolute", choices={"absolute", "critical_offsets"})
    paths = []
    if mode == "critical_offsets":
        crit_tol = sec.get("crit_tol", float, default=1e-7)
        crit_eta2_max = sec.get("crit_eta2_max", float, default=2.0)
        crit_coarse = sec.get("crit_coarse", int, default=65)
        offsets = sorted(sec.get_list("offsets", float), reverse=True)
        cp = critical_penalty(T, eta1, Q, tol=crit_tol, eta2_max=crit_eta2_max, coarse=crit_coarse)
        crit_path = out / "critical.json"
        crit_path.write_text(
            json.dumps(
                {
                    "eta_crit": cp.eta_crit,
                    "bracket_lo": cp.bracket_lo,
                    "bracket_hi": cp.bracket_hi,
                    "tol": cp.tol,
                },
                indent=2,
            )
            + "\n",
            encoding="utf-8",
        )
        paths.append(crit_path)
        etas = []
        for i, d in enumerate(offsets):
            e2 = cp.eta_crit - d
            if e2 < 0.0:
                raise ConfigError(f"{sec.path}.offsets[{i}]", f"offset {d} exceeds eta_crit")
            etas.append((e2, d))
    else:
        etas = [(e2, math.nan) for e2 in sec.get_list("eta2_list", float)]
    jobs = [(T, eta1, e2, Q, rho0, fraction, alpha_max) for e2, _ in etas]
    results = _pmap(_convergence_worker, jobs, threads)
    rows = [
        (e2, delta, res.t, res.alpha, res.rho_star)
        for (e2, delta), res in zip(etas, results)
    ]
    conv_path = out / "convergence.csv"
    write_csv(conv_path, ("eta2", "delta", "t", "alpha", "rho_star"), rows)
    paths.append(conv_path)
    return paths


def _convergence_worker(job):
    T, eta1, e2, Q, rho0, fraction, alpha_max = job
    return convergence_time(T, eta1, e2, Q, rho0, fraction, alpha_max=alpha_max)


def _closed_form_rates(protocol, spec, state: OrderState):
    if isinstance(protocol, AllCorrect):
        dR, dQ = rhs_all_correct(state, spec.T, protocol.eta1, protocol.eta2)
        drho = rhs_spherical(state.rho, state.Q, spec.T, protocol.eta1, protocol.eta2)
    elif isinstance(protocol, NOrMore):
        dR, dQ = rhs_n_or_more(state, spec.T, protocol.n, protocol.eta1)
        drho = chain_rule_rho(state, dR, dQ)
    elif isinstance(protocol, Breadcrumb):
        dR, dQ = rhs_breadcrumb(state, spec.T, protocol.eta1, protocol.beta)
        drho = chain_rule_rho(state, dR, dQ)
    else:
        return None
    return dR, dQ, drho


def _kind_oracle(exp: _Section, out: Path, seeds, threads) -> list[Path]:
    sec = exp.child("oracle")
    spec = _build_episode(exp.child("episode"))
    protocol = _build_protocol(exp.child("protocol"), spec)
    D = sec.get("D", int, default=1000)
    n_samples = sec.get("n_samples", int, default=1_000_000)
    rho_list = sec.get_list("rho_list", float)
    q_list = sec.get_list("q_list", float)
    input_mode = sec.get(
        "input_mode", str, default="gaussian", choices={"gaussian", "half_gaussian"}
    )
    base_seed = seeds[0] if seeds else 0
    states = [(r, q) for r in rho_list for q in q_list]
    jobs = [
        (OrderState(R=r * math.sqrt(q), Q=q), spec, protocol, D, n_samples, base_seed + i, input_mode)
        for i, (r, q) in enumerate(states)
    ]
    estimates = _pmap(_oracle_worker, jobs, threads)
    rows = []
    for (r, q), est in zip(states, estimates):
        state = OrderState(R=r * math.sqrt(q), Q=q)
        closed = _closed_form_rates(protocol, spec, state)
        dR_c, dQ_c, drho_c = closed if closed is not None else (math.nan,) * 3
        reward_c = expected_reward(protocol, spec, state.rho)
        rows.append(
            (
                r,
                q,
                est.dR,
                est.dR_se,
                dR_c,
                est.dQ,
                est.dQ_se,
                dQ_c,
                est.drho,
                est.drho_se,
                drho_c,
                est.reward,
                est.reward_se,
                reward_c,
                est.n_samples,
            )
        )
    path = out / "oracle.csv"
    write_csv(
        path,
        (
            "rho",
            "Q",
            "dR_mc",
            "dR_se",
            "dR_closed",
            "dQ_mc",
            "dQ_se",
            "dQ_closed",
            "drho_mc",
            "drho_se",
            "drho_closed",
            "reward_mc",
            "reward_se",
            "reward_closed",
            "n_samples",
        ),
        rows,
    )
    return [path]


def _oracle_worker(job):
    state, spec, protocol, D, n_samples, seed, input_mode = job
    return expected_update_oracle(
        state, spec, protocol, D=D, n_samples=n_samples, seed=seed, input_mode=input_mode
    )


_KINDS = {
    "simulate": _kind_simulate,
    "ode": _kind_ode,
    "compare": _kind_compare,
    "schedule": _kind_schedule,
    "phase": _kind_phase,
    "flow": _kind_flow,
    "convergence": _kind_convergence,
    "oracle": _kind_oracle,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def load_config(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(str(path), "config file not found")
    text = path.read_bytes()
    try:
        if path.suffix == ".json":
            return json.loads(text.decode("utf-8"))
        return tomllib.loads(text.decode("utf-8"))
    except (json.JSONDecodeError, tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(str(path), f"could not parse config: {exc}") from exc


def _merge(base: dict, override: dict) -> dict:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def run(
    config: dict,
    output_dir: Optional[Path] = None,
    threads: Optional[int] = None,
    seed_offset: int = 0,
) -> Path:
    """Execute one experiment config; returns the output directory.

    An optional [[experiment.variants]] list re-runs the experiment with the
    given overrides merged in, one subdirectory per variant label; figures
    with several parameter values per panel are driven this way.
    """
    root = _Section(config, "")
    if set(config.keys()) != {"experiment"}:
        raise ConfigError("", "config must contain exactly the [experiment] table")
    exp = root.child("experiment")
    kind = exp.get("kind", str, choices=set(_KINDS))
    out = Path(output_dir) if output_dir is not None else Path(exp.get("output_dir", str))
    out.mkdir(parents=True, exist_ok=True)
    seeds = [s + seed_offset for s in exp.get_list("seeds", int, default=[0])]
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"{exp.path}.seeds", "seeds must be unique")
    n_threads = _threads_from(threads)

    variants = exp.data.get("variants")
    start = time.perf_counter()
    if variants is None:
        artifacts = _KINDS[kind](exp, out, seeds, n_threads)
    else:
        if not isinstance(variants, list) or not variants:
            raise ConfigError(f"{exp.path}.variants", "expected a non-empty list of tables")
        base_data = {k: v for k, v in exp.data.items() if k != "variants"}
        artifacts = []
        labels = set()
        for i, row in enumerate(variants):
            vsec = _Section(row, f"{exp.path}.variants[{i}]")
            label = vsec.get("label", str)
            if label in labels:
                raise ConfigError(f"{vsec.path}.label", f"duplicate variant label {label!r}")
            labels.add(label)
            overrides = {k: v for k, v in row.items() if k != "label"}
            merged = _Section(_merge(base_data, overrides), exp.path)
            sub = out / label
            sub.mkdir(parents=True, exist_ok=True)
            artifacts.extend(_KINDS[kind](merged, sub, seeds, n_threads))
    wall = time.perf_counter() - start

    resolved = {
        "experiment": config["experiment"],
        "resolved": {
            "output_dir": str(out),
            "seeds": seeds,
            "threads": n_threads,
            "kind": kind,
        },
    }
    write_manifest(out, resolved, artifacts, wall, __version__)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="rlp", description="Run one declarative experiment and write CSV/JSON artifacts."
    )
    parser.add_argument("config", type=Path, help="TOML (or JSON) experiment file")
    parser.add_argument("--output-dir", type=Path, default=None, help="override output directory")
    parser.add_argument(
        "--threads", type=int, default=None, help="worker processes (default: RLP_THREADS or all cores)"
    )
    parser.add_argument(
        "--seed-offset", type=int, default=0, help="added to every seed in the config"
    )
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        out = run(config, args.output_dir, args.threads, args.seed_offset)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote artifacts to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
