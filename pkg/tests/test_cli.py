import json
import math
from pathlib import Path

import numpy as np
import pytest

from rlplab.artifacts import (
    format_float,
    mean_trajectory,
    read_trajectory,
    sha256_file,
    write_trajectory,
)
from rlplab.cli import compare, load_config, main, run
from rlplab.core import AllCorrect, EpisodeSpec
from rlplab.errors import ConfigError
from rlplab.sim import SimConfig, simulate

DATA = Path(__file__).parent / "data"


def _toml(tmp_path, text):
    path = tmp_path / "exp.toml"
    path.write_text(text)
    return path


SMALL_COMPARE = """
[experiment]
kind = "compare"
output_dir = "{out}"
seeds = [7, 8]

[experiment.episode]
T = 3

[experiment.protocol]
type = "all_correct"
eta1 = 1.0

[experiment.simulate]
D = 60
n_episodes = 3000
record_every = 100

[experiment.ode]
alpha_max = 50.0
[experiment.ode.grid]
kind = "linear"
n_points = 40
"""


class TestConfigValidation:
    def test_n_exceeding_T_names_field(self, tmp_path, capsys):
        cfg = _toml(
            tmp_path,
            """
[experiment]
kind = "ode"
output_dir = "%s"

[experiment.episode]
T = 3

[experiment.protocol]
type = "n_or_more"
eta1 = 1.0
n = 5

[experiment.ode]
alpha_max = 10.0
"""
            % tmp_path,
        )
        code = main([str(cfg)])
        captured = capsys.readouterr()
        assert code == 2
        assert "protocol.n" in captured.err

    def test_missing_experiment_table(self, tmp_path, capsys):
        cfg = _toml(tmp_path, "[something]\nx = 1\n")
        assert main([str(cfg)]) == 2

    def test_wrong_type_reports_path(self, tmp_path):
        with pytest.raises(ConfigError, match="experiment.episode.T"):
            run(
                {
                    "experiment": {
                        "kind": "ode",
                        "output_dir": str(tmp_path),
                        "episode": {"T": "twelve"},
                        "protocol": {"type": "all_correct", "eta1": 1.0},
                        "ode": {"alpha_max": 1.0},
                    }
                }
            )

    def test_unknown_kind(self, tmp_path):
        with pytest.raises(ConfigError, match="experiment.kind"):
            run({"experiment": {"kind": "frobnicate", "output_dir": str(tmp_path)}})

    def test_missing_config_file(self, tmp_path, capsys):
        assert main([str(tmp_path / "absent.toml")]) == 2

    def test_json_config_accepted(self, tmp_path):
        payload = {
            "experiment": {
                "kind": "ode",
                "output_dir": str(tmp_path / "o"),
                "episode": {"T": 2},
                "protocol": {"type": "all_correct", "eta1": 1.0},
                "ode": {"alpha_max": 5.0, "grid": {"kind": "linear", "n_points": 5}},
            }
        }
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(payload))
        assert main([str(path)]) == 0
        assert (tmp_path / "o" / "trajectory_ode.csv").exists()


class TestRunCompare:
    def test_artifacts_and_manifest(self, tmp_path):
        cfg = _toml(tmp_path, SMALL_COMPARE.format(out=tmp_path / "out"))
        assert main([str(cfg), "--threads", "2"]) == 0
        out = tmp_path / "out"
        manifest = json.loads((out / "manifest.json").read_text())
        expected = {
            "trajectory_seed7.csv",
            "trajectory_seed8.csv",
            "trajectory_mean.csv",
            "trajectory_ode.csv",
            "deviation.csv",
        }
        assert set(manifest["artifacts"]) == expected
        for name, digest in manifest["artifacts"].items():
            assert sha256_file(out / name) == digest

    def test_reruns_are_byte_identical_across_thread_counts(self, tmp_path):
        cfg = load_config(DATA / "determinism_compare.toml")
        out1 = run(cfg, output_dir=tmp_path / "a", threads=1)
        out2 = run(cfg, output_dir=tmp_path / "b", threads=2)
        m1 = json.loads((out1 / "manifest.json").read_text())["artifacts"]
        m2 = json.loads((out2 / "manifest.json").read_text())["artifacts"]
        assert m1 == m2

    def test_seed_offset_shifts_artifacts(self, tmp_path):
        cfg = _toml(tmp_path, SMALL_COMPARE.format(out=tmp_path / "out"))
        main([str(cfg), "--seed-offset", "100"])
        assert (tmp_path / "out" / "trajectory_seed107.csv").exists()


class TestCompareFunction:
    def _traj(self):
        return simulate(
            SimConfig(
                D=50,
                spec=EpisodeSpec(T=3),
                protocol=AllCorrect(eta1=1.0),
                n_episodes=2000,
                seed=1,
                record_every=100,
            )
        )

    def test_identical_inputs_zero_deviation(self):
        traj = self._traj()
        ode_like = traj  # same alpha grid and columns
        report = compare([traj], ode_like)
        for sup, mad in report.values():
            assert sup == 0.0 and mad == 0.0

    def test_disjoint_ranges_error(self):
        from rlplab.core import Trajectory

        traj = self._traj()
        far = Trajectory(
            alpha=traj.alpha + 10_000.0,
            t=traj.t,
            R=traj.R,
            Q=traj.Q,
            rho=traj.rho,
            eps_g=traj.eps_g,
            expected_reward=traj.expected_reward,
            empirical_reward=traj.empirical_reward,
        )
        with pytest.raises(ConfigError):
            compare([traj], far)


class TestArtifacts:
    def test_trajectory_roundtrip(self, tmp_path):
        traj = simulate(
            SimConfig(
                D=40,
                spec=EpisodeSpec(T=2),
                protocol=AllCorrect(eta1=1.0),
                n_episodes=500,
                seed=2,
                record_every=50,
            )
        )
        path = tmp_path / "t.csv"
        write_trajectory(path, traj)
        back = read_trajectory(path)
        for col in traj.COLUMNS:
            assert np.array_equal(traj.column(col), back.column(col), equal_nan=True)

    def test_float_formatting(self):
        assert format_float(math.pi) == "3.1415926535897931"
        assert format_float(float("nan")) == ""
        assert float(format_float(0.1)) == 0.1

    def test_mean_requires_matching_grids(self):
        a = simulate(
            SimConfig(
                D=40,
                spec=EpisodeSpec(T=2),
                protocol=AllCorrect(eta1=1.0),
                n_episodes=400,
                seed=3,
                record_every=50,
            )
        )
        b = simulate(
            SimConfig(
                D=40,
                spec=EpisodeSpec(T=2),
                protocol=AllCorrect(eta1=1.0),
                n_episodes=400,
                seed=4,
                record_every=100,
            )
        )
        with pytest.raises(ConfigError):
            mean_trajectory([a, b])


class TestOtherKinds:
    def test_oracle_kind(self, tmp_path):
        cfg = {
            "experiment": {
                "kind": "oracle",
                "output_dir": str(tmp_path / "o"),
                "seeds": [9],
                "episode": {"T": 3},
                "protocol": {"type": "all_correct", "eta1": 1.0, "eta2": 0.2},
                "oracle": {
                    "D": 200,
                    "n_samples": 20_000,
                    "rho_list": [0.0, 0.5],
                    "q_list": [1.0],
                },
            }
        }
        out = run(cfg, threads=2)
        rows = (out / "oracle.csv").read_text().strip().splitlines()
        assert len(rows) == 3  # header + 2 states
        header = rows[0].split(",")
        z_cols = []
        for line in rows[1:]:
            rec = dict(zip(header, line.split(",")))
            z_cols.append(abs(float(rec["dR_mc"]) - float(rec["dR_closed"])) / float(rec["dR_se"]))
        assert max(z_cols) < 6.0

    def test_schedule_kind_trace(self, tmp_path):
        cfg = {
            "experiment": {
                "kind": "schedule",
                "output_dir": str(tmp_path / "s"),
                "episode": {"T": 1},
                "protocol": {"type": "all_correct", "eta1": 1.0},
                "ode": {
                    "alpha_max": 30.0,
                    "spherical": True,
                    "grid": {"kind": "linear", "n_points": 30},
                },
                "runs": [
                    {"label": "opt", "mode": "optimal_T", "eta": 1.0, "t_max": 100},
                    {"label": "T2", "mode": "constant_T", "T": 2},
                ],
            }
        }
        out = run(cfg, threads=1)
        assert (out / "trajectory_opt.csv").exists()
        assert (out / "trajectory_T2.csv").exists()
        trace = (out / "schedule_trace.csv").read_text().splitlines()
        assert trace[0] == "label,alpha,T_opt,eta_opt,rho,Q"
        labels = {line.split(",")[0] for line in trace[1:]}
        assert labels == {"opt", "T2"}

    def test_duplicate_run_labels_rejected(self, tmp_path):
        cfg = {
            "experiment": {
                "kind": "schedule",
                "output_dir": str(tmp_path / "s"),
                "episode": {"T": 1},
                "protocol": {"type": "all_correct", "eta1": 1.0},
                "ode": {"alpha_max": 5.0, "spherical": True},
                "runs": [
                    {"label": "x", "mode": "constant_T", "T": 2},
                    {"label": "x", "mode": "constant_T", "T": 3},
                ],
            }
        }
        with pytest.raises(ConfigError, match="unique"):
            run(cfg, threads=1)

    def test_phase_kind(self, tmp_path):
        cfg = {
            "experiment": {
                "kind": "phase",
                "output_dir": str(tmp_path / "p"),
                "phase": {
                    "T": 13,
                    "Q": 1.0,
                    "n_scan": 10001,
                    "eta1_grid": {"values": [1.0]},
                    "eta2_grid": {"min": 0.0, "max": 1.0, "n": 9},
                },
            }
        }
        out = run(cfg, threads=2)
        pm = (out / "phase_map.csv").read_text().splitlines()
        assert pm[0] == "eta1,eta2,label"
        assert len(pm) == 10
        fp = (out / "fixed_points.csv").read_text().splitlines()
        assert fp[0] == "eta1,eta2,T,rho_fix,stability"
        assert len(fp) >= 10

    def test_variants(self, tmp_path):
        cfg = {
            "experiment": {
                "kind": "ode",
                "output_dir": str(tmp_path / "v"),
                "episode": {"T": 2},
                "protocol": {"type": "all_correct", "eta1": 1.0},
                "ode": {"alpha_max": 5.0, "grid": {"kind": "linear", "n_points": 4}},
                "variants": [
                    {"label": "a"},
                    {"label": "b", "protocol": {"type": "all_correct", "eta1": 2.0}},
                ],
            }
        }
        out = run(cfg, threads=1)
        a = read_trajectory(out / "a" / "trajectory_ode.csv")
        b = read_trajectory(out / "b" / "trajectory_ode.csv")
        assert b.Q[-1] > a.Q[-1]
        manifest = json.loads((out / "manifest.json").read_text())
        assert {"a/trajectory_ode.csv", "b/trajectory_ode.csv"} <= set(manifest["artifacts"])

    def test_rlp_threads_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("RLP_THREADS", "1")
        cfg = {
            "experiment": {
                "kind": "ode",
                "output_dir": str(tmp_path / "e"),
                "episode": {"T": 2},
                "protocol": {"type": "all_correct", "eta1": 1.0},
                "ode": {"alpha_max": 2.0, "grid": {"kind": "linear", "n_points": 3}},
            }
        }
        out = run(cfg)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["resolved"]["threads"] == 1
