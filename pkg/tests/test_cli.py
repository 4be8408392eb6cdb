import csv
import json

import numpy as np
import pytest

from mixlds import fileio
from mixlds.cli import EXIT_CONFIG, EXIT_INPUT, EXIT_IO, EXIT_MISSING_SUBSET, EXIT_STAGE, main
from mixlds.lds_core import LdsModel
from mixlds.simulate import MixedDataset, MixtureSpec, Trajectory, simulate_dataset


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


MINIMAL = {"generate": {"d": 2, "k": 1, "rho": 0.5}, "n_clustering": 7, "t_clustering": 10,
           "init_mode": "case0", "seed": 1, "pipeline": {"k": 1, "tau": 1.0}}


class TestSimulate:
    def test_minimal(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", MINIMAL)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        lines = (tmp_path / "o" / "dataset.jsonl").read_text().splitlines()
        assert len(lines) == 7
        rec = json.loads(lines[0])
        assert rec["subset"] == "clustering" and len(rec["states"]) == 11 and rec["states"][0] == [0.0, 0.0]
        manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
        assert manifest["command"] == "simulate" and len(manifest["config_hash"]) == 16
        assert set(manifest) == {"command", "config_hash", "seed", "inputs", "outputs", "wall_time_ms"}

    def test_uniform_labels_four_models(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", {"generate": {"d": 80, "k": 4, "rho": 0.5}, "n_clustering": 800,
                                              "t_clustering": 1, "seed": 2})
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0
        ds = fileio.read_dataset(tmp_path / "dataset.jsonl")
        frac = np.bincount([tr.label for tr in ds.clustering_set], minlength=4) / 800
        assert np.all(np.abs(frac - 0.25) < 0.06)

    def test_byte_identical(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", dict(MINIMAL, init_mode="case1", n_subspace=3, t_subspace=5))
        for name in ("a", "b"):
            assert main(["simulate", "--config", cfg, "--out", str(tmp_path / name)]) == 0
        for f in ("dataset.jsonl", "models.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        ha = json.loads((tmp_path / "a" / "manifest.json").read_text())["config_hash"]
        hb = json.loads((tmp_path / "b" / "manifest.json").read_text())["config_hash"]
        assert ha == hb

    def test_seed_flag_changes_hash_and_data(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", MINIMAL)
        main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
        main(["simulate", "--config", cfg, "--seed", "9", "--out", str(tmp_path / "b")])
        ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
        mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
        assert ma["config_hash"] != mb["config_hash"] and mb["seed"] == 9

    def test_explicit_models(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", {"models": [{"a": [[0.5]], "w": [[1.0]]}], "n_clustering": 2,
                                              "t_clustering": 3})
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0


class TestFit:
    def test_single_model(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", dict(MINIMAL, n_clustering=10, t_clustering=40, n_subspace=5,
                                                   t_subspace=20))
        main(["simulate", "--config", cfg, "--out", str(tmp_path)])
        code = main(["fit", "--config", cfg, "--dataset", str(tmp_path / "dataset.jsonl"), "--out", str(tmp_path / "f")])
        assert code == 0
        report = json.loads((tmp_path / "f" / "report.json").read_text())
        assert report["k_hat"] == 1 and len(report["models"]) == 1
        assert (tmp_path / "f" / "similarity.csv").exists()

    def test_perturbation_dataset_d40(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", {
            "generate": {"d": 40, "k": 2, "rho": 0.5, "construction": "identity_perturbation", "delta": 0.12},
            "n_clustering": 200, "t_clustering": 60, "seed": 0,
            "pipeline": {"k": 2, "tau": "separation", "sample_split": False}})
        main(["simulate", "--config", cfg, "--out", str(tmp_path)])
        assert main(["fit", "--config", cfg, "--dataset", str(tmp_path / "dataset.jsonl"),
                     "--out", str(tmp_path / "f"), "--workers", "2"]) == 0
        report = json.loads((tmp_path / "f" / "report.json").read_text())
        assert np.isfinite(report["clustering_error"])

    def test_missing_classification_exit_code(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", dict(MINIMAL, pipeline={"k": 1, "tau": 1.0, "refine": True,
                                                                   "use_subspaces": False}))
        main(["simulate", "--config", cfg, "--out", str(tmp_path)])
        code = main(["fit", "--config", cfg, "--dataset", str(tmp_path / "dataset.jsonl"), "--out", str(tmp_path)])
        assert code == EXIT_MISSING_SUBSET

    def test_stage_error_exit_code(self, tmp_path):
        # constant-zero data: the least-squares normal matrix is singular
        zeros = [Trajectory(np.zeros((9, 2)), 0, i, "clustering") for i in range(4)]
        fileio.write_dataset(tmp_path / "z.jsonl", MixedDataset([], zeros, []))
        code = main(["fit", "--dataset", str(tmp_path / "z.jsonl"), "--out", str(tmp_path), "--no-subspaces",
                     "--k", "1", "--tau", "0"])
        assert code == EXIT_STAGE


def export_csv(tmp_path, trajs):
    d = tmp_path / "csv"
    d.mkdir(exist_ok=True)
    for i, tr in enumerate(trajs):
        fileio.write_trajectory_csv(d / f"traj_{i:03d}.csv", tr, header=True)
    return d


class TestCluster:
    def test_duplicate_csv_all_ones(self, tmp_path, rng):
        tr = Trajectory(rng.standard_normal((21, 3)))
        d = export_csv(tmp_path, [tr, tr])
        assert main(["cluster", "--csv-dir", str(d), "--header", "--no-subspaces", "--tau", "0", "--k", "1",
                     "--out", str(tmp_path / "o")]) == 0
        assert read_csv(tmp_path / "o" / "similarity.csv") == [["1", "1"], ["1", "1"]]

    def test_round_trip_two_models(self, tmp_path):
        models = [LdsModel(0.1 * np.eye(3), np.eye(3)), LdsModel(0.8 * np.eye(3), 2 * np.eye(3))]
        ds = simulate_dataset(MixtureSpec(models, 0, 24, 0, 0, 1000, 0, seed=4))
        d = export_csv(tmp_path, ds.clustering_set)
        assert main(["cluster", "--csv-dir", str(d), "--header", "--no-subspaces", "--tau", "auto", "--k", "2",
                     "--out", str(tmp_path / "o")]) == 0
        labels = np.array([int(r[1]) for r in read_csv(tmp_path / "o" / "assignment.csv")[1:]])
        truth = np.array([tr.label for tr in ds.clustering_set])
        assert np.all(labels == truth) or np.all(labels == 1 - truth)
        dist = np.array(read_csv(tmp_path / "o" / "distance.csv"), dtype=float)
        same = truth[:, None] == truth[None, :]
        assert dist[same].max() < dist[~same].min()

    def test_empty_dir(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert main(["cluster", "--csv-dir", str(tmp_path / "empty"), "--out", str(tmp_path)]) == EXIT_INPUT

    def test_ragged_csv(self, tmp_path):
        d = tmp_path / "bad"
        d.mkdir()
        (d / "a.csv").write_text("1,2\n3\n")
        assert main(["cluster", "--csv-dir", str(d), "--out", str(tmp_path)]) == EXIT_INPUT


class TestOtherCommands:
    @pytest.fixture
    def simulated(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.json", {
            "generate": {"d": 3, "k": 2, "rho": 0.5, "construction": "identity_perturbation", "delta": 0.3},
            "n_subspace": 30, "n_clustering": 30, "n_classification": 20, "t_subspace": 40, "t_clustering": 100,
            "t_classification": 30, "seed": 5, "pipeline": {"k": 2, "tau": "separation"}})
        main(["simulate", "--config", cfg, "--out", str(tmp_path)])
        return tmp_path, cfg

    def test_subspace_estimate_classify_eval(self, simulated):
        path, cfg = simulated
        data = str(path / "dataset.jsonl")
        assert main(["subspace", "--config", cfg, "--dataset", data, "--out", str(path / "s")]) == 0
        bank = fileio.load_json(path / "s" / "subspaces.json")
        assert bank["r"] == 2 and len(bank["v"]) == 3
        assert main(["cluster", "--config", cfg, "--dataset", data, "--subspaces",
                     str(path / "s" / "subspaces.json"), "--out", str(path / "c")]) == 0
        assert main(["estimate", "--dataset", data, "--out", str(path / "e")]) == 0
        assert len(fileio.read_estimates(path / "e" / "models.json")) == 2
        assert main(["estimate", "--dataset", data, "--assignment", str(path / "c" / "assignment.csv"),
                     "--out", str(path / "e2")]) == 0
        assert main(["classify", "--dataset", data, "--models", str(path / "models.json"),
                     "--out", str(path / "k")]) == 0
        assert len(read_csv(path / "k" / "losses.csv")) == 21
        assert main(["fit", "--config", cfg, "--dataset", data, "--out", str(path / "f")]) == 0
        assert main(["eval", "--report", str(path / "f" / "report.json"), "--truth", str(path / "models.json"),
                     "--dataset", data, "--out", str(path / "v")]) == 0
        result = fileio.load_json(path / "v" / "eval.json")
        report = fileio.load_json(path / "f" / "report.json")
        assert result["clustering_error"] == report["clustering_error"]
        assert result["a_errors"] == report["a_errors"]

    def test_sweep(self, tmp_path):
        assert main(["sweep", "clustering_curve", "--param", "d=4", "--param", "t_clustering=[20]",
                     "--seeds", "0-1", "--out", str(tmp_path), "--workers", "1"]) == 0
        rows = read_csv(tmp_path / "sweep.csv")
        assert rows[0] == ["experiment", "x", "seed", "metric", "value"]
        assert len(rows) == 1 + 4 + 2


class TestExitCodes:
    def test_config_parse(self, tmp_path):
        (tmp_path / "bad.json").write_text("{nope")
        assert main(["simulate", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path)]) == EXIT_CONFIG
        cfg = write_cfg(tmp_path / "c.json", {"n_clustering": 2})
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG
        cfg = write_cfg(tmp_path / "c2.json", dict(MINIMAL))
        assert main(["sweep", "fig2", "--param", "d=notjson", "--out", str(tmp_path)]) == EXIT_CONFIG
        assert main(["fit", "--config", cfg, "--dataset", "x", "--tau", "huge", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_io(self, tmp_path):
        assert main(["fit", "--dataset", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path)]) == EXIT_IO
        assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == EXIT_IO

    def test_usage(self):
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 2

    def test_codes_distinct(self):
        assert len({0, EXIT_CONFIG, EXIT_IO, EXIT_MISSING_SUBSET, EXIT_STAGE, EXIT_INPUT, 1, 2}) == 8
