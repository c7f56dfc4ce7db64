import json

import pytest

from incident_featlab.cli import dispatch
from incident_featlab.datamodel import load_dataset


SMALL_CONFIG = {
    "seed": 7,
    "z": 12,
    "folds": 5,
    "pt_levels": [0, 1],
    "svm": {"grid": {"c": [10.0], "gamma": [0.05]}},
    "feature_learning": {
        "channels": {
            "vol_up": {"patch_dim": 5, "n_centroids": 6, "n_patches": 200},
            "occ_up": {"patch_dim": 3, "n_centroids": 4, "n_patches": 200},
            "vol_down": {"patch_dim": 5, "n_centroids": 6, "n_patches": 200},
            "occ_down": {"patch_dim": 3, "n_centroids": 4, "n_patches": 200},
        }
    },
    "synth": {"n_units": 10, "pre_len": 20, "inc_len": 8, "post_len": [0, 2]},
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CONFIG), encoding="utf-8")
    return path


@pytest.fixture
def data_paths(tmp_path, config_path):
    train = tmp_path / "train.csv"
    test = tmp_path / "test.csv"
    assert dispatch(["synth", "--config", str(config_path), "--out", str(train)]) == 0
    assert (
        dispatch(
            [
                "synth", "--config", str(config_path), "--out", str(test),
                "--seed", "1007", "--units", "5",
            ]
        )
        == 0
    )
    return train, test


class TestSynthCommand:
    def test_happy_path(self, tmp_path, config_path, capsys):
        out = tmp_path / "data.csv"
        code = dispatch(["synth", "--config", str(config_path), "--out", str(out)])
        assert code == 0
        assert out.exists()
        ds = load_dataset(out)
        assert len(ds.units) == 10
        manifest = json.loads((tmp_path / "data.manifest.json").read_text())
        assert manifest["command"] == "synth"
        assert manifest["config"]["seed"] == 7
        assert "data" in manifest["outputs"]

    def test_flag_overrides(self, tmp_path, config_path):
        out = tmp_path / "b.csv"
        code = dispatch(
            ["synth", "--config", str(config_path), "--out", str(out),
             "--units", "3", "--site", "zeta", "--seed", "99"]
        )
        assert code == 0
        ds = load_dataset(out)
        assert len(ds.units) == 3
        assert ds.unit_ids[0].startswith("zeta")


class TestLearnTrainEval:
    def test_pipeline_chain(self, tmp_path, config_path, data_paths, capsys):
        train_csv, test_csv = data_paths
        cb_path = tmp_path / "codebooks.json"
        assert (
            dispatch(
                ["learn", "--config", str(config_path), "--data", str(train_csv),
                 "--out", str(cb_path)]
            )
            == 0
        )
        doc = json.loads(cb_path.read_text())
        assert len(doc["codebooks"]) == 4

        model_path = tmp_path / "model.json"
        assert (
            dispatch(
                ["train", "--config", str(config_path), "--train", str(train_csv),
                 "--mode", "enhanced", "--pair", "4-2", "--codebooks", str(cb_path),
                 "--c", "10", "--gamma", "0.05", "--out", str(model_path)]
            )
            == 0
        )
        assert model_path.exists()
        assert (tmp_path / "model.manifest.json").exists()

        eval_dir = tmp_path / "eval_out"
        assert (
            dispatch(
                ["eval", "--config", str(config_path), "--model", str(model_path),
                 "--data", str(test_csv), "--mode", "enhanced", "--pair", "4-2",
                 "--codebooks", str(cb_path), "--out", str(eval_dir), "--no-figures"]
            )
            == 0
        )
        metrics_csv = (eval_dir / "metrics.csv").read_text().splitlines()
        assert metrics_csv[0] == "pt,dr,far,mttd,pi,cr"
        assert len(metrics_csv) == 3  # pt 0 and 1
        assert (eval_dir / "manifest.json").exists()

    def test_train_enhanced_without_codebooks_fails(self, tmp_path, config_path, data_paths, capsys):
        train_csv, _ = data_paths
        code = dispatch(
            ["train", "--config", str(config_path), "--train", str(train_csv),
             "--mode", "enhanced", "--pair", "4-2", "--c", "1", "--gamma", "0.1",
             "--out", str(tmp_path / "m.json")]
        )
        assert code == 1
        assert "codebooks" in capsys.readouterr().err

    def test_train_with_cv_picks_grid_point(self, tmp_path, config_path, data_paths, capsys):
        train_csv, _ = data_paths
        model_path = tmp_path / "cv_model.json"
        code = dispatch(
            ["train", "--config", str(config_path), "--train", str(train_csv),
             "--mode", "raw", "--pair", "2-1", "--out", str(model_path)]
        )
        assert code == 0
        assert "c=10.0" in capsys.readouterr().out


class TestGridCommand:
    def test_pair_table_and_figures(self, tmp_path, config_path, data_paths, capsys):
        train_csv, test_csv = data_paths
        outdir = tmp_path / "grid_out"
        code = dispatch(
            ["grid", "--config", str(config_path), "--train", str(train_csv),
             "--test", str(test_csv), "--pairs", "4-2,8-8,12-12",
             "--pt", "0", "--out", str(outdir)]
        )
        assert code == 0
        lines = (outdir / "pair_grid.csv").read_text().splitlines()
        assert lines[0].startswith("mode,pair,pt,")
        assert len(lines) == 4
        assert (outdir / "far_by_pair.png").exists()
        assert (outdir / "mttd_by_pair.png").exists()
        assert (outdir / "manifest.json").exists()
        assert "pair sweep" in capsys.readouterr().out

    def test_invalid_pair_exits_one(self, tmp_path, config_path, data_paths, capsys):
        train_csv, test_csv = data_paths
        code = dispatch(
            ["grid", "--config", str(config_path), "--train", str(train_csv),
             "--test", str(test_csv), "--pairs", "2-4", "--out", str(tmp_path / "g")]
        )
        assert code == 1


class TestE2eCommand:
    def test_raw_run_writes_reports(self, tmp_path, config_path, data_paths):
        train_csv, test_csv = data_paths
        outdir = tmp_path / "e2e_out"
        code = dispatch(
            ["e2e", "--config", str(config_path), "--train", str(train_csv),
             "--test", str(test_csv), "--mode", "raw", "--pair", "4-2",
             "--out", str(outdir), "--no-figures"]
        )
        assert code == 0
        lines = (outdir / "report.csv").read_text().splitlines()
        assert lines[0].startswith("mode,pair,pt,dr_mean")
        assert len(lines) == 3
        report = json.loads((outdir / "report.json").read_text())
        assert report["mode"] == "raw"
        assert report["feature_dim"] == 16

    def test_transfer_enhanced_run(self, tmp_path, config_path, data_paths):
        train_csv, test_csv = data_paths
        site_b = tmp_path / "site_b.csv"
        assert (
            dispatch(
                ["synth", "--config", str(config_path), "--out", str(site_b),
                 "--site", "site_b", "--seed", "404"]
            )
            == 0
        )
        outdir = tmp_path / "transfer_out"
        code = dispatch(
            ["e2e", "--config", str(config_path), "--train", str(train_csv),
             "--test", str(test_csv), "--unlabeled", str(site_b),
             "--mode", "transfer-enhanced", "--pair", "4-2",
             "--out", str(outdir), "--no-figures"]
        )
        assert code == 0
        report = json.loads((outdir / "report.json").read_text())
        assert report["mode"] == "transfer-enhanced"
        assert report["feature_dim"] == 16 + 20
        manifest = json.loads((outdir / "manifest.json").read_text())
        assert "unlabeled" in manifest["inputs"]

    def test_missing_file_exits_one_and_names_path(self, tmp_path, config_path, capsys):
        code = dispatch(
            ["e2e", "--config", str(config_path), "--train", str(tmp_path / "absent.csv"),
             "--test", str(tmp_path / "b.csv"), "--mode", "raw",
             "--out", str(tmp_path / "x")]
        )
        assert code == 1
        assert "absent.csv" in capsys.readouterr().err

    def test_reproducible_report_bytes(self, tmp_path, config_path, data_paths):
        train_csv, test_csv = data_paths
        args = [
            "e2e", "--config", str(config_path), "--train", str(train_csv),
            "--test", str(test_csv), "--mode", "raw", "--pair", "2-1",
            "--no-figures",
        ]
        assert dispatch(args + ["--out", str(tmp_path / "r1")]) == 0
        assert dispatch(args + ["--out", str(tmp_path / "r2")]) == 0
        assert (tmp_path / "r1/report.csv").read_bytes() == (tmp_path / "r2/report.csv").read_bytes()
        m1 = json.loads((tmp_path / "r1/manifest.json").read_text())
        m2 = json.loads((tmp_path / "r2/manifest.json").read_text())
        assert m1["inputs"] == m2["inputs"]
        assert m1["outputs"]["report_csv"]["sha256"] == m2["outputs"]["report_csv"]["sha256"]


class TestDispatch:
    def test_unknown_subcommand(self, capsys):
        assert dispatch(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_no_subcommand_prints_help(self, capsys):
        assert dispatch([]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_bad_config_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = dispatch(["synth", "--config", str(bad), "--out", str(tmp_path / "d.csv")])
        assert code == 1
        assert "JSON" in capsys.readouterr().err
