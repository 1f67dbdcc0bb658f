import json
import time

import numpy as np
import pytest

from set2graph.cli import load_or_generate, main, read_metrics_csv
from set2graph.config import ConfigError, config_from_dict, parse_config, with_seed
from set2graph.render import edge_classes, render_triangulation_svg


class TestConfig:
    def test_minimal_gets_task_defaults(self):
        cfg = config_from_dict({"task": "delaunay", "seed": 4})
        assert (cfg.data.train_size, cfg.data.val_size, cfg.data.test_size) == (5000, 500, 500)
        assert cfg.data.n_range == [20, 20]
        assert cfg.model.variant == "s2g" and cfg.model.d_in == 2
        assert cfg.model.seed == 4 and cfg.train.seed == 4

    def test_hull_defaults(self):
        cfg = config_from_dict({"task": "hull_spherical", "seed": 0})
        assert cfg.model.variant == "s2g_k3" and cfg.model.d_in == 3
        assert cfg.data.knn_k == 10 and cfg.data.n_range == [30, 30]
        assert cfg.train.select_metric == "auc"

    def test_partition_split_ratio(self):
        cfg = config_from_dict({"task": "partition", "seed": 0})
        sizes = np.array([cfg.data.train_size, cfg.data.val_size, cfg.data.test_size])
        np.testing.assert_allclose(sizes / sizes.sum(), [0.6, 0.2, 0.2])
        assert cfg.model.d_in == cfg.data.d_in

    def test_typo_names_key(self):
        with pytest.raises(ConfigError, match=r"train\.learning_rat"):
            config_from_dict({"task": "delaunay", "seed": 0, "train": {"learning_rat": 0.1}})

    def test_unknown_top_level(self):
        with pytest.raises(ConfigError, match="epochs"):
            config_from_dict({"task": "delaunay", "seed": 0, "epochs": 3})

    def test_negative_lr(self):
        with pytest.raises(ConfigError, match="learning_rate"):
            config_from_dict({"task": "delaunay", "seed": 0, "train": {"learning_rate": -1e-3}})

    @pytest.mark.parametrize("missing", ["task", "seed"])
    def test_required(self, missing):
        raw = {"task": "delaunay", "seed": 0}
        del raw[missing]
        with pytest.raises(ConfigError, match=missing):
            config_from_dict(raw)

    def test_bad_enum(self):
        with pytest.raises(ConfigError, match="model.*pooling"):
            config_from_dict({"task": "delaunay", "seed": 0, "model": {"pooling": "median"}})

    def test_variant_task_mismatch(self):
        with pytest.raises(ConfigError, match="model.variant"):
            config_from_dict({"task": "delaunay", "seed": 0, "model": {"variant": "s2g_k3"}})
        with pytest.raises(ConfigError, match="model.variant"):
            config_from_dict({"task": "hull_gaussian", "seed": 0, "model": {"variant": "s2g"}})

    def test_wrong_type(self):
        with pytest.raises(ConfigError, match="data.train_size"):
            config_from_dict({"task": "delaunay", "seed": 0, "data": {"train_size": "many"}})

    def test_zero_split(self):
        with pytest.raises(ConfigError, match="val_size"):
            config_from_dict({"task": "delaunay", "seed": 0, "data": {"val_size": 0}})

    def test_siam_never_centered(self):
        cfg = config_from_dict({"task": "delaunay", "seed": 0, "model": {"variant": "siam"}})
        assert not cfg.model.center
        with pytest.raises(ConfigError, match="center"):
            config_from_dict({"task": "delaunay", "seed": 0, "model": {"variant": "siam", "center": True}})

    def test_seed_override(self):
        cfg = with_seed(config_from_dict({"task": "delaunay", "seed": 0}), 9)
        assert cfg.seed == cfg.model.seed == cfg.train.seed == 9

    def test_parse_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text('{"task": "partition", "seed": 1}')
        assert parse_config(p).task == "partition"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            parse_config(p)


PTS = np.array([[0.1, 0.1], [0.9, 0.2], [0.5, 0.8]])
TRI = ~np.eye(3, dtype=bool)


class TestRender:
    def test_perfect_single_class(self):
        svg = render_triangulation_svg(PTS, TRI, TRI)
        assert 'class="agree"' in svg
        assert "true_only" not in svg and "pred_only" not in svg
        assert svg.count("<line") == 3

    def test_empty_prediction(self):
        svg = render_triangulation_svg(PTS, TRI, np.zeros((3, 3), dtype=bool))
        assert 'class="true_only"' in svg and "agree" not in svg and "pred_only" not in svg

    def test_three_classes(self):
        truth = np.zeros((3, 3), dtype=bool)
        truth[0, 1] = truth[1, 0] = truth[1, 2] = truth[2, 1] = True
        pred = np.zeros((3, 3), dtype=bool)
        pred[0, 1] = pred[1, 0] = pred[0, 2] = pred[2, 0] = True
        assert edge_classes(truth, pred) == {"agree": [(0, 1)], "true_only": [(1, 2)], "pred_only": [(0, 2)]}

    def test_deterministic_and_viewport(self):
        a = render_triangulation_svg(PTS, TRI, TRI)
        assert a == render_triangulation_svg(PTS.copy(), TRI.copy(), TRI.copy())
        assert 'width="512" height="512"' in a

    def test_y_axis_up(self):
        svg = render_triangulation_svg(np.array([[0.0, 0.0], [1.0, 1.0]]), np.zeros((2, 2), bool), np.zeros((2, 2), bool))
        assert '<circle cx="16.00" cy="496.00"' in svg
        assert '<circle cx="496.00" cy="16.00"' in svg

    def test_rejects_3d(self):
        with pytest.raises(ValueError):
            render_triangulation_svg(np.zeros((3, 3)), TRI, TRI)


def smoke_config(tmp_path, **over):
    raw = {
        "task": "delaunay",
        "seed": 2,
        "data": {"train_size": 200, "val_size": 40, "test_size": 40},
        "train": {"max_epochs": 3},
        "out": str(tmp_path / "out"),
    }
    raw.update(over)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(raw))
    return path


class TestCli:
    def test_smoke_end_to_end(self, tmp_path):
        cfg = smoke_config(tmp_path)
        t0 = time.perf_counter()
        assert main(["all", "--config", str(cfg), "-q"]) == 0
        assert time.perf_counter() - t0 < 120
        out = tmp_path / "out"
        for name in ("model.ckpt", "metrics.csv", "summary.json", "training_curves.png"):
            assert (out / name).exists()
        lines = (out / "metrics.csv").read_text().splitlines()
        assert lines[0] == "epoch,split,loss,f1,precision,recall,accuracy,ri,ari,auc"
        assert lines[-1].split(",")[1] == "test"
        assert len(lines) == 1 + 2 * 3 + 1
        summary = json.loads((out / "summary.json").read_text())
        assert summary["parameter_count"] > 0 and "wall_time_s" in summary
        assert len(list((out / "renders").glob("*_compare.svg"))) == 8

        # rerun against the cache: identical metrics, nothing regenerated
        first = (out / "metrics.csv").read_bytes()
        cache_files = {p: p.stat().st_mtime_ns for p in (out / "cache").rglob("*.gz")}
        assert main(["all", "--config", str(cfg), "-q"]) == 0
        assert (out / "metrics.csv").read_bytes() == first
        assert cache_files == {p: p.stat().st_mtime_ns for p in (out / "cache").rglob("*.gz")}

        # evaluate on its own reloads the checkpoint and reproduces the test row
        assert main(["evaluate", "--config", str(cfg), "-q"]) == 0
        assert (out / "metrics.csv").read_bytes() == first
        rows = read_metrics_csv(out / "metrics.csv")
        assert rows[-1].ri is None and rows[-1].auc is not None

    def test_dry_run_writes_nothing(self, tmp_path, capsys):
        cfg = smoke_config(tmp_path)
        assert main(["all", "--config", str(cfg), "--dry-run"]) == 0
        assert "task: delaunay" in capsys.readouterr().out
        assert not (tmp_path / "out").exists()

    def test_overrides(self, tmp_path, capsys):
        cfg = smoke_config(tmp_path)
        assert main(["generate", "--config", str(cfg), "--seed", "5", "--out", str(tmp_path / "o2"), "--dry-run"]) == 0
        text = capsys.readouterr().out
        assert "seed: 5" in text and str(tmp_path / "o2") in text

    def test_validation_error_exit_1(self, tmp_path):
        cfg = smoke_config(tmp_path, train={"learning_rate": -1.0})
        assert main(["all", "--config", str(cfg)]) == 1

    def test_bad_subcommand_exit_1(self, tmp_path):
        assert main(["fly", "--config", str(smoke_config(tmp_path))]) == 1

    def test_missing_file_exit_1(self, tmp_path):
        assert main(["all", "--config", str(tmp_path / "nope.json")]) == 1

    def test_corrupt_cache_exit_2(self, tmp_path):
        cfg = smoke_config(tmp_path)
        assert main(["generate", "--config", str(cfg), "-q"]) == 0
        gz = next((tmp_path / "out" / "cache").rglob("train.jsonl.gz"))
        gz.write_bytes(gz.read_bytes()[:-10] + b"0123456789")
        assert main(["generate", "--config", str(cfg), "-q"]) == 2

    def test_evaluate_without_checkpoint_exit_2(self, tmp_path):
        cfg = smoke_config(tmp_path)
        assert main(["evaluate", "--config", str(cfg), "-q"]) == 2

    def test_cached_datasets_reload_valid(self, tmp_path):
        cfg = config_from_dict(
            {"task": "hull_gaussian", "seed": 1, "data": {"train_size": 3, "val_size": 2, "test_size": 2, "n_range": [8, 10], "knn_k": 4}}
        )
        first = load_or_generate(cfg, tmp_path)
        again = load_or_generate(cfg, tmp_path)  # read_jsonl validates every record
        for split in first:
            for a, b in zip(first[split], again[split]):
                assert np.array_equal(a.points, b.points)
                assert np.array_equal(a.triplet_labels, b.triplet_labels)
