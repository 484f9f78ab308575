"""End-to-end CLI tests on generated CSV and IDX files."""

import gzip
import struct

import numpy as np
import pytest
import yaml

from synpil.cli import main
from tests.conftest import make_blobs


def write_blobs_csv(path, n_per_class: int, seed: int) -> None:
    x, t = make_blobs(n_per_class, seed)
    labels = np.argmax(t, axis=0)
    rows = [
        f"{float(x[0, i])!r},{float(x[1, i])!r},c{labels[i]}" for i in range(x.shape[1])
    ]
    path.write_text("\n".join(rows) + "\n")


def write_config(path, train_csv, report=None, figures=True, **synergy) -> None:
    cfg = {
        "data": {"format": "csv", "train": str(train_csv)},
        "model": {"layers": [6, 4]},
        "fusion": {"n_neurons": 32},
        "synergy": {
            "n_subsystems": 2,
            "sampling_ratio": 0.8,
            "base_seed": 3,
            **synergy,
        },
    }
    if report is not None:
        cfg["output"] = {"report": str(report), "figures": figures}
    path.write_text(yaml.safe_dump(cfg))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A trained model with its config, data, and report."""
    root = tmp_path_factory.mktemp("cli")
    train_csv = root / "train.csv"
    write_blobs_csv(train_csv, 100, seed=1234)
    config = root / "run.yaml"
    report = root / "report.tsv"
    write_config(config, train_csv, report=report)
    model = root / "model.stpl"
    rc = main(["train", "--config", str(config), "--out", str(model)])
    assert rc == 0
    return root


class TestTrain:
    def test_outputs_exist(self, workdir):
        assert (workdir / "model.stpl").is_file()
        assert (workdir / "report.tsv").is_file()
        assert (workdir / "report_probe_accuracy.png").is_file()
        assert (workdir / "report_member_accuracy.png").is_file()

    def test_report_shows_perfect_validation(self, workdir):
        from synpil.report import parse_report

        parsed = parse_report(workdir / "report.tsv")
        assert int(parsed["n_members"]) == 2
        assert float(parsed["final_val_accuracy"]) == 1.0

    def test_stdout_stays_clean(self, workdir, tmp_path, capsys):
        config = tmp_path / "run.yaml"
        write_config(config, workdir / "train.csv")
        rc = main(["train", "--config", str(config), "--out", str(tmp_path / "m.stpl")])
        captured = capsys.readouterr()
        assert rc == 0
        assert captured.out == ""
        assert "validation accuracy" in captured.err

    def test_figures_can_be_disabled(self, workdir, tmp_path):
        config = tmp_path / "run.yaml"
        write_config(
            config, workdir / "train.csv", report=tmp_path / "r.tsv", figures=False
        )
        rc = main(["train", "--config", str(config), "--out", str(tmp_path / "m.stpl")])
        assert rc == 0
        assert (tmp_path / "r.tsv").is_file()
        assert not (tmp_path / "r_probe_accuracy.png").exists()

    def test_bad_sampling_ratio_names_the_key(self, workdir, tmp_path, capsys):
        config = tmp_path / "bad.yaml"
        write_config(config, workdir / "train.csv", sampling_ratio=1.5)
        rc = main(["train", "--config", str(config), "--out", str(tmp_path / "m.stpl")])
        captured = capsys.readouterr()
        assert rc == 1
        assert "sampling_ratio" in captured.err
        assert not (tmp_path / "m.stpl").exists()

    def test_missing_config_file(self, tmp_path, capsys):
        rc = main(
            ["train", "--config", str(tmp_path / "no.yaml"), "--out", str(tmp_path / "m")]
        )
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_member_failure_names_the_member(self, workdir, tmp_path, capsys):
        config = tmp_path / "tight.yaml"
        cfg = yaml.safe_load((workdir / "run.yaml").read_text())
        cfg["fusion"] = {"n_neurons": 4096, "memory_limit_gib": 0.00001}
        cfg["output"] = {}
        config.write_text(yaml.safe_dump(cfg))
        rc = main(["train", "--config", str(config), "--out", str(tmp_path / "m.stpl")])
        captured = capsys.readouterr()
        assert rc == 1
        assert "subsystem 0" in captured.err


class TestDeterminism:
    def test_same_seed_reproduces_model_bytes(self, workdir, tmp_path):
        config = tmp_path / "run.yaml"
        write_config(config, workdir / "train.csv")
        a, b = tmp_path / "a.stpl", tmp_path / "b.stpl"
        assert main(["train", "--config", str(config), "--out", str(a)]) == 0
        assert main(["train", "--config", str(config), "--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_base_seed_override_changes_bytes_and_reproduces(self, workdir, tmp_path):
        config = tmp_path / "run.yaml"
        write_config(config, workdir / "train.csv")
        base = tmp_path / "base.stpl"
        s9a, s9b = tmp_path / "s9a.stpl", tmp_path / "s9b.stpl"
        assert main(["train", "--config", str(config), "--out", str(base)]) == 0
        for out in (s9a, s9b):
            rc = main(
                ["train", "--config", str(config), "--base-seed", "9", "--out", str(out)]
            )
            assert rc == 0
        assert s9a.read_bytes() == s9b.read_bytes()
        assert s9a.read_bytes() != base.read_bytes()

    def test_worker_count_does_not_change_bytes(self, workdir, tmp_path):
        config = tmp_path / "run.yaml"
        write_config(config, workdir / "train.csv")
        one, two = tmp_path / "w1.stpl", tmp_path / "w2.stpl"
        assert main(
            ["train", "--config", str(config), "--workers", "1", "--out", str(one)]
        ) == 0
        assert main(
            ["train", "--config", str(config), "--workers", "2", "--out", str(two)]
        ) == 0
        assert one.read_bytes() == two.read_bytes()


class TestEval:
    def test_train_set_scores_100(self, workdir, capsys):
        rc = main(
            [
                "eval",
                "--model",
                str(workdir / "model.stpl"),
                "--test",
                str(workdir / "train.csv"),
            ]
        )
        captured = capsys.readouterr()
        assert rc == 0
        lines = captured.out.splitlines()
        assert lines[0] == "accuracy: 100.00"
        assert lines[1].split() == ["true\\pred", "c0", "c1"]
        assert lines[2].split() == ["c0", "100", "0"]
        assert lines[3].split() == ["c1", "0", "100"]

    def test_fresh_test_set(self, workdir, tmp_path, capsys):
        test_csv = tmp_path / "test.csv"
        write_blobs_csv(test_csv, 50, seed=777)
        rc = main(
            ["eval", "--model", str(workdir / "model.stpl"), "--test", str(test_csv)]
        )
        captured = capsys.readouterr()
        assert rc == 0
        accuracy = float(captured.out.splitlines()[0].split()[1])
        assert accuracy >= 99.0

    def test_label_column_by_name_with_header(self, workdir, tmp_path, capsys):
        x, t = make_blobs(10, seed=42)
        labels = np.argmax(t, axis=0)
        rows = ["x,species,y"]
        rows += [
            f"{float(x[0, i])!r},c{labels[i]},{float(x[1, i])!r}" for i in range(x.shape[1])
        ]
        test_csv = tmp_path / "named.csv"
        test_csv.write_text("\n".join(rows) + "\n")
        rc = main(
            [
                "eval",
                "--model",
                str(workdir / "model.stpl"),
                "--test",
                str(test_csv),
                "--label-column",
                "species",
                "--has-header",
            ]
        )
        captured = capsys.readouterr()
        assert rc == 0
        assert captured.out.startswith("accuracy: 100.00")

    def test_wrong_dimension_fails_with_both_sizes(self, workdir, tmp_path, capsys):
        test_csv = tmp_path / "wide.csv"
        test_csv.write_text("1.0,2.0,3.0,c0\n4.0,5.0,6.0,c1\n")
        rc = main(
            ["eval", "--model", str(workdir / "model.stpl"), "--test", str(test_csv)]
        )
        captured = capsys.readouterr()
        assert rc == 1
        assert "3 features" in captured.err
        assert "expects 2" in captured.err

    def test_unknown_class_in_test_data(self, workdir, tmp_path, capsys):
        test_csv = tmp_path / "alien.csv"
        test_csv.write_text("1.0,2.0,c9\n")
        rc = main(
            ["eval", "--model", str(workdir / "model.stpl"), "--test", str(test_csv)]
        )
        captured = capsys.readouterr()
        assert rc == 1
        assert "c9" in captured.err

    def test_idx_input_requires_label_file(self, workdir, tmp_path, capsys):
        images = tmp_path / "imgs.idx"
        images.write_bytes(
            struct.pack(">IIII", 0x00000803, 1, 2, 2) + bytes(4)
        )
        rc = main(
            ["eval", "--model", str(workdir / "model.stpl"), "--test", str(images)]
        )
        captured = capsys.readouterr()
        assert rc == 1
        assert "--test-labels" in captured.err


class TestPredict:
    def test_one_line_per_sample(self, workdir, tmp_path):
        features = tmp_path / "in.csv"
        features.write_text("-4.0,0.0\n4.0,0.0\n-3.5,1.0\n")
        out = tmp_path / "out.txt"
        rc = main(
            [
                "predict",
                "--model",
                str(workdir / "model.stpl"),
                "--input",
                str(features),
                "--output",
                str(out),
            ]
        )
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 3
        assert set(lines) <= {"c0", "c1"}

    def test_labels_match_cluster_sides(self, workdir, tmp_path):
        from synpil import persist
        from synpil.synergy import predict as predict_scores

        sm = persist.load(workdir / "model.stpl")
        left, _ = predict_scores(sm, np.array([[-4.0], [0.0]]))
        right, _ = predict_scores(sm, np.array([[4.0], [0.0]]))
        features = tmp_path / "in.csv"
        features.write_text("-4.0,0.0\n4.0,0.0\n")
        out = tmp_path / "out.txt"
        main(
            [
                "predict",
                "--model",
                str(workdir / "model.stpl"),
                "--input",
                str(features),
                "--output",
                str(out),
            ]
        )
        assert out.read_text().splitlines() == [left[0], right[0]]

    def test_gzipped_idx_input_is_sniffed(self, workdir, tmp_path, capsys):
        images = tmp_path / "imgs.idx.gz"
        payload = struct.pack(">IIII", 0x00000803, 1, 2, 2) + bytes(4)
        images.write_bytes(gzip.compress(payload))
        rc = main(
            [
                "predict",
                "--model",
                str(workdir / "model.stpl"),
                "--input",
                str(images),
                "--output",
                str(tmp_path / "out.txt"),
            ]
        )
        captured = capsys.readouterr()
        assert rc == 1
        assert "4 features" in captured.err
        assert "expects 2" in captured.err

    def test_missing_model_file(self, tmp_path, capsys):
        rc = main(
            [
                "predict",
                "--model",
                str(tmp_path / "no.stpl"),
                "--input",
                str(tmp_path / "in.csv"),
                "--output",
                str(tmp_path / "out.txt"),
            ]
        )
        assert rc == 1
        assert "error:" in capsys.readouterr().err
