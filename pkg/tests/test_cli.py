from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from staterank.cli import main, read_success_table

SYNTH_ARGS = [
    "synth",
    "--frames", "120",
    "--channels", "48",
    "--noise", "0,3.0",
    "--seed", "3",
    "--name", "demo",
]


def run_synth(tmp_path: Path) -> list[Path]:
    out = tmp_path / "data"
    assert main(SYNTH_ARGS + ["--out", str(out)]) == 0
    dirs = sorted(p for p in out.iterdir() if p.is_dir())
    assert [d.name for d in dirs] == ["demo-noise0", "demo-noise3"]
    return dirs


def run_train(tmp_path: Path, dirs: list[Path], out_name: str = "runs") -> Path:
    out = tmp_path / out_name
    args = ["train", "--out", str(out), "--seed", "0"]
    for d in dirs:
        args += ["--dataset", str(d)]
    assert main(args) == 0
    return out


def write_success_table(path: Path, rows: list[str]) -> Path:
    path.write_text("\n".join(rows) + "\n")
    return path


class TestSynthCommand:
    def test_writes_valid_datasets(self, tmp_path):
        dirs = run_synth(tmp_path)
        from staterank.dataset import read_dataset

        for d in dirs:
            ds = read_dataset(d)
            assert len(ds.frames) == 120

    def test_invalid_noise_list(self, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path / "x"), "--noise", "1,0"]) == 1
        assert "ascending" in capsys.readouterr().err

    def test_unparseable_noise(self, tmp_path, capsys):
        assert main(["synth", "--out", str(tmp_path / "x"), "--noise", "a,b"]) == 1
        assert "--noise" in capsys.readouterr().err


class TestTrainCommand:
    def test_trains_and_writes_scores(self, tmp_path):
        dirs = run_synth(tmp_path)
        out = run_train(tmp_path, dirs)
        for name in ("demo-noise0", "demo-noise3"):
            payload = json.loads((out / name / "scores.json").read_text())
            assert payload["model_id"] == name
            assert set(payload["per_state"]["scores"]) == {
                "p_pose", "q_pose", "s_shape", "m_mat", "q_j", "p_ee", "l",
            }
            assert (out / name / "model" / "model.json").is_file()

    def test_missing_dataset_path_named(self, tmp_path, capsys):
        missing = tmp_path / "nope"
        code = main(
            ["train", "--dataset", str(missing), "--out", str(tmp_path / "o")]
        )
        assert code == 1
        assert str(missing) in capsys.readouterr().err

    def test_rerun_byte_identical_scores(self, tmp_path):
        dirs = run_synth(tmp_path)
        out1 = run_train(tmp_path, dirs, "runs1")
        out2 = run_train(tmp_path, dirs, "runs2")
        for name in ("demo-noise0", "demo-noise3"):
            a = (out1 / name / "scores.json").read_bytes()
            b = (out2 / name / "scores.json").read_bytes()
            assert a == b

    def test_thread_cap_respected(self, tmp_path, monkeypatch):
        monkeypatch.setenv("STATERANK_THREADS", "2")
        dirs = run_synth(tmp_path)
        out = run_train(tmp_path, dirs, "runs-threads")
        assert (out / "demo-noise0" / "scores.json").is_file()

    def test_bad_thread_cap(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("STATERANK_THREADS", "0")
        dirs = run_synth(tmp_path)
        assert main(
            ["train", "--dataset", str(dirs[0]), "--out", str(tmp_path / "o")]
        ) == 1
        assert "STATERANK_THREADS" in capsys.readouterr().err


class TestSuccessTable:
    def test_single_column(self, tmp_path):
        p = write_success_table(
            tmp_path / "sr.csv",
            ["model_id,success_rate", "a,0.5", "b,0.25"],
        )
        assert read_success_table(p) == {"a": 0.5, "b": 0.25}

    def test_per_task_columns_averaged(self, tmp_path):
        p = write_success_table(
            tmp_path / "sr.csv",
            ["model_id,t1,t2,t3", "a,0.2,0.4,0.6", "b,1.0,0.0,0.5"],
        )
        rates = read_success_table(p)
        assert rates["a"] == pytest.approx(0.4)
        assert rates["b"] == pytest.approx(0.5)

    def test_malformed_row_names_line(self, tmp_path):
        p = write_success_table(
            tmp_path / "sr.csv",
            ["model_id,success_rate", "a,0.5", "b,not-a-number"],
        )
        from staterank.cli import CliError

        with pytest.raises(CliError, match="line 3"):
            read_success_table(p)

    def test_row_without_value(self, tmp_path):
        p = write_success_table(tmp_path / "sr.csv", ["model_id,success_rate", "a"])
        from staterank.cli import CliError

        with pytest.raises(CliError, match="line 2"):
            read_success_table(p)


class TestRankCommand:
    def _prepare(self, tmp_path) -> tuple[Path, Path]:
        dirs = run_synth(tmp_path)
        out = run_train(tmp_path, dirs)
        table = write_success_table(
            tmp_path / "sr.csv",
            ["model_id,success_rate", "demo-noise0,0.9", "demo-noise3,0.4"],
        )
        return out, table

    def test_full_report(self, tmp_path):
        out, table = self._prepare(tmp_path)
        report_dir = tmp_path / "report"
        code = main(
            [
                "rank",
                "--scores", str(out),
                "--success-table", str(table),
                "--out", str(report_dir),
            ]
        )
        assert code == 0
        report = json.loads((report_dir / "report.json").read_text())
        assert set(report["models"]) == {"demo-noise0", "demo-noise3"}
        # the family's known ordering (less noise = higher success) is
        # recovered, so the report shows no rank violation
        assert report["mmrv"] == 0.0
        assert (report_dir / "report.txt").is_file()
        assert (report_dir / "score_matrix_raw.csv").is_file()
        assert (report_dir / "score_matrix_normalized.csv").is_file()

    def test_subset_emits_two_reports(self, tmp_path):
        out, table = self._prepare(tmp_path)
        report_dir = tmp_path / "report"
        code = main(
            [
                "rank",
                "--scores", str(out),
                "--success-table", str(table),
                "--out", str(report_dir),
                "--subset", "p_ee",
            ]
        )
        assert code == 0
        assert (report_dir / "report.json").is_file()
        assert (report_dir / "subset-p_ee" / "report.json").is_file()

    def test_unknown_subset_state(self, tmp_path, capsys):
        out, table = self._prepare(tmp_path)
        code = main(
            [
                "rank",
                "--scores", str(out),
                "--success-table", str(table),
                "--out", str(tmp_path / "r"),
                "--subset", "bogus",
            ]
        )
        assert code == 1
        assert "bogus" in capsys.readouterr().err

    def test_leave_one_out_csv(self, tmp_path):
        out, table = self._prepare(tmp_path)
        report_dir = tmp_path / "report"
        code = main(
            [
                "rank",
                "--scores", str(out),
                "--success-table", str(table),
                "--out", str(report_dir),
                "--leave-one-out",
            ]
        )
        assert code == 0
        lines = (report_dir / "leave_one_out.csv").read_text().strip().splitlines()
        assert lines[0] == "omitted_state,mmrv,pearson_r"
        assert len(lines) == 8

    def test_model_missing_from_table(self, tmp_path, capsys):
        out, _ = self._prepare(tmp_path)
        table = write_success_table(
            tmp_path / "sr2.csv", ["model_id,success_rate", "demo-noise0,0.9"]
        )
        code = main(
            [
                "rank",
                "--scores", str(out),
                "--success-table", str(table),
                "--out", str(tmp_path / "r"),
            ]
        )
        assert code == 1
        assert "demo-noise3" in capsys.readouterr().err

    def test_missing_success_table(self, tmp_path, capsys):
        out, _ = self._prepare(tmp_path)
        code = main(
            [
                "rank",
                "--scores", str(out),
                "--success-table", str(tmp_path / "absent.csv"),
                "--out", str(tmp_path / "r"),
            ]
        )
        assert code == 1
        assert "absent.csv" in capsys.readouterr().err


class TestTrainCollisions:
    def test_duplicate_dataset_names_rejected(self, tmp_path, capsys):
        dirs = run_synth(tmp_path)
        code = main(
            [
                "train",
                "--dataset", str(dirs[0]),
                "--dataset", str(dirs[0]),
                "--out", str(tmp_path / "o"),
            ]
        )
        assert code == 1
        assert "collide" in capsys.readouterr().err
