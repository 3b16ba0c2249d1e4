from pathlib import Path

import pytest

from pivotmarl.cli import (
    RunConfig,
    build_run_config,
    main,
    parse_seeds,
    parse_target,
    report,
    run,
    summary_string,
)
from pivotmarl.training import TrainerConfig


def tiny_config(out_dir, **kw):
    trainer = TrainerConfig(
        learner=kw.pop("learner", "vdn"),
        target_estimator=kw.pop("target_estimator", "1step"),
        memory_scheme=kw.pop("memory_scheme", "off"),
        batch_size=8,
        buffer_capacity=64,
        eps_anneal_steps=500,
        learning_rate=0.1,
    )
    return RunConfig(
        env=kw.pop("env", "stag-hunter"),
        trainer=trainer,
        total_steps=kw.pop("total_steps", 1200),
        eval_interval=600,
        eval_episodes=4,
        seeds=kw.pop("seeds", (0,)),
        out_dir=str(out_dir),
        **kw,
    )


class TestParsing:
    def test_target_forms(self):
        assert parse_target("legem") == ("legem", {})
        assert parse_target("1step") == ("1step", {})
        assert parse_target("nstep:5") == ("nstep", {"nstep_n": 5})
        assert parse_target("tdlambda:0.9") == ("tdlambda", {"td_lambda": 0.9})
        with pytest.raises(ValueError):
            parse_target("mc")

    def test_seed_forms(self):
        assert parse_seeds("3") == (0, 1, 2)
        assert parse_seeds("0,4,9") == (0, 4, 9)

    def test_summary_format(self):
        assert summary_string([1.0] * 10) == "100±0%"
        assert summary_string([0.0, 1.0]) == "50±50%"


class TestRun:
    def test_writes_csv_per_seed(self, tmp_path):
        out = run(tiny_config(tmp_path / "r", seeds=(0, 1)))
        files = sorted(p.name for p in out.glob("seed*.csv"))
        assert files == ["seed0.csv", "seed1.csv"]
        header = (out / "seed0.csv").read_text().splitlines()[0]
        assert header == "step,seed,mean_eval_return,success_rate,pivot_accuracy,wall_clock_s"

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg_a = tiny_config(tmp_path / "a")
        cfg_b = tiny_config(tmp_path / "b")
        run(cfg_a)
        run(cfg_b)
        a = (tmp_path / "a" / "seed0.csv").read_bytes()
        b = (tmp_path / "b" / "seed0.csv").read_bytes()
        assert a == b

    def test_memory_run_reports_accuracy_column(self, tmp_path):
        cfg = tiny_config(
            tmp_path / "m",
            target_estimator="legem",
            memory_scheme="scheme1",
            total_steps=900,
        )
        out = run(cfg)
        rows = (out / "seed0.csv").read_text().splitlines()[1:]
        assert rows, "expected at least one metrics row"
        # pivot accuracy column may be empty early but the file must parse
        for row in rows:
            assert len(row.split(",")) == 6

    def test_invalid_env_rejected(self, tmp_path):
        cfg = tiny_config(tmp_path / "x", env="stag-hunter")
        object.__setattr__(cfg, "env", "nope")
        with pytest.raises(ValueError):
            run(cfg)


class TestReport:
    def test_aggregates_runs(self, tmp_path):
        run(tiny_config(tmp_path / "runs" / "vdn-off", seeds=(0, 1)))
        text = report(tmp_path / "runs")
        assert "vdn-off" in text
        assert "(2 seeds)" in text
        assert "%" in text

    def test_empty_dir_errors(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            report(tmp_path / "void")


class TestMain:
    def test_run_and_report_round_trip(self, tmp_path, capsys):
        out = tmp_path / "cli-run"
        code = main(
            [
                "run",
                "--env", "stag-hunter",
                "--learner", "vdn",
                "--memory", "off",
                "--target", "nstep:5",
                "--seeds", "1",
                "--steps", "900",
                "--eval-interval", "600",
                "--eval-episodes", "2",
                "--batch-size", "8",
                "--buffer", "64",
                "--out", str(out),
            ]
        )
        assert code == 0
        assert (out / "seed0.csv").exists()
        config_txt = (out / "config.txt").read_text()
        assert "target=nstep:5" in config_txt
        assert main(["report", str(tmp_path)]) == 0
        captured = capsys.readouterr()
        assert "cli-run" in captured.out

    def test_report_missing_dir_fails(self, tmp_path):
        assert main(["report", str(tmp_path / "none")]) == 1

    def test_config_file_with_cli_override(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text(
            "env=stag-hunter\nlearner=vdn\nmemory=off\ntarget=1step\n"
            "seeds=1\nsteps=900\neval-interval=600\neval-episodes=2\n"
            f"batch-size=8\nbuffer=64\nout={tmp_path / 'from-file'}\n"
        )
        code = main(["run", "--config", str(cfg_file), "--out", str(tmp_path / "cli-wins")])
        assert code == 0
        assert (tmp_path / "cli-wins" / "seed0.csv").exists()
        assert not (tmp_path / "from-file").exists()
