"""End-to-end CLI behavior: exit codes, file outputs, and determinism.

All invocations go through main(argv) in-process. Exit code contract:
0 success, 1 verification or identity failure, 2 malformed configuration.
"""

import json

import pytest

from spikelab.cli import main

FLAGSHIP = {
    "d": 10_000,
    "n": 200,
    "tiers": [
        {"multiplicity": 1, "c": 0.2},
        {"multiplicity": 1, "c": 0.4},
        {"multiplicity": 1, "c": 1.0},
    ],
}

# single spike at c=1, gram path; converges well inside every tolerance
PASSING_RUN = {
    "model": {"d": 4000, "n": 80, "tiers": [{"multiplicity": 1, "c": 1.0}]},
    "reps": 40,
    "seed": 42,
    "monitored_noise": 0,
}


def _write(tmp_path, name, payload):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


class TestPredict:
    def test_stdout_json(self, tmp_path, capsys):
        cfg = _write(tmp_path, "m.json", FLAGSHIP)
        assert main(["predict", "--config", cfg]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["regime"] == "distinguishable"
        assert "distinct-spike-limits" in payload["applicable_limits"]
        spikes = payload["spikes"]
        assert [s["ratio_limit"] for s in spikes] == [1.2, 1.4, 2.0]
        assert abs(spikes[2]["angle_limit_deg"] - 45.0) < 1e-9
        assert payload["noise"]["eigenvalue_scale_limit"] == 1.0

    def test_out_file(self, tmp_path):
        cfg = _write(tmp_path, "m.json", FLAGSHIP)
        out = tmp_path / "limits.json"
        assert main(["predict", "--config", cfg, "--out", str(out)]) == 0
        assert json.loads(out.read_text())["regime"] == "distinguishable"

    def test_boundary_serialization(self, tmp_path, capsys):
        cfg = _write(
            tmp_path,
            "b.json",
            {
                "d": 40_000,
                "n": 200,
                "tiers": [{"multiplicity": 1, "c": "inf", "lambda": 2.0}],
                "min_spike": 2.0,
            },
        )
        assert main(["predict", "--config", cfg]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["regime"] == "boundary-strong-inconsistent"
        assert payload["spikes"][0]["c"] == "inf"
        assert payload["spikes"][0]["ratio_limit"] == "inf"


class TestSimulate:
    def test_passing_run(self, tmp_path, capsys):
        cfg = _write(tmp_path, "run.json", PASSING_RUN)
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        assert "verification: pass" in capsys.readouterr().out
        for name in (
            "replications.csv",
            "aggregates.csv",
            "kde.csv",
            "pairwise.csv",
            "verification.json",
        ):
            assert (out / name).stat().st_size > 0
        assert json.loads((out / "verification.json").read_text())["passed"] is True

    def test_outputs_are_byte_deterministic(self, tmp_path):
        cfg = _write(tmp_path, "run.json", PASSING_RUN)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", cfg, "--out", str(a)]) == 0
        assert main(["simulate", "--config", cfg, "--out", str(b)]) == 0
        for name in ("replications.csv", "aggregates.csv", "kde.csv",
                     "pairwise.csv", "verification.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_failing_run_exits_one(self, tmp_path, capsys):
        # d/n = 16 leaves the noise eigenvalues far above their limit
        cfg = _write(
            tmp_path,
            "run.json",
            {"model": {"d": 800, "n": 50, "tiers": [{"multiplicity": 1, "c": 0.2}]},
             "reps": 10, "seed": 1},
        )
        out = tmp_path / "out"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 1
        captured = capsys.readouterr().out
        assert "FAIL" in captured
        assert "verification: fail" in captured
        assert json.loads((out / "verification.json").read_text())["passed"] is False

    def test_flag_overrides_config(self, tmp_path):
        cfg = _write(tmp_path, "run.json", dict(PASSING_RUN, reps=5))
        out = tmp_path / "out"
        main(["simulate", "--config", cfg, "--out", str(out), "--reps", "2"])
        lines = (out / "replications.csv").read_text().splitlines()
        assert len(lines) == 1 + 2  # header + one monitored index per rep

    def test_figures_flag(self, tmp_path, capsys):
        cfg = _write(tmp_path, "run.json", dict(PASSING_RUN, reps=5))
        out = tmp_path / "out"
        code = main(["simulate", "--config", cfg, "--out", str(out), "--figures"])
        assert code in (0, 1)
        assert (out / "angle_densities.png").stat().st_size > 0
        assert (out / "eigenvalue_ratios.png").stat().st_size > 0
        assert (out / "pairwise_angles.png").stat().st_size > 0


class TestSweepCommand:
    def test_writes_convergence_table(self, tmp_path, capsys):
        cfg = _write(tmp_path, "m.json", {"d": 60, "n": 20,
                                          "tiers": [{"multiplicity": 1, "c": 0.3}]})
        out = tmp_path / "out"
        code = main(["sweep", "--config", cfg, "--n", "20,40", "--d-over-n", "3",
                     "--reps", "2", "--out", str(out)])
        assert code == 0
        lines = (out / "convergence.csv").read_text().splitlines()
        assert len(lines) == 3
        assert "wrote" in capsys.readouterr().out

    def test_n_values_from_config(self, tmp_path):
        cfg = _write(
            tmp_path,
            "m.json",
            {"model": {"d": 60, "n": 20, "tiers": [{"multiplicity": 1, "c": 0.3}]},
             "n_values": [20], "d_over_n": 3.0, "reps": 2},
        )
        out = tmp_path / "out"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0

    def test_missing_n_exits_two(self, tmp_path, capsys):
        cfg = _write(tmp_path, "m.json", {"d": 60, "n": 20,
                                          "tiers": [{"multiplicity": 1, "c": 0.3}]})
        assert main(["sweep", "--config", cfg, "--d-over-n", "3"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_malformed_n_exits_two(self, tmp_path, capsys):
        cfg = _write(tmp_path, "m.json", {"d": 60, "n": 20,
                                          "tiers": [{"multiplicity": 1, "c": 0.3}]})
        assert main(["sweep", "--config", cfg, "--n", "20,forty",
                     "--d-over-n", "3"]) == 2
        assert "--n" in capsys.readouterr().err


class TestHdlssCommand:
    def test_runs_and_writes(self, tmp_path, capsys):
        cfg = _write(
            tmp_path,
            "run.json",
            {"model": {"d": 2000, "n": 10, "tiers": [{"multiplicity": 1, "c": 2.0}]},
             "reps": 20, "draws": 2000, "seed": 42},
        )
        a, b = tmp_path / "a", tmp_path / "b"
        code = main(["hdlss", "--config", cfg, "--out", str(a)])
        assert code in (0, 1)
        for name in ("replications.csv", "hdlss_draws.csv", "verification.json"):
            assert (a / name).stat().st_size > 0
        payload = json.loads((a / "verification.json").read_text())
        metrics = {c["metric"] for c in payload["criteria"]}
        assert metrics == {"eigenvalue_ratio_mean", "eigenvalue_ratio_var",
                           "angle_vector_deg_mean"}
        # deterministic: a second run reproduces the verdict bytes
        assert main(["hdlss", "--config", cfg, "--out", str(b)]) == code
        assert (a / "verification.json").read_bytes() == (b / "verification.json").read_bytes()

    def test_boundary_model_exits_two(self, tmp_path, capsys):
        cfg = _write(
            tmp_path,
            "run.json",
            {"model": {"d": 10_000, "n": 200,
                       "tiers": [{"multiplicity": 1, "c": "0", "lambda": 5000.0}]},
             "reps": 5},
        )
        assert main(["hdlss", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        assert "finite and nonzero" in capsys.readouterr().err


class TestCheckCommand:
    def test_passes(self, tmp_path, capsys):
        cfg = _write(tmp_path, "m.json", {"d": 100, "n": 50,
                                          "tiers": [{"multiplicity": 1, "c": 0.02}]})
        assert main(["check", "--config", cfg]) == 0
        out = capsys.readouterr().out
        assert "pass" in out
        assert "rowwise" in out and "factor_max" in out

    def test_impossible_tolerance_fails(self, tmp_path, capsys):
        cfg = _write(tmp_path, "m.json", {"d": 100, "n": 50,
                                          "tiers": [{"multiplicity": 1, "c": 0.02}]})
        assert main(["check", "--config", cfg, "--tolerance", "1e-18"]) == 1
        assert "fail" in capsys.readouterr().out


class TestKdeCommand:
    @pytest.fixture()
    def run_dir(self, tmp_path):
        cfg = _write(tmp_path, "run.json", dict(PASSING_RUN, reps=8))
        out = tmp_path / "out"
        main(["simulate", "--config", cfg, "--out", str(out)])
        return out

    def test_curve_from_replications(self, run_dir, tmp_path, capsys):
        out = tmp_path / "kde.csv"
        code = main(["kde", "--input", str(run_dir / "replications.csv"),
                     "--metric", "eigenvalue_ratio", "--index", "1",
                     "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "index,grid_deg,density"
        assert len(lines) == 1 + 512

    def test_unknown_metric_exits_two(self, run_dir, tmp_path, capsys):
        assert main(["kde", "--input", str(run_dir / "replications.csv"),
                     "--metric", "variance"]) == 2
        assert "--metric" in capsys.readouterr().err

    def test_absent_index_exits_two(self, run_dir, capsys):
        assert main(["kde", "--input", str(run_dir / "replications.csv"),
                     "--index", "9"]) == 2
        assert "index 9" in capsys.readouterr().err

    def test_missing_file_exits_two(self, tmp_path, capsys):
        assert main(["kde", "--input", str(tmp_path / "nope.csv")]) == 2


class TestReportCommand:
    def test_renders_figures(self, tmp_path, capsys):
        cfg = _write(tmp_path, "run.json", dict(PASSING_RUN, reps=5))
        out = tmp_path / "out"
        main(["simulate", "--config", cfg, "--out", str(out)])
        assert main(["report", "--input", str(out)]) == 0
        for name in ("angle_densities.png", "eigenvalue_ratios.png",
                     "pairwise_angles.png"):
            assert (out / name).stat().st_size > 0

    def test_separate_output_directory(self, tmp_path):
        cfg = _write(tmp_path, "run.json", dict(PASSING_RUN, reps=5))
        out = tmp_path / "out"
        main(["simulate", "--config", cfg, "--out", str(out)])
        figs = tmp_path / "figs"
        assert main(["report", "--input", str(out), "--out", str(figs)]) == 0
        assert (figs / "angle_densities.png").stat().st_size > 0

    def test_empty_directory_exits_two(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["report", "--input", str(empty)]) == 2
        assert "no renderable" in capsys.readouterr().err


class TestConfigErrors:
    def test_unknown_run_key_named(self, tmp_path, capsys):
        cfg = _write(tmp_path, "run.json", dict(PASSING_RUN, repz=3))
        assert main(["simulate", "--config", cfg]) == 2
        assert "repz" in capsys.readouterr().err

    def test_unknown_model_key_named(self, tmp_path, capsys):
        cfg = _write(tmp_path, "m.json", dict(FLAGSHIP, spikes=[1, 2]))
        assert main(["predict", "--config", cfg]) == 2
        assert "spikes" in capsys.readouterr().err

    def test_invalid_json(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(["predict", "--config", str(path)]) == 2
        assert "not valid JSON" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["predict", "--config", str(tmp_path / "ghost.json")]) == 2
        assert "cannot read" in capsys.readouterr().err

    def test_non_object_config(self, tmp_path, capsys):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        assert main(["predict", "--config", str(path)]) == 2

    def test_unsupported_format(self, tmp_path, capsys):
        cfg = _write(tmp_path, "run.json", dict(PASSING_RUN, format="parquet"))
        assert main(["simulate", "--config", cfg]) == 2
        assert "parquet" in capsys.readouterr().err

    def test_invalid_tier_exits_two(self, tmp_path, capsys):
        cfg = _write(tmp_path, "m.json",
                     {"d": 100, "n": 200, "tiers": [{"multiplicity": 1, "c": 0.4}]})
        assert main(["predict", "--config", cfg]) == 2
        assert "min_spike" in capsys.readouterr().err
