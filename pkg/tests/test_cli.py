"""Command-line interface: outputs, determinism, exit codes."""

import hashlib
import json

import pytest

from nof1trial import ContextSpec, TrialConfig, dump_config
from nof1trial.cli import main
from nof1trial.config import config_to_json


def small_config():
    return TrialConfig(
        dgp_id="sim1a",
        initial_n=80,
        checkpoint_step=20,
        max_n=120,
        context=ContextSpec.from_map({"Y": [1], "W1": [1]}),
        c_schedule=(0.1,),
        e_schedule=(0.05,),
        candidates=("glm_main",),
        val_size=10,
    )


def write_config(tmp_path, cfg=None, name="config.json"):
    path = tmp_path / name
    dump_config(cfg if cfg is not None else small_config(), str(path))
    return str(path)


class TestSimulate:
    def test_writes_one_row_per_step(self, tmp_path):
        cfg_path = write_config(tmp_path)
        out = tmp_path / "traj.csv"
        assert main(["simulate", "--config", cfg_path, "--seed", "7", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "t,a,y,W1,W2,g_used,blip_estimate,d_decision"
        assert len(lines) == 1 + small_config().max_n
        first = lines[1].split(",")
        assert first[0] == "1"
        assert first[1] in ("0", "1") and first[2] in ("0", "1")

    def test_same_seed_same_bytes(self, tmp_path):
        cfg_path = write_config(tmp_path)
        out_a, out_b, out_c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
        main(["simulate", "--config", cfg_path, "--seed", "7", "--out", str(out_a)])
        main(["simulate", "--config", cfg_path, "--seed", "7", "--out", str(out_b)])
        main(["simulate", "--config", cfg_path, "--seed", "8", "--out", str(out_c)])
        assert out_a.read_bytes() == out_b.read_bytes()
        assert out_a.read_bytes() != out_c.read_bytes()

    def test_config_and_preset_are_mutually_exclusive(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        out = str(tmp_path / "t.csv")
        both = ["simulate", "--config", cfg_path, "--preset", "sim1a", "--out", out]
        neither = ["simulate", "--out", out]
        assert main(both) == 2
        assert main(neither) == 2
        assert "error:" in capsys.readouterr().err

    def test_invalid_config_file_is_a_usage_error(self, tmp_path, capsys):
        blob = config_to_json(small_config())
        blob["dgp_id"] = "sim9"
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(blob))
        code = main(["simulate", "--config", str(bad), "--out", str(tmp_path / "t.csv")])
        assert code == 2
        assert "dgp_id" in capsys.readouterr().err

    def test_unwritable_output_is_an_io_error(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        out = str(tmp_path / "missing_dir" / "t.csv")
        assert main(["simulate", "--config", cfg_path, "--out", out]) == 3
        assert "error:" in capsys.readouterr().err

    def test_version_flag(self, capsys):
        import nof1trial

        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert nof1trial.__version__ in capsys.readouterr().out


class TestMc:
    def test_output_bundle_shape(self, tmp_path):
        cfg_path = write_config(tmp_path)
        out = tmp_path / "run"
        code = main([
            "mc", "--config", cfg_path, "--seed", "11",
            "--draws", "2", "--jobs", "1", "--out", str(out),
        ])
        assert code == 0

        coverage = (out / "coverage.csv").read_text().splitlines()
        assert coverage[0] == "checkpoint,coverage,variance"
        assert len(coverage) == 1 + 3  # checkpoints 80, 100, 120
        for line in coverage[1:]:
            _, cov, var = line.split(",")
            assert 0.0 <= float(cov) <= 100.0
            assert float(var) >= 0.0

        trials = (out / "trials.jsonl").read_text().splitlines()
        assert len(trials) == 2
        for i, line in enumerate(trials):
            rec = json.loads(line)
            assert rec["seed"] == 11 + i
            assert rec["checkpoints"] == [80, 100, 120]
            assert len(rec["reports"]) == 3

        plot = (out / "plotdata.csv").read_text().splitlines()
        assert plot[0] == "draw,checkpoint,psi_hat,truth,ci_lo,ci_hi"
        assert len(plot) == 1 + 2 * 3

    def test_manifest_digests_match_files(self, tmp_path):
        cfg_path = write_config(tmp_path)
        out = tmp_path / "run"
        main(["mc", "--config", cfg_path, "--draws", "1", "--jobs", "1", "--out", str(out)])
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["schema"] == "nof1trial/v1"
        assert manifest["command"] == "mc"
        assert manifest["draws"] == 1
        assert set(manifest["files"]) == {"coverage.csv", "trials.jsonl", "plotdata.csv"}
        for name, digest in manifest["files"].items():
            raw = (out / name).read_bytes()
            assert digest == "sha256:" + hashlib.sha256(raw).hexdigest()

    def test_pinned_epoch_makes_runs_byte_identical(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
        cfg_path = write_config(tmp_path)
        args = ["mc", "--config", cfg_path, "--seed", "5", "--draws", "2", "--jobs", "1"]
        main(args + ["--out", str(tmp_path / "one")])
        main(args + ["--out", str(tmp_path / "two")])
        names = ("coverage.csv", "trials.jsonl", "plotdata.csv", "run_manifest.json")
        for name in names:
            assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()

    def test_draw_count_must_be_positive(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        code = main(["mc", "--config", cfg_path, "--draws", "0", "--out", str(tmp_path / "r")])
        assert code == 2
        assert "draws" in capsys.readouterr().err


def _balanced_null_trajectory():
    """A hand-built trajectory whose targeted fit is exactly flat.

    Estimation rows alternate arms while outcomes balance within each arm,
    so the intercept-only fit gives 0.5 everywhere, the fluctuation solves
    at zero, and every conditional-variance term is 0.25/0.5.
    """
    lines = ["t,a,y,W1,W2,g_used,blip_estimate,d_decision"]
    for t in range(1, 5):  # warm-up block before the first usable row
        lines.append(f"{t},0,0,0,0,0.5,0,-1")
    for i in range(200):
        a = i % 2
        y = 1 if i % 4 in (2, 3) else 0
        lines.append(f"{i + 5},{a},{y},0,0,0.5,0,-1")
    return "\n".join(lines) + "\n"


def _diagnose_config():
    return TrialConfig(
        dgp_id="sim1a",
        initial_n=104,
        checkpoint_step=100,
        max_n=204,
        context=ContextSpec.from_map({"Y": [1]}),
        c_schedule=(0.1,),
        e_schedule=(0.05,),
        policy_mode="balanced",
        candidates=("intercept_only",),
        val_size=30,
    )


class TestDiagnose:
    def test_flat_trajectory_gives_exact_half_variance(self, tmp_path):
        cfg_path = write_config(tmp_path, _diagnose_config())
        traj = tmp_path / "traj.csv"
        traj.write_text(_balanced_null_trajectory())
        out = tmp_path / "path.csv"
        assert main(["diagnose", "--config", cfg_path, str(traj), "--out", str(out)]) == 0
        assert out.read_text() == "n,running_cond_var_avg\n100,0.5\n200,0.5\n"

    def test_round_trip_from_simulate(self, tmp_path):
        cfg_path = write_config(tmp_path)
        traj = tmp_path / "traj.csv"
        main(["simulate", "--config", cfg_path, "--seed", "3", "--out", str(traj)])
        out = tmp_path / "path.csv"
        assert main(["diagnose", "--config", cfg_path, str(traj), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        # 116 estimation rows -> running averages at 100 and at the end
        assert lines[0] == "n,running_cond_var_avg"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["100", "116"]
        for ln in lines[1:]:
            assert float(ln.split(",")[1]) > 0.0

    def test_missing_trajectory_is_an_io_error(self, tmp_path):
        cfg_path = write_config(tmp_path)
        code = main([
            "diagnose", "--config", cfg_path,
            str(tmp_path / "nope.csv"), "--out", str(tmp_path / "p.csv"),
        ])
        assert code == 3

    def test_malformed_trajectories_are_usage_errors(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path)
        good = _balanced_null_trajectory().splitlines()
        cases = {
            "empty.csv": "",
            "header.csv": "t,a,y,W1,g_used,blip_estimate,d_decision\n1,0,0,0,0.5,0,-1\n",
            "no_rows.csv": good[0] + "\n",
            "short_row.csv": "\n".join(good[:10] + ["11,0,1"]) + "\n",
            "bad_cell.csv": "\n".join(good[:10] + ["11,0,maybe,0,0,0.5,0,-1"]) + "\n",
            "out_of_order.csv": "\n".join(good[:10] + ["99,0,1,0,0,0.5,0,-1"]) + "\n",
        }
        for name, text in cases.items():
            path = tmp_path / name
            path.write_text(text)
            code = main(["diagnose", "--config", cfg_path, str(path), "--out", str(tmp_path / "p.csv")])
            assert code == 2, name
            assert "trajectory" in capsys.readouterr().err
