"""Config resolution, command dispatch, exit codes, provenance records,
and bit-identical replay of recorded runs."""

import filecmp
import json
from pathlib import Path

import pytest

from sentinel.cli import (
    RunConfig,
    dispatch,
    exit_code_for,
    load_run_record,
    load_space_file,
    main,
    parse_model_spec,
    read_config_file,
    replay_run,
    resolve_config,
)
from sentinel.errors import (
    AllTrialsFailed,
    ConfigInvalid,
    CorruptCheckpoint,
    EmptyDataset,
    NonFiniteLoss,
    UnknownCommand,
)
from sentinel.train import load_checkpoint


class TestResolveConfig:
    def test_defaults(self):
        cfg = resolve_config("synth")
        assert cfg["n_syncope"] == 8
        assert cfg["seed"] == 0
        assert cfg["out"] == str(Path("runs") / "synth")
        assert cfg["corrupt"] is False

    def test_file_beats_default_and_flag_beats_file(self, tmp_path):
        ini = tmp_path / "settings.ini"
        ini.write_text("[global]\nseed = 5\n[synth]\nn_syncope = 3\n")
        file_values = read_config_file(ini)
        cfg = resolve_config("synth", file_values)
        assert cfg["seed"] == 5 and cfg["n_syncope"] == 3
        cfg = resolve_config("synth", file_values, {"n_syncope": 11})
        assert cfg["n_syncope"] == 11 and cfg["seed"] == 5

    def test_unknown_key_named(self, tmp_path):
        ini = tmp_path / "settings.ini"
        ini.write_text("[train]\nwyndow = 9\n")
        with pytest.raises(ConfigInvalid, match="wyndow"):
            read_config_file(ini)

    def test_unknown_section_rejected(self, tmp_path):
        ini = tmp_path / "settings.ini"
        ini.write_text("[trainer]\nepochs = 2\n")
        with pytest.raises(ConfigInvalid, match="trainer"):
            read_config_file(ini)

    def test_bad_typed_value_named(self, tmp_path):
        ini = tmp_path / "settings.ini"
        ini.write_text("[train]\nepochs = soon\n")
        with pytest.raises(ConfigInvalid, match="epochs"):
            read_config_file(ini)

    def test_bool_words(self, tmp_path):
        ini = tmp_path / "settings.ini"
        ini.write_text("[synth]\ncorrupt = yes\n")
        assert read_config_file(ini)["synth"]["corrupt"] is True

    def test_evaluate_requires_model(self):
        with pytest.raises(ConfigInvalid, match="model"):
            resolve_config("evaluate", flag_values={"data": "somewhere"})

    def test_seed_env_fallback(self, monkeypatch):
        monkeypatch.setenv("SENTINEL_SEED", "42")
        assert resolve_config("synth")["seed"] == 42
        assert resolve_config("synth", flag_values={"seed": 9})["seed"] == 9
        monkeypatch.setenv("SENTINEL_SEED", "many")
        with pytest.raises(ConfigInvalid, match="SENTINEL_SEED"):
            resolve_config("synth")

    def test_unknown_command(self):
        with pytest.raises(UnknownCommand):
            resolve_config("trane")

    def test_bad_log_level(self):
        with pytest.raises(ConfigInvalid, match="log_level"):
            resolve_config("synth", flag_values={"log_level": "chatty"})

    def test_exit_code_mapping(self):
        assert exit_code_for(ConfigInvalid("x")) == 2
        assert exit_code_for(EmptyDataset("x")) == 3
        assert exit_code_for(NonFiniteLoss("x")) == 4
        assert exit_code_for(AllTrialsFailed("x")) == 4
        assert exit_code_for(CorruptCheckpoint("x")) == 3


class TestModelSpecNotation:
    def test_bidirectional(self):
        spec = parse_model_spec("2x32b", window=100)
        assert spec.num_layers == 2
        assert spec.units == [32, 32]
        assert spec.bidirectional
        assert spec.window_size == 100

    def test_vanilla(self):
        spec = parse_model_spec("1x8", window=40)
        assert spec.num_layers == 1 and spec.units == [8]
        assert not spec.bidirectional

    def test_garbage_rejected(self):
        for text in ("x", "2x", "ax8", "2x32bb", ""):
            with pytest.raises(ConfigInvalid):
                parse_model_spec(text, window=40)


SPACE_INI = """\
[gru_units]
kind = integer
lower = 4
upper = 8

[window_size]
kind = integer
lower = 40
upper = 80
"""


class TestSpaceFile:
    def test_parse(self, tmp_path):
        path = tmp_path / "space.ini"
        path.write_text(SPACE_INI)
        space = load_space_file(path)
        assert space.names == ["gru_units", "window_size"]
        assert space.dimensions[0].kind == "integer"

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "space.ini"
        path.write_text("[gru_units]\nkind = integer\nlower = 1\nupper = 3\nstep = 2\n")
        with pytest.raises(ConfigInvalid, match="step"):
            load_space_file(path)

    def test_missing_bounds_rejected(self, tmp_path):
        path = tmp_path / "space.ini"
        path.write_text("[gru_units]\nkind = integer\nlower = 1\n")
        with pytest.raises(ConfigInvalid):
            load_space_file(path)


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One small synth -> preprocess -> train chain shared by the tests."""
    root = tmp_path_factory.mktemp("cli")
    assert run_cli(
        "synth", "--out", root / "synth", "--seed", 3,
        "--n-syncope", 6, "--n-nosyncope", 6,
        "--length-min", 1400, "--length-max", 1600,
        "--onset-lead", 300, "--corrupt", "--log-level", "warning",
    ) == 0
    assert run_cli(
        "preprocess", "--out", root / "prep",
        "--data", root / "synth" / "data",
        "--seed", 3, "--log-level", "warning",
    ) == 0
    assert run_cli(
        "train", "--out", root / "train",
        "--train-dir", root / "prep" / "clean" / "train",
        "--spec", "1x8", "--window", 60, "--stride", 80, "--epochs", 2,
        "--seed", 3, "--log-level", "warning",
    ) == 0
    return root


class TestPipelineSmoke:
    def test_synth_outputs(self, pipeline):
        data = pipeline / "synth" / "data"
        assert (data / "manifest.csv").exists()
        assert (data / "ground_truth.json").exists()
        assert len(list((data / "syncope").glob("*.csv"))) == 6

    def test_preprocess_outputs(self, pipeline):
        prep = pipeline / "prep"
        assert list((prep / "clean" / "train").glob("*.csv"))
        assert list((prep / "clean" / "test").glob("*.csv"))
        header = (prep / "drop_report.csv").read_text().splitlines()[0]
        assert header == "stage,series_id,reason"

    def test_train_outputs_loadable(self, pipeline):
        model = load_checkpoint(pipeline / "train" / "model.ckpt")
        assert model.spec.units == [8]
        loss_lines = (pipeline / "train" / "loss.csv").read_text().splitlines()
        assert loss_lines[0] == "epoch,loss"
        assert len(loss_lines) == 3

    def test_evaluate_and_outputs(self, pipeline):
        out = pipeline / "eval"
        assert run_cli(
            "evaluate", "--out", out,
            "--model", pipeline / "train" / "model.ckpt",
            "--data", pipeline / "prep" / "clean" / "test",
            "--threshold", 0.6, "--log-level", "warning",
        ) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["threshold"] == 0.6
        assert set(summary["confusion"]) == {"tp", "fp", "fn", "tn"}
        report_lines = (out / "report.csv").read_text().splitlines()
        assert report_lines[0] == "series_id,label,detected,detection_index,reaction_s"
        assert len(report_lines) == summary["n_series"] + 1

    def test_sweep_defaults_to_19_thresholds(self, pipeline):
        out = pipeline / "sweep"
        assert run_cli(
            "sweep", "--out", out,
            "--model", pipeline / "train" / "model.ckpt",
            "--data", pipeline / "prep" / "clean" / "test",
            "--log-level", "warning",
        ) == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert len(lines) == 20
        assert lines[1].startswith("0.05,")

    def test_hpo_phase1_outputs(self, pipeline, tmp_path):
        space = tmp_path / "space.ini"
        space.write_text(SPACE_INI)
        out = pipeline / "hpo"
        assert run_cli(
            "hpo", "--out", out,
            "--train-dir", pipeline / "prep" / "clean" / "train",
            "--space", space, "--phase", "1",
            "--budget", 3, "--n-init", 2, "--epochs", 1, "--stride", 80,
            "--seed", 5, "--log-level", "warning",
        ) == 0
        lines = (out / "trials.csv").read_text().splitlines()
        assert lines[0] == "trial,gru_units,window_size,objective,status"
        assert len(lines) == 4
        best = json.loads((out / "best.json").read_text())
        assert set(best) == {"objective", "params"}
        assert (out / "pd_gru_units.csv").exists()
        assert (out / "pd_gru_units_window_size.csv").exists()

    def test_report_renders_html_and_svg(self, pipeline):
        out = pipeline / "report"
        assert run_cli(
            "report", "--out", out,
            "--inputs", f"{pipeline / 'sweep' / 'sweep.csv'},"
                        f"{pipeline / 'train' / 'loss.csv'}",
            "--log-level", "warning",
        ) == 0
        html = (out / "index.html").read_text()
        assert "<svg" in html and "sweep" in html and "loss" in html
        assert (out / "sweep.svg").read_text().startswith("<svg")
        assert (out / "loss.svg").exists()

    def test_run_record_contents(self, pipeline):
        record = load_run_record(pipeline / "train" / "run.json")
        assert record["command"] == "train"
        assert record["seed"] == 3
        assert record["config"]["spec"] == "1x8"
        assert record["config"]["epochs"] == 2
        assert set(record["versions"]) == {"python", "numpy", "scipy", "sentinel"}
        for rel in record["outputs"]:
            assert (pipeline / "train" / rel).exists()
        assert record["outputs"] == sorted(record["outputs"])


def replay_matches(run_dir: Path, new_dir: Path) -> bool:
    replay_run(run_dir / "run.json", new_dir)
    originals = {
        p.relative_to(run_dir).as_posix(): p
        for p in run_dir.rglob("*") if p.is_file() and p.name != "run.json"
    }
    replays = {
        p.relative_to(new_dir).as_posix(): p
        for p in new_dir.rglob("*") if p.is_file() and p.name != "run.json"
    }
    if originals.keys() != replays.keys():
        return False
    return all(filecmp.cmp(originals[rel], replays[rel], shallow=False)
               for rel in originals)


class TestReplay:
    def test_train_replay_bit_identical(self, pipeline, tmp_path):
        assert replay_matches(pipeline / "train", tmp_path / "again")

    def test_preprocess_replay_bit_identical(self, pipeline, tmp_path):
        assert replay_matches(pipeline / "prep", tmp_path / "again")

    def test_malformed_record_rejected(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{\"format\": \"something-else\"}")
        with pytest.raises(ConfigInvalid):
            replay_run(path, tmp_path / "out")

    def test_edited_record_with_unknown_key_rejected(self, pipeline, tmp_path):
        record = json.loads((pipeline / "train" / "run.json").read_text())
        record["config"]["wyndow"] = 9
        path = tmp_path / "run.json"
        path.write_text(json.dumps(record))
        with pytest.raises(ConfigInvalid, match="wyndow"):
            replay_run(path, tmp_path / "out")


class TestExitCodes:
    def test_no_command_is_config_error(self, capsys):
        assert main([]) == 2
        assert "command" in capsys.readouterr().err

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        ini = tmp_path / "bad.ini"
        ini.write_text("[train]\nwyndow = 9\n")
        code = main(["train", "--config", str(ini),
                     "--train-dir", "x", "--out", str(tmp_path / "o")])
        assert code == 2
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "ConfigInvalid"
        assert "wyndow" in err["message"]

    def test_evaluate_without_model_exits_2(self, tmp_path, capsys):
        code = main(["evaluate", "--data", "x", "--out", str(tmp_path / "o")])
        assert code == 2
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert err["error"] == "ConfigInvalid"

    def test_missing_dataset_exits_3(self, tmp_path):
        code = main(["preprocess", "--data", str(tmp_path / "nowhere"),
                     "--out", str(tmp_path / "o"), "--log-level", "error"])
        assert code == 3

    def test_all_negative_training_data_exits_3(self, pipeline, tmp_path):
        only_negative = tmp_path / "neg"
        only_negative.mkdir()
        src = pipeline / "prep" / "clean" / "train"
        for path in src.glob("nos*.csv"):
            (only_negative / path.name).write_bytes(path.read_bytes())
        code = main(["train", "--train-dir", str(only_negative),
                     "--spec", "1x8", "--window", "60", "--epochs", "1",
                     "--out", str(tmp_path / "o"), "--log-level", "error"])
        assert code == 3

    def test_report_without_renderable_inputs_exits_3(self, tmp_path, capsys):
        junk = tmp_path / "junk.csv"
        junk.write_text("a,b\n1,2\n")
        code = main(["report", "--inputs", str(junk),
                     "--out", str(tmp_path / "o"), "--log-level", "error"])
        assert code == 3

    def test_report_missing_input_exits_2(self, tmp_path):
        code = main(["report", "--inputs", str(tmp_path / "ghost.csv"),
                     "--out", str(tmp_path / "o"), "--log-level", "error"])
        assert code == 2

    def test_dispatch_unknown_command_raises(self):
        with pytest.raises(UnknownCommand):
            dispatch("trane", RunConfig("trane", {"log_level": "error"}))


class TestRunDirIsolation:
    def test_no_writes_outside_run_directory(self, tmp_path, monkeypatch):
        workdir = tmp_path / "cwd"
        workdir.mkdir()
        monkeypatch.chdir(workdir)
        out = tmp_path / "elsewhere" / "run"
        assert run_cli(
            "synth", "--out", out, "--seed", 1,
            "--n-syncope", 0, "--n-nosyncope", 2,
            "--length-min", 600, "--length-max", 650, "--onset-lead", 100,
            "--log-level", "warning",
        ) == 0
        assert list(workdir.iterdir()) == []
        assert (out / "run.json").exists()
