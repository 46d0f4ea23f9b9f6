"""Tests for config parsing, CSV output, and the CLI subcommands."""

import textwrap

import numpy as np
import pytest

from metabounds.bounds import MetaBoundInput, theorem2_bound
from metabounds.cli import (
    ConfigError,
    ExperimentConfig,
    load_config,
    main,
    write_csv,
)


def _write(tmp_path, text, name="conf.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


def _data_lines(path):
    return [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]


class TestConfigLoading:
    def test_defaults_fill_missing_keys(self, tmp_path):
        cfg = load_config(_write(tmp_path, "[sweep]\nseeds = 3\n"), "sweep")
        assert cfg.values["seeds"] == 3
        assert cfg.values["pipeline"] == "prior_mean"
        assert cfg.values["n_list"] == (2, 5, 10, 20, 50)

    def test_overrides_beat_file_values(self, tmp_path):
        path = _write(tmp_path, "[sweep]\nseed = 1\n")
        cfg = load_config(path, "sweep", overrides={"seed": 9})
        assert cfg.values["seed"] == 9

    def test_unknown_key_is_rejected(self, tmp_path):
        path = _write(tmp_path, "[sweep]\nnn_list = 2\n")
        with pytest.raises(ConfigError, match="unknown key"):
            load_config(path, "sweep")

    def test_unknown_section_is_rejected(self, tmp_path):
        path = _write(tmp_path, "[sweeper]\nseeds = 2\n")
        with pytest.raises(ConfigError, match="unknown section"):
            load_config(path, "sweeper" if False else "sweep")

    def test_missing_file_is_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.ini", "sweep")

    def test_missing_required_key_is_rejected(self, tmp_path):
        path = _write(tmp_path, "[train]\nm = 5\n")
        with pytest.raises(ConfigError, match="missing required.*n"):
            load_config(path, "train")

    def test_bad_integer_is_rejected(self, tmp_path):
        path = _write(tmp_path, "[sweep]\nseeds = three\n")
        with pytest.raises(ConfigError, match="expected an integer"):
            load_config(path, "sweep")

    def test_bad_choice_is_rejected(self, tmp_path):
        path = _write(tmp_path, "[sweep]\npipeline = magic\n")
        with pytest.raises(ConfigError, match="expected one of"):
            load_config(path, "sweep")

    def test_empty_n_list_is_rejected(self, tmp_path):
        path = _write(tmp_path, "[sweep]\nn_list =\n")
        with pytest.raises(ConfigError, match="nonempty"):
            load_config(path, "sweep")

    def test_hash_ignores_formatting_but_not_values(self, tmp_path):
        a = load_config(_write(tmp_path, "[sweep]\nseeds = 3\n", "a.ini"), "sweep")
        b = load_config(
            _write(tmp_path, "; comment\n[sweep]\nseeds =   3\n", "b.ini"), "sweep"
        )
        c = load_config(_write(tmp_path, "[sweep]\nseeds = 4\n", "c.ini"), "sweep")
        assert a.config_hash == b.config_hash
        assert a.config_hash != c.config_hash


class TestCsvWriter:
    def test_structure_and_determinism(self, tmp_path):
        rows = [(1, 0.5), (2, 0.25)]
        p1 = tmp_path / "one.csv"
        p2 = tmp_path / "two.csv"
        write_csv(p1, ["k", "v"], rows, "abcd", 7)
        write_csv(p2, ["k", "v"], rows, "abcd", 7)
        body = _data_lines(p1)
        assert body[0] == "k,v"
        assert body[1] == "1,0.5"
        assert body == _data_lines(p2)
        assert "# metabounds-csv 1" in p1.read_text()
        assert not list(tmp_path.glob("*.tmp"))

    def test_row_shape_mismatch_leaves_no_file(self, tmp_path):
        target = tmp_path / "bad.csv"
        with pytest.raises(ValueError, match="row shape"):
            write_csv(target, ["a", "b"], [(1,)], "h", 0)
        assert not target.exists()

    def test_creates_parent_directories(self, tmp_path):
        target = tmp_path / "deep" / "nested" / "out.csv"
        write_csv(target, ["a"], [(1,)], "h", 0)
        assert target.exists()


class TestCmdBound:
    def test_all_zero_kls_matches_the_frozen_value(self, tmp_path, capsys):
        path = _write(tmp_path, "[bound]\nn = 10\nm = 5\ndelta = 0.1\n")
        assert main(["bound", "--config", path]) == 0
        out = capsys.readouterr().out
        assert "theorem1 0.796805134032" in out
        assert "theorem2 0.796805134032" in out

    def test_invalid_delta_exits_2(self, tmp_path, capsys):
        path = _write(tmp_path, "[bound]\nn = 10\nm = 5\ndelta = 1.5\n")
        assert main(["bound", "--config", path]) == 2
        assert "config error" in capsys.readouterr().err

    def test_multiple_pairs_average_like_the_evaluator(self, tmp_path, capsys):
        path = _write(
            tmp_path,
            "[bound]\nn = 4\nm = 6\npairs = 0.5:1.0 ; 0.0:3.0\nempirical_risk = 0.2\n",
        )
        assert main(["bound", "--config", path]) == 0
        out = capsys.readouterr().out
        expected = theorem2_bound(
            MetaBoundInput(0.2, 0.0, ((0.5, 1.0), (0.0, 3.0)), 4, 6, 0.1)
        )
        assert f"theorem2 {expected:.12g}" in out

    def test_missing_n_exits_2(self, tmp_path, capsys):
        path = _write(tmp_path, "[bound]\nm = 5\n")
        assert main(["bound", "--config", path]) == 2
        assert "missing required" in capsys.readouterr().err


SWEEP_SMALL = """\
    [sweep]
    pipeline = prior_mean
    n_list = 2, 5
    m_list = 5
    seeds = 2
    eval_tasks = 3
    eval_points = 50
    out = {out}
    """


class TestCmdSweep:
    def test_writes_expected_rows(self, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        path = _write(tmp_path, SWEEP_SMALL.format(out=out))
        assert main(["sweep", "--config", path]) == 0
        body = _data_lines(out)
        assert body[0].startswith("n,m,d,seed,")
        assert len(body) == 5
        first = body[1].split(",")
        assert first[0] == "2" and first[1] == "5" and first[2] == "2"
        values = [float(v) for v in first[3:]]
        assert all(np.isfinite(values))

    def test_repeat_runs_are_byte_identical_outside_comments(self, tmp_path):
        out_a = tmp_path / "a.csv"
        out_b = tmp_path / "b.csv"
        path = _write(tmp_path, SWEEP_SMALL.format(out="placeholder.csv"))
        assert main(["sweep", "--config", path, "--out", str(out_a)]) == 0
        assert main(["sweep", "--config", path, "--out", str(out_b)]) == 0
        assert _data_lines(out_a) == _data_lines(out_b)

    def test_seed_override_changes_results(self, tmp_path):
        out_a = tmp_path / "a.csv"
        out_b = tmp_path / "b.csv"
        path = _write(tmp_path, SWEEP_SMALL.format(out="p.csv"))
        main(["sweep", "--config", path, "--out", str(out_a), "--seed", "0"])
        main(["sweep", "--config", path, "--out", str(out_b), "--seed", "1"])
        assert _data_lines(out_a) != _data_lines(out_b)

    def test_parallel_matches_serial(self, tmp_path):
        out_a = tmp_path / "a.csv"
        out_b = tmp_path / "b.csv"
        path = _write(tmp_path, SWEEP_SMALL.format(out="p.csv"))
        main(["sweep", "--config", path, "--out", str(out_a)])
        main(["sweep", "--config", path, "--out", str(out_b), "--jobs", "2"])
        assert _data_lines(out_a) == _data_lines(out_b)

    def test_components_recombine_in_every_row(self, tmp_path):
        out = tmp_path / "sweep.csv"
        path = _write(tmp_path, SWEEP_SMALL.format(out=out))
        main(["sweep", "--config", path])
        header, *rows = _data_lines(out)
        cols = header.split(",")
        for line in rows:
            rec = dict(zip(cols, line.split(",")))
            recombined = (float(rec["empirical_multitask_risk"])
                          + float(rec["task_level_term"])
                          + float(rec["multitask_term"]))
            assert abs(recombined - float(rec["bound_thm2"])) <= 1e-12


TRAIN_SMALL = """\
    [train]
    env = linear
    d = 2
    n = 2
    m = 6
    epochs_stage1 = 2
    epochs_stage2 = 2
    out = {out}

    [adapt]
    env = linear
    d = 2
    posterior = {out}
    num_tasks = 3
    m = 6
    adapt_epochs = 2
    eval_points = 40
    mc_eval = 20
    out = {adapt_out}
    """


class TestTrainAdaptRoundTrip:
    def test_train_then_adapt(self, tmp_path, capsys):
        artifact = tmp_path / "posterior.txt"
        adapt_out = tmp_path / "adapt.csv"
        path = _write(tmp_path, TRAIN_SMALL.format(out=artifact, adapt_out=adapt_out))

        assert main(["train", "--config", path]) == 0
        assert artifact.exists()
        trace = tmp_path / "posterior.txt.trace.csv"
        trace_body = _data_lines(trace)
        assert trace_body[0] == "epoch,stage,objective"
        stages = [line.split(",")[1] for line in trace_body[1:]]
        assert stages == ["1", "1", "2", "2"]

        assert main(["adapt", "--config", path]) == 0
        body = _data_lines(adapt_out)
        assert body[0] == "task_index,seed,train_risk,bound,test_error"
        assert len(body) == 4
        assert "# summary test_error" in adapt_out.read_text()

    def test_adapt_runs_are_identical(self, tmp_path):
        artifact = tmp_path / "posterior.txt"
        path = _write(tmp_path, TRAIN_SMALL.format(out=artifact,
                                                   adapt_out=tmp_path / "x.csv"))
        main(["train", "--config", path])
        out_a = tmp_path / "a.csv"
        out_b = tmp_path / "b.csv"
        assert main(["adapt", "--config", path, "--out", str(out_a)]) == 0
        assert main(["adapt", "--config", path, "--out", str(out_b)]) == 0
        assert _data_lines(out_a) == _data_lines(out_b)

    def test_adapt_without_artifact_exits_2(self, tmp_path, capsys):
        path = _write(tmp_path, TRAIN_SMALL.format(out=tmp_path / "missing.txt",
                                                   adapt_out=tmp_path / "x.csv"))
        assert main(["adapt", "--config", path]) == 2
        assert "not found" in capsys.readouterr().err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergent_training_exits_3(self, tmp_path, capsys):
        artifact = tmp_path / "posterior.txt"
        path = _write(
            tmp_path,
            f"""\
            [train]
            env = linear
            d = 2
            n = 2
            m = 6
            epochs_stage1 = 6
            epochs_stage2 = 0
            optimizer = sgd
            learning_rate = 1e8
            out = {artifact}
            """,
        )
        assert main(["train", "--config", path]) == 3
        assert "numeric failure" in capsys.readouterr().err
        assert not artifact.exists()


class TestCmdAudit:
    def test_small_audit_run(self, tmp_path, capsys):
        out = tmp_path / "audit.csv"
        path = _write(
            tmp_path,
            f"""\
            [audit]
            env = linear
            d = 2
            n = 2
            m = 5
            trials = 50
            epochs_stage1 = 1
            epochs_stage2 = 1
            eval_points = 30
            mc_eval = 10
            out = {out}
            """,
        )
        assert main(["audit", "--config", path]) == 0
        body = _data_lines(out)
        assert body[0] == AUDIT_HEADER
        assert len(body) == 51
        assert "# violations 0/50" in out.read_text()
        assert "0/50 violations" in capsys.readouterr().out


AUDIT_HEADER = "trial_index,seed,bound,true_risk_est,true_risk_se,margin,violated"
