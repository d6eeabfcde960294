"""Prequential harness: trials, pairing, determinism, reports, config, CLI."""

import numpy as np
import pytest

from bayens import cli, harness
from bayens.baselines import voting_predict
from bayens.data import SplitPlan, load_dataset, ordering, split, to_dense_matrix
from bayens.errors import ConfigError
from bayens.harness import (
    ExperimentConfig,
    config_from_mapping,
    load_config,
    load_summary_rows,
    make_table,
    run_experiment,
    run_trial,
    write_records,
    write_report,
)
from bayens.weak import build_pool

from conftest import make_synthetic_text


def small_config(path, **overrides) -> ExperimentConfig:
    defaults = dict(
        dataset=str(path),
        methods=("voting",),
        m=15,
        trials=2,
        seed=3,
        learner_kind="perceptron",
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


class TestRunTrial:
    def test_voting_errors_match_independent_recount(self, synthetic_path):
        config = small_config(synthetic_path)
        record = run_trial(config, 0)["voting"]

        # Independent rescan: rebuild the same split, ordering, and pool, then
        # recount the voting rule's mistakes directly.
        dataset = load_dataset(synthetic_path)
        plan = SplitPlan(config.train_fraction, config.seed, config.trials)
        train, eval_set = split(dataset, plan, 0)
        order = ordering(eval_set, config.seed, 0)
        pool = build_pool(
            train, config.m, "perceptron", config.seed, trial=0,
            include_prob=config.subset_prob,
        )
        x = to_dense_matrix(eval_set.samples, dataset.dimension)
        mistakes = 0
        recount = []
        for idx in order:
            predicted = voting_predict(pool.scores(x[idx]))
            mistakes += predicted != eval_set.samples[idx].label
            recount.append(mistakes)
        np.testing.assert_array_equal(record.cumulative_errors, recount)

    def test_empty_eval_rejected(self, tmp_path):
        path = tmp_path / "tiny.libsvm"
        path.write_text("+1 1:1\n-1 1:-1\n", None)
        # 10 samples would be needed for a non-empty split at 10%.
        with pytest.raises(ConfigError):
            run_trial(small_config(path, trials=1), 0)

    def test_deterministic_records(self, synthetic_path):
        config = small_config(synthetic_path, methods=("bayes_basic", "sag"))
        a = run_trial(config, 1)
        b = run_trial(config, 1)
        for method in config.methods:
            assert a[method].to_csv() == b[method].to_csv()

    def test_methods_share_stream_and_pool(self, synthetic_path):
        # A method's record must not depend on which other methods ran.
        config_alone = small_config(synthetic_path, methods=("voting",))
        config_paired = small_config(
            synthetic_path, methods=("voting", "sgd", "bayes_basic")
        )
        alone = run_trial(config_alone, 0)["voting"]
        paired = run_trial(config_paired, 0)["voting"]
        assert alone.to_csv() == paired.to_csv()

    def test_prequential_causality_canary(self, tmp_path):
        # Flip the label of one late sample: every prediction up to and
        # including that step must be unchanged (the label is only revealed
        # after predicting).
        text = make_synthetic_text(n=120, d=6, seed=21)
        clean = tmp_path / "clean.libsvm"
        clean.write_text(text, None)

        config = small_config(clean, methods=("bayes_basic", "sgd", "sag"), trials=1)
        records = run_trial(config, 0)

        # Locate the sample streamed at (0-based) step `flip_at` and poison it.
        dataset = load_dataset(clean)
        plan = SplitPlan(config.train_fraction, config.seed, config.trials)
        _, eval_set = split(dataset, plan, 0)
        order = ordering(eval_set, config.seed, 0)
        flip_at = len(order) - 3
        victim = eval_set.samples[order[flip_at]]
        lines = text.strip().splitlines()
        for row, sample in enumerate(dataset.samples):
            if sample == victim:
                flipped = ("-1" if sample.label > 0 else "+1") + lines[row][2:]
                lines[row] = flipped
                break
        poisoned = tmp_path / "poisoned.libsvm"
        poisoned.write_text("\n".join(lines) + "\n", None)

        config_poisoned = small_config(
            poisoned, methods=("bayes_basic", "sgd", "sag"), trials=1
        )
        poisoned_records = run_trial(config_poisoned, 0)
        for method in records:
            np.testing.assert_array_equal(
                records[method].predictions[: flip_at + 1],
                poisoned_records[method].predictions[: flip_at + 1],
            )

    def test_online_mode_updates_learners(self, synthetic_path):
        config = small_config(
            synthetic_path, methods=("bayes_basic",), frozen_pool=False, trials=1
        )
        record = run_trial(config, 0)["bayes_basic"]
        assert record.steps == 240  # whole dataset streams in online mode
        # a learnable stream must do far better than chance by the end
        assert record.final_error_rate < 0.5

    def test_error_rates_consistent(self, synthetic_path):
        record = run_trial(small_config(synthetic_path), 0)["voting"]
        rates = record.error_rates()
        assert rates[-1] == record.final_error_rate
        assert len(rates) == record.steps
        assert np.all(np.diff(record.cumulative_errors) >= 0)


class TestRunExperiment:
    def test_single_trial_mean(self, synthetic_path):
        config = small_config(synthetic_path, trials=1)
        summary = run_experiment(config)
        assert summary.mean_error("voting") == summary.records["voting"][0].final_error_rate

    def test_mean_over_trials(self, synthetic_path):
        config = small_config(synthetic_path, trials=3)
        summary = run_experiment(config)
        errors = summary.trial_errors("voting")
        assert summary.mean_error("voting") == pytest.approx(sum(errors) / 3)

    def test_all_methods_run(self, synthetic_path):
        config = small_config(
            synthetic_path,
            methods=(
                "single", "voting", "sgd", "sgd_avg", "sag",
                "bayes_basic", "bayes_shape", "bayes_shape_rate",
            ),
            m=8,
            trials=1,
        )
        summary = run_experiment(config)
        for method in config.methods:
            assert 0.0 <= summary.mean_error(method) <= 1.0

    def test_weight_methods_beat_chance_on_learnable_stream(self, synthetic_path):
        config = small_config(
            synthetic_path, methods=("bayes_basic", "sgd"), m=20, trials=2
        )
        summary = run_experiment(config)
        assert summary.mean_error("bayes_basic") < 0.45
        assert summary.mean_error("sgd") < 0.45


class TestRecordsAndReport:
    def test_write_and_report(self, synthetic_path, tmp_path):
        config = small_config(synthetic_path, methods=("voting", "bayes_basic"), trials=2)
        summary = run_experiment(config)
        out = tmp_path / "out"
        paths = write_records(summary, out)
        record_files = sorted(p.name for p in (out / "records").glob("*.csv"))
        assert len(record_files) == 4
        assert (out / "summary.csv").exists()

        table_path = write_report(out, fmt="csv")
        table = table_path.read_text()
        assert table.splitlines()[0] == "dataset,voting,bayes_basic"
        mean_curve = (out / "curves" / "synthetic__voting__mean.csv").read_text()
        steps = summary.records["voting"][0].steps
        assert len(mean_curve.strip().splitlines()) == steps + 1  # header + rows

        # curve endpoint equals the reported mean error
        last = mean_curve.strip().splitlines()[-1].split(",")
        assert float(last[1]) == pytest.approx(summary.mean_error("voting"))

    def test_record_csv_shape(self, synthetic_path):
        record = run_trial(small_config(synthetic_path), 0)["voting"]
        lines = record.to_csv().strip().splitlines()
        assert lines[0] == "step,cumulative_errors,error_rate"
        assert len(lines) == record.steps + 1
        last = lines[-1].split(",")
        assert float(last[2]) == pytest.approx(record.final_error_rate)

    def test_markdown_table(self, synthetic_path, tmp_path):
        config = small_config(synthetic_path, trials=1)
        summary = run_experiment(config)
        write_records(summary, tmp_path / "r")
        path = write_report(tmp_path / "r", fmt="md")
        assert path.suffix == ".md"
        assert path.read_text().startswith("| dataset |")

    def test_report_accumulates_datasets(self, synthetic_path, tmp_path):
        # Two datasets written into one run directory become two table rows.
        other = tmp_path / "second.libsvm"
        other.write_text(make_synthetic_text(n=150, d=5, seed=31), None)
        out = tmp_path / "out"
        for path in (synthetic_path, other):
            summary = run_experiment(small_config(path, trials=1))
            write_records(summary, out / path.stem)
        rows = []
        for sub in ("synthetic", "second"):
            rows.extend(load_summary_rows(out / sub))
        table = make_table(rows, fmt="csv")
        lines = table.strip().splitlines()
        assert lines[0] == "dataset,voting"
        assert {line.split(",")[0] for line in lines[1:]} == {"synthetic", "second"}


class TestConfig:
    def test_defaults_and_validation(self):
        config = ExperimentConfig(dataset="x.libsvm")
        config.validate()
        with pytest.raises(ConfigError):
            ExperimentConfig(dataset="x", methods=("nope",)).validate()
        with pytest.raises(ConfigError):
            ExperimentConfig(dataset="x", m=0).validate()
        with pytest.raises(ConfigError):
            ExperimentConfig(dataset="x", base_loss="cubist").validate()

    def test_mapping_coercion(self):
        config = config_from_mapping(
            {
                "dataset": "d.libsvm",
                "methods": "voting, bayes_basic",
                "m": "25",
                "theta": "0.2",
                "frozen_pool": "false",
            }
        )
        assert config.methods == ("voting", "bayes_basic")
        assert config.m == 25 and config.theta == 0.2 and config.frozen_pool is False

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            config_from_mapping({"dataset": "d", "bogus": "1"})

    def test_config_file_with_overrides(self, tmp_path):
        path = tmp_path / "exp.conf"
        path.write_text(
            "# experiment\ndataset = d.libsvm\nmethods = voting\nseed = 9\n",
            None,
        )
        config = load_config(path, {"seed": "11", "m": "7"})
        assert config.seed == 11 and config.m == 7 and config.methods == ("voting",)

    def test_config_file_syntax_error(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("dataset d.libsvm\n", None)
        with pytest.raises(ConfigError):
            load_config(path)

    def test_loss_kind_per_method(self):
        config = ExperimentConfig(dataset="x")
        assert config.loss_kind_for("bayes_basic") == "ramp"
        assert config.loss_kind_for("bayes_shape") == "logistic"


class TestCli:
    def test_run_and_report(self, synthetic_path, tmp_path, capsys):
        out = tmp_path / "run"
        code = cli.main(
            [
                "run",
                "--dataset", str(synthetic_path),
                "--method", "voting,bayes_basic",
                "--trials", "2",
                "--seed", "5",
                "--m", "10",
                "--out", str(out),
            ]
        )
        assert code == 0
        assert (out / "summary.csv").exists()
        code = cli.main(["report", "--in", str(out), "--format", "md"])
        assert code == 0
        assert (out / "table.md").exists()

    def test_run_requires_dataset(self, capsys):
        assert cli.main(["run", "--method", "voting"]) == 2

    def test_missing_dataset_file_is_reported(self, tmp_path, capsys):
        code = cli.main(["run", "--dataset", str(tmp_path / "nope.libsvm")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_config_file_flow(self, synthetic_path, tmp_path):
        conf = tmp_path / "exp.conf"
        conf.write_text(
            f"dataset = {synthetic_path}\nmethods = voting\ntrials = 1\nm = 8\n",
            None,
        )
        out = tmp_path / "o"
        assert cli.main(["run", "--config", str(conf), "--out", str(out)]) == 0
        assert (out / "records").exists()

    def test_verify_gap_cli(self, tmp_path):
        out = tmp_path / "v"
        code = cli.main(
            ["verify", "--check", "gap", "--horizon", "50", "--out", str(out)]
        )
        assert code == 0
        lines = (out / "gap.csv").read_text().strip().splitlines()
        assert lines[0] == "t,gap,gap_sqrt_t"
        assert len(lines) == 52  # header + t = 0..50
