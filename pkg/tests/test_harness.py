"""Tests for the benchmark experiment runner and its file formats."""

import dataclasses
import json
import os

import numpy as np
import pytest

from tvcate.harness import (ExperimentConfig, ExperimentResult, ResultRow,
                            config_to_dict, config_to_text,
                            config_with_overrides, default_sweep_config,
                            emit_results, emit_sweep, format_results_csv,
                            format_summary_csv, format_summary_table,
                            format_sweep_csv, overlap_sweep,
                            parse_config_text, resolve_output_dir,
                            run_experiment, spearman, summarize,
                            summarize_sweep, OUTPUT_DIR_ENV)

TINY = ExperimentConfig(n_train=300, n_test=150, seeds=(0, 1), taus=(0, 1),
                        learners=("PI-RA", "DR"))


class TestConfigValidation:
    def test_defaults_are_valid(self):
        cfg = ExperimentConfig()
        assert cfg.dgp == "d1"
        assert cfg.learners == ("PI-HA", "PI-RA", "RA", "IPW", "DR", "IVW-DR")

    @pytest.mark.parametrize("kwargs,match", [
        (dict(seeds=()), "seeds"),
        (dict(seeds=(1, 1)), "seeds"),
        (dict(taus=()), "taus"),
        (dict(taus=(-1,)), "taus"),
        (dict(learners=()), "at least one"),
        (dict(learners=("DR", "DR")), "repeat"),
        (dict(learners=("NotALearner",)), "unknown learner"),
        (dict(n_train=0), "n_train"),
        (dict(clip_eps=0.0), "clip_eps"),
        (dict(clip_eps=0.5), "clip_eps"),
        (dict(eval_t=0), "eval_t"),
        (dict(gammas=()), "gammas"),
        (dict(workers=0), "workers"),
    ])
    def test_rejects_bad_fields(self, kwargs, match):
        with pytest.raises(ValueError, match=match):
            ExperimentConfig(**kwargs)


class TestConfigSerialization:
    @pytest.mark.parametrize("cfg", [
        ExperimentConfig(),
        default_sweep_config(),
        ExperimentConfig(eval_t=2, classifier_l2=0.5, fast=True,
                         output_dir="out", gammas=(0.0, 1.5)),
    ])
    def test_text_round_trip(self, cfg):
        text = config_to_text(cfg)
        rebuilt = config_with_overrides(None, parse_config_text(text))
        assert rebuilt == cfg

    def test_parse_skips_comments_and_blanks(self):
        items = parse_config_text("# a comment\n\nn_train = 7 # inline\n")
        assert items == {"n_train": "7"}

    def test_parse_rejects_malformed_line(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_config_text("n_train = 7\nnot a config line\n")

    def test_parse_last_assignment_wins(self):
        items = parse_config_text("n_train = 7\nn_train = 9\n")
        assert items == {"n_train": "9"}

    def test_override_unknown_key(self):
        with pytest.raises(ValueError, match="unknown config key"):
            config_with_overrides(None, {"n_teach": "7"})

    def test_override_bad_bool(self):
        with pytest.raises(ValueError, match="boolean"):
            config_with_overrides(None, {"fast": "maybe"})

    def test_override_coercions(self):
        cfg = config_with_overrides(None, {
            "taus": "1,2", "seeds": "3", "learners": "DR, IVW-DR",
            "gammas": "0,0.5", "eval_t": "none", "classifier_l2": "auto",
            "second_stage_ridge": "0.25", "split_enabled": "yes"})
        assert cfg.taus == (1, 2)
        assert cfg.seeds == (3,)
        assert cfg.learners == ("DR", "IVW-DR")
        assert cfg.gammas == (0.0, 0.5)
        assert cfg.eval_t is None
        assert cfg.classifier_l2 == "auto"
        assert cfg.second_stage_ridge == 0.25
        assert cfg.split_enabled is True

    def test_config_dict_is_json_ready(self):
        json.dumps(config_to_dict(ExperimentConfig()))


class TestRunExperiment:
    def test_row_grid_and_order(self):
        result = run_experiment(TINY)
        assert len(result.rows) == 2 * 2 * 2
        key = [(TINY.learners.index(r.learner), r.tau,
                TINY.seeds.index(r.seed)) for r in result.rows]
        assert key == sorted(key)
        assert {r.learner for r in result.rows} == {"PI-RA", "DR"}

    def test_rerun_is_identical(self):
        assert run_experiment(TINY) == run_experiment(TINY)

    def test_workers_do_not_change_rows(self):
        parallel = run_experiment(dataclasses.replace(TINY, workers=2))
        assert parallel.rows == run_experiment(TINY).rows
        assert parallel.advisories == run_experiment(TINY).advisories

    def test_walltime_zero_unless_recorded(self):
        result = run_experiment(TINY)
        assert all(r.walltime_s == 0.0 for r in result.rows)
        timed = run_experiment(dataclasses.replace(TINY,
                                                   record_walltime=True))
        assert all(r.walltime_s > 0.0 for r in timed.rows)

    def test_fast_matches_explicit_sizes(self):
        shrunk = run_experiment(dataclasses.replace(
            TINY, n_train=3000, n_test=1500, fast=True))
        explicit = run_experiment(dataclasses.replace(
            TINY, n_train=300, n_test=150))
        assert shrunk.rows == explicit.rows

    def test_fixed_time_evaluation_changes_rmse(self):
        pooled = run_experiment(TINY)
        fixed = run_experiment(dataclasses.replace(TINY, eval_t=1))
        assert fixed.rows != pooled.rows

    def test_fixed_time_past_horizon_rejected(self):
        with pytest.raises(ValueError, match="eval_t"):
            run_experiment(dataclasses.replace(TINY, eval_t=5, taus=(1,)))

    def test_horizon_without_pair_rejected(self):
        with pytest.raises(ValueError, match="pair"):
            run_experiment(dataclasses.replace(TINY, taus=(4,)))

    def test_enumeration_generator_rejected(self):
        with pytest.raises(ValueError, match="closed-form"):
            run_experiment(dataclasses.replace(TINY, dgp="mini-discrete"))

    def test_clip_fraction_reported_for_weighting_learners(self):
        cfg = dataclasses.replace(TINY, clip_eps=0.4, taus=(1,),
                                  learners=("PI-RA", "DR"))
        result = run_experiment(cfg)
        by_kind = {r.learner: r for r in result.rows if r.seed == 0}
        assert by_kind["DR"].clip_fraction > 0.0
        assert by_kind["PI-RA"].clip_fraction == 0.0

    def test_low_overlap_advisories_are_collected(self):
        cfg = dataclasses.replace(TINY, n_train=50, n_test=50)
        result = run_experiment(cfg)
        assert result.advisories
        assert all(isinstance(note, str) for note in result.advisories)

    def test_rmse_sane_at_moderate_size(self):
        cfg = ExperimentConfig(n_train=2000, n_test=400, seeds=(0,),
                               taus=(0,), learners=("PI-RA",))
        result = run_experiment(cfg)
        assert result.rows[0].rmse < 0.2

    def test_nuisance_failure_names_tau_and_seed(self):
        # At n=500 the three-step intervention arm paths can be entirely
        # absent from a training draw; the error should say where.
        cfg = ExperimentConfig(fast=True, seeds=(2,), taus=(2,))
        with pytest.raises(RuntimeError, match=r"tau=2 seed=2"):
            run_experiment(cfg)


def _handmade_result():
    cfg = ExperimentConfig(seeds=(0, 1), taus=(1,), learners=("DR",))
    rows = (ResultRow("DR", 1, 0, 1.0 / 3.0, 0.0, 0.0),
            ResultRow("DR", 1, 1, 2.0 / 3.0, 0.0, 0.25))
    return ExperimentResult(cfg, rows, ("note",))


class TestSummariesAndFormats:
    def test_summarize_mean_and_sd(self):
        summary = summarize(_handmade_result())
        assert len(summary) == 1
        assert summary[0]["mean_rmse"] == pytest.approx(0.5)
        expected_sd = np.std([1.0 / 3.0, 2.0 / 3.0], ddof=1)
        assert summary[0]["sd_rmse"] == pytest.approx(expected_sd)

    def test_single_seed_sd_is_zero(self):
        cfg = ExperimentConfig(seeds=(0,), taus=(1,), learners=("DR",))
        result = ExperimentResult(cfg, (ResultRow("DR", 1, 0, 0.4, 0.0, 0.0),))
        assert summarize(result)[0]["sd_rmse"] == 0.0

    def test_results_csv_format(self):
        text = format_results_csv(_handmade_result())
        lines = text.splitlines()
        assert lines[0] == "learner,tau,seed,rmse,walltime_s,clip_fraction"
        assert lines[1] == "DR,1,0,0.33333333333333331,0,0"
        assert lines[2] == "DR,1,1,0.66666666666666663,0,0.25"

    def test_summary_csv_format(self):
        lines = format_summary_csv(_handmade_result()).splitlines()
        assert lines[0] == "learner,tau,mean_rmse,sd_rmse"
        assert lines[1].startswith("DR,1,0.5,")

    def test_summary_table_display_scale(self):
        table = format_summary_table(_handmade_result(), scale=10.0)
        assert "(x10)" in table
        assert "5.0000" in table  # 0.5 mean shown x10

    def test_csv_reals_round_trip(self):
        row = format_results_csv(_handmade_result()).splitlines()[1]
        assert float(row.split(",")[3]) == 1.0 / 3.0


class TestEmit:
    def test_emit_results_files_and_bytes(self, tmp_path):
        result = run_experiment(TINY)
        paths = emit_results(result, str(tmp_path))
        assert sorted(os.path.basename(p) for p in paths.values()) == [
            "results.csv", "results.json", "results_summary.csv"]
        first = {k: open(p, "rb").read() for k, p in paths.items()}
        paths = emit_results(run_experiment(TINY), str(tmp_path))
        second = {k: open(p, "rb").read() for k, p in paths.items()}
        assert first == second
        payload = json.loads(first["json"])
        assert payload["config"]["dgp"] == "d1"
        assert len(payload["rows"]) == len(result.rows)
        assert payload["rows"][0]["learner"] == result.rows[0].learner
        assert payload["summary"] == summarize(result)

    def test_output_dir_resolution(self, monkeypatch):
        monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
        assert resolve_output_dir(ExperimentConfig()) == "results"
        monkeypatch.setenv(OUTPUT_DIR_ENV, "/tmp/elsewhere")
        assert resolve_output_dir(ExperimentConfig()) == "/tmp/elsewhere"
        cfg = ExperimentConfig(output_dir="chosen")
        assert resolve_output_dir(cfg) == "chosen"


SWEEP_TINY = dataclasses.replace(default_sweep_config(), n_train=300,
                                 n_test=150, seeds=(0, 1), gammas=(0.0, 4.0))


class TestOverlapSweep:
    def test_rows_and_order(self):
        sweep = overlap_sweep(SWEEP_TINY)
        assert len(sweep.rows) == 2 * 2 * 2  # gammas x learners x seeds
        key = [(SWEEP_TINY.gammas.index(r.gamma),
                SWEEP_TINY.learners.index(r.learner), r.seed)
               for r in sweep.rows]
        assert key == sorted(key)
        assert all(r.tau == 1 for r in sweep.rows)

    def test_rerun_and_workers_identical(self):
        base = overlap_sweep(SWEEP_TINY)
        assert overlap_sweep(SWEEP_TINY) == base
        parallel = overlap_sweep(dataclasses.replace(SWEEP_TINY, workers=2))
        assert parallel.rows == base.rows

    def test_requires_d3_family(self):
        with pytest.raises(ValueError, match="d3"):
            overlap_sweep(dataclasses.replace(SWEEP_TINY, dgp="d1"))

    def test_requires_single_tau(self):
        with pytest.raises(ValueError, match="single tau"):
            overlap_sweep(dataclasses.replace(SWEEP_TINY, taus=(0, 1)))

    def test_summary_and_files(self, tmp_path):
        sweep = overlap_sweep(SWEEP_TINY)
        summary = summarize_sweep(sweep)
        assert [s["gamma"] for s in summary] == [0.0, 0.0, 4.0, 4.0]
        lines = format_sweep_csv(sweep).splitlines()
        assert lines[0] == ("gamma,learner,tau,seed,rmse,walltime_s,"
                            "clip_fraction")
        paths = emit_sweep(sweep, str(tmp_path))
        payload = json.loads(open(paths["json"]).read())
        assert payload["gamma_grid"] == [0.0, 4.0]
        assert set(payload["curves"]) == {"DR", "IVW-DR"}
        assert len(payload["curves"]["DR"]["mean_rmse"]) == 2
        first = open(paths["csv"], "rb").read()
        emit_sweep(overlap_sweep(SWEEP_TINY), str(tmp_path))
        assert open(paths["csv"], "rb").read() == first


class TestSpearman:
    def test_perfect_monotone(self):
        assert spearman([0, 2, 4, 6, 8], [1, 5, 7, 20, 21]) == \
            pytest.approx(1.0)
        assert spearman([0, 2, 4, 6, 8], [5, 4, 3, 2, 1]) == \
            pytest.approx(-1.0)

    def test_tied_values_use_average_ranks(self):
        # x ranks (0.5, 0.5, 2) vs y ranks (0, 1, 2): rho = 1.5/sqrt(3)
        assert spearman([1.0, 1.0, 2.0], [1.0, 2.0, 3.0]) == \
            pytest.approx(1.5 / np.sqrt(3.0))

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError, match="equal-length"):
            spearman([1, 2], [1, 2, 3])
        with pytest.raises(ValueError, match="equal-length"):
            spearman([1], [2])
