import numpy as np
import pytest

from adaptrd.adaptation import (
    FixedThreshold,
    NntTargetThreshold,
    NoModelUpdate,
    RateTargetThreshold,
    RecalibrateModel,
)
from adaptrd.errors import ConfigError
from adaptrd.estimator import EstimatorConfig
from adaptrd.harness import (
    ScenarioConfig,
    evaluate_at_final_threshold,
    run_replications,
    run_scenario,
    scenario_preset,
)
from adaptrd.numerics import GAUSSIAN, LOGIT
from adaptrd.outcomes import AscvdParams, OutcomeModel, draw_noise, outcomes_from_noise
from adaptrd.seeds import SeedStream


def small_preset(sid, seed=9, n=700, **overrides):
    return scenario_preset(sid, seed=seed, n_patients=n, **overrides)


class TestConfigValidation:
    def test_scenario_outcome_mismatch(self):
        with pytest.raises(ConfigError, match="attendance"):
            ScenarioConfig(
                scenario_id=1,
                outcome=OutcomeModel("cholesterol"),
                threshold_strategy=RateTargetThreshold(0.3),
                model_strategy=NoModelUpdate(),
                estimator=EstimatorConfig(family=GAUSSIAN),
            )

    def test_family_outcome_consistency(self):
        with pytest.raises(ConfigError, match="bernoulli"):
            ScenarioConfig(
                scenario_id=1,
                outcome=OutcomeModel("attendance"),
                threshold_strategy=RateTargetThreshold(0.3),
                model_strategy=NoModelUpdate(),
                estimator=EstimatorConfig(family=GAUSSIAN),
            )

    def test_degenerate_strategies_always_allowed(self):
        cfg = ScenarioConfig(
            scenario_id=2,
            outcome=OutcomeModel("cholesterol"),
            threshold_strategy=FixedThreshold(0.1),
            model_strategy=NoModelUpdate(),
            estimator=EstimatorConfig(family=GAUSSIAN),
            n_patients=500,
        )
        assert cfg.scenario_id == 2

    def test_wrong_adaptive_strategy_rejected(self):
        with pytest.raises(ConfigError, match="threshold strategy"):
            ScenarioConfig(
                scenario_id=1,
                outcome=OutcomeModel("attendance"),
                threshold_strategy=NntTargetThreshold(3.0),
                model_strategy=NoModelUpdate(),
                estimator=EstimatorConfig(family=LOGIT),
            )

    def test_warmup_bounds(self):
        with pytest.raises(ConfigError, match="warmup"):
            scenario_preset(1, n_patients=300, warmup=400)

    def test_invalid_scenario_id(self):
        with pytest.raises(ConfigError, match="scenario id"):
            scenario_preset(9)


class TestRunScenario:
    def test_static_strategies_single_version_constant_threshold(self):
        cfg = ScenarioConfig(
            scenario_id=2,
            outcome=OutcomeModel("cholesterol"),
            threshold_strategy=FixedThreshold(0.1),
            model_strategy=NoModelUpdate(),
            estimator=EstimatorConfig(family=GAUSSIAN),
            n_patients=500,
            seed=4,
        )
        trial = run_scenario(cfg)
        assert np.all(trial.threshold == 0.1)
        assert len(trial.history.models) == 1
        assert trial.matrix.n_distinct == 1
        assert trial.events == []

    def test_same_seed_reproduces_trial_exactly(self):
        cfg = small_preset(1)
        t1, t2 = run_scenario(cfg), run_scenario(cfg)
        for field in ("raw_risk", "shifted_risk", "treatment", "outcome",
                      "baseline_risk", "threshold", "model_version"):
            assert np.array_equal(getattr(t1, field), getattr(t2, field)), field
        assert t1.events == t2.events

    def test_treatment_matches_assignment_rule(self):
        trial = run_scenario(small_preset(1))
        assert np.array_equal(trial.treatment, (trial.shifted_risk >= 0).astype(int))
        assert np.allclose(trial.shifted_risk, trial.raw_risk - trial.threshold)

    def test_warmup_discipline_and_cadence(self):
        trial = run_scenario(small_preset(1, n=700))
        indices = sorted({e.index for e in trial.events})
        assert all(i >= 400 for i in indices)
        assert all((i - 400) % 100 == 0 for i in indices)
        assert indices == [400, 500, 600]

    def test_no_retroactivity(self):
        # records at or before an update index keep the threshold they saw
        trial = run_scenario(small_preset(1, n=700))
        updates = [e for e in trial.events if e.kind == "threshold_update"]
        assert updates
        ev = updates[0]
        assert np.all(trial.threshold[: ev.index] == ev.old)
        assert trial.threshold[ev.index] == ev.new

    def test_dgp_stationarity_replay(self):
        cfg = small_preset(4, n=900)
        trial = run_scenario(cfg)
        noise = draw_noise(cfg.outcome, SeedStream(cfg.seed).child(1), cfg.n_patients)
        replay = outcomes_from_noise(cfg.outcome, trial.baseline_risk, trial.treatment, noise)
        assert np.array_equal(replay, trial.outcome)

    def test_scenario1_rate_targeting(self):
        cfg = scenario_preset(1, seed=3)
        trial = run_scenario(cfg)
        assert abs(np.mean(trial.treatment[-1000:]) - 0.30) < 0.05

    def test_scenario1_mu_curves_track_truth(self):
        # estimated arm-mean curves stay close to the kernel-smoothed true
        # conditional means wherever both arms have kernel support
        from adaptrd.estimator import default_grid, effect_curve, fit_outcome_surface
        from adaptrd.outcomes import true_smoothed_arm_mean

        cfg = scenario_preset(1, seed=0)
        trial = run_scenario(cfg, SeedStream(0, (1,)))
        surface = fit_outcome_surface(trial.matrix, trial.treatment, trial.outcome, cfg.estimator)
        grid = default_grid(trial.matrix.focal_shifted, 41)
        curve = effect_curve(surface, trial.matrix, grid, cfg.estimator)
        focal = trial.matrix.focal_shifted
        errs = []
        for e in curve.estimates:
            if e.low_support:
                continue
            for arm, mu_hat in ((0, e.mu0_hat), (1, e.mu1_hat)):
                mu_true = true_smoothed_arm_mean(
                    cfg.outcome, trial.baseline_risk, arm, e.r,
                    cfg.estimator.bandwidth, weight_values=focal,
                )
                errs.append(abs(mu_hat - mu_true))
        assert np.mean(errs) < 0.05

    def test_scenario2_naive_bias_exceeds_adaptive(self):
        cfg = small_preset(2, n=800, seed=23)
        rep = run_replications(cfg, 10)
        pm = rep.per_method
        assert abs(pm["naive"]["bias"]) > abs(pm["adaptive_rd"]["bias"])

    def test_model_updates_produce_new_versions(self):
        trial = run_scenario(small_preset(5, n=900))
        assert len(trial.history.models) >= 2
        assert trial.history.models[0].provenance == "original"
        assert all(m.provenance == "revised" for m in trial.history.models[1:])

    def test_baseline_risk_is_original_model(self):
        from adaptrd.risk_engine import original_pce_model, predict_risk_batch

        trial = run_scenario(small_preset(4, n=900))
        expected = predict_risk_batch(original_pce_model(), trial.covariates)
        assert np.array_equal(trial.baseline_risk, expected)

    def test_csv_cohort_source(self, tmp_path):
        from adaptrd.cohort import DEFAULT_COHORT_PARAMS, sample_cohort, save_cohort_csv

        table = sample_cohort(DEFAULT_COHORT_PARAMS, SeedStream(77), 600)
        path = tmp_path / "cohort.csv"
        save_cohort_csv(path, table.patients())
        cfg = scenario_preset(1, n_patients=500, cohort_csv=str(path), seed=5)
        trial = run_scenario(cfg)
        assert trial.n == 500
        assert np.array_equal(trial.covariates.age, table.age[:500])

    def test_csv_cohort_too_short_rejected(self, tmp_path):
        from adaptrd.cohort import DEFAULT_COHORT_PARAMS, sample_cohort, save_cohort_csv

        table = sample_cohort(DEFAULT_COHORT_PARAMS, SeedStream(78), 100)
        path = tmp_path / "cohort.csv"
        save_cohort_csv(path, table.patients())
        cfg = scenario_preset(1, n_patients=500, cohort_csv=str(path))
        with pytest.raises(ConfigError, match="100 rows"):
            run_scenario(cfg)


class TestEvaluate:
    def test_null_treatment_effect_within_three_se(self):
        # gamma3 = 0 removes the treatment term entirely; truth is 0
        hits = 0
        for rep in range(8):
            cfg = scenario_preset(
                4,
                seed=61,
                n_patients=1500,
                outcome=OutcomeModel("ascvd", AscvdParams(gamma3=0.0)),
            )
            trial = run_scenario(cfg, SeedStream(cfg.seed, (rep,)))
            result = evaluate_at_final_threshold(trial)
            assert result.truth == 0.0
            m = result.methods["adaptive_rd"]
            if m.estimate is not None and abs(m.estimate) < 3 * m.se:
                hits += 1
        assert hits >= 7

    def test_all_methods_reported(self):
        trial = run_scenario(small_preset(2, n=800))
        result = evaluate_at_final_threshold(trial)
        assert set(result.methods) == {
            "adaptive_rd", "naive", "outcome_regression", "ipw", "aipw",
        }
        for m in result.methods.values():
            assert (m.estimate is None) != (m.error is None)


class TestReplications:
    def test_count_one_reduces_to_single_evaluation(self):
        cfg = small_preset(2, n=800, seed=13)
        report = run_replications(cfg, 1)
        trial = run_scenario(cfg, SeedStream(cfg.seed, (0,)))
        result = evaluate_at_final_threshold(trial)
        est = result.methods["adaptive_rd"].estimate
        err = report.per_method["adaptive_rd"]["errors"][0]
        assert err == pytest.approx(est - result.truth, abs=1e-12)

    def test_aggregates_consistent(self):
        report = run_replications(small_preset(2, n=800, seed=17), 5)
        for entry in report.per_method.values():
            if entry["bias"] is None:
                continue
            assert entry["mse"] + 1e-12 >= entry["bias"] ** 2
        cov = report.per_method["adaptive_rd"]["coverage"]
        assert cov is None or 0.0 <= cov <= 1.0

    def test_worker_count_invariance(self):
        cfg = small_preset(2, n=700, seed=19)
        r1 = run_replications(cfg, 4, workers=1)
        r2 = run_replications(cfg, 4, workers=2)
        assert r1.to_dict() == r2.to_dict()

    def test_replication_indexing_is_stable(self):
        cfg = small_preset(2, n=700, seed=19)
        r1 = run_replications(cfg, 2)
        r2 = run_replications(cfg, 4)
        # first two replications identical regardless of batch size
        assert r1.per_method["adaptive_rd"]["errors"] == r2.per_method["adaptive_rd"]["errors"][:2]
