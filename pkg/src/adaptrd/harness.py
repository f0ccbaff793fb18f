"""Scenario runner and replication harness.

Simulates sequential patients through the adaptive risk/threshold pipeline:
each arrival is scored by the current model, compared to the current
threshold, treated or not, and an outcome is drawn from the scenario's
data-generating process at the patient's baseline risk. At configured
indices the threshold and/or model update using only completed records;
updates never touch the past. Completed trials are evaluated at the final
threshold against the known ground truth, and replication batches aggregate
bias, MSE and interval coverage per estimator.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .adaptation import (
    FixedThreshold,
    NntTargetThreshold,
    NoModelUpdate,
    RateTargetThreshold,
    RecalibrateModel,
    ReviseModel,
    cohens_d_curve,
    nnt_to_cohens_d,
    pooled_outcome_sd,
    recalibrate_model,
    revise_model,
    threshold_for_nnt,
    threshold_for_rate,
)
from .cohort import CohortTable, SyntheticCohortParams, load_cohort_csv
from .errors import AdaptRdError, ConfigError
from .estimator import (
    EstimatorConfig,
    aipw_ate,
    default_grid,
    effect_curve,
    estimate_effect,
    fit_outcome_surface,
    ipw_ate,
    naive_diff,
    outcome_regression_ate,
)
from .numerics import GAUSSIAN, LOGIT
from .outcomes import (
    BINARY,
    ClampStats,
    OutcomeModel,
    draw_noise,
    outcomes_from_noise,
    true_smoothed_ate,
)
from .risk_engine import (
    CounterfactualRiskMatrix,
    ModelHistory,
    PceCoefficientSet,
    RiskModelVersion,
    build_counterfactual_matrix,
    load_coefficients_file,
    original_pce_model,
    predict_risk_batch,
)
from .seeds import SeedStream

ThresholdStrategy = Union[FixedThreshold, RateTargetThreshold, NntTargetThreshold]
ModelStrategy = Union[NoModelUpdate, RecalibrateModel, ReviseModel]

METHODS = ("adaptive_rd", "naive", "outcome_regression", "ipw", "aipw")

# Per-scenario canonical (outcome variant, threshold kind, model kind, family).
# The degenerate strategies (fixed threshold, no model update) are always
# admissible so no-adaptation baselines of any scenario can be run.
_SCENARIO_SHAPES = {
    1: ("attendance", RateTargetThreshold, NoModelUpdate, LOGIT),
    2: ("cholesterol", RateTargetThreshold, NoModelUpdate, GAUSSIAN),
    3: ("cholesterol", NntTargetThreshold, NoModelUpdate, GAUSSIAN),
    4: ("ascvd", FixedThreshold, RecalibrateModel, LOGIT),
    5: ("ascvd", FixedThreshold, ReviseModel, LOGIT),
}


@dataclass(frozen=True)
class ScenarioConfig:
    scenario_id: int
    outcome: OutcomeModel
    threshold_strategy: ThresholdStrategy
    model_strategy: ModelStrategy
    estimator: EstimatorConfig
    n_patients: int = 3000
    warmup: int = 400
    update_every: int = 100
    initial_threshold: float = 0.10
    seed: int = 0
    cohort_params: SyntheticCohortParams = field(default_factory=SyntheticCohortParams)
    cohort_csv: Optional[str] = None
    coefficients_file: Optional[str] = None

    def __post_init__(self):
        if self.scenario_id not in _SCENARIO_SHAPES:
            raise ConfigError(f"scenario id must be 1..5, got {self.scenario_id}")
        if not 1 <= self.warmup < self.n_patients:
            raise ConfigError("need 1 <= warmup < n_patients")
        if self.update_every < 1:
            raise ConfigError("update_every must be >= 1")
        if not 0.0 < self.initial_threshold < 1.0:
            raise ConfigError("initial threshold must lie in (0, 1)")
        variant, thr_kind, model_kind, family = _SCENARIO_SHAPES[self.scenario_id]
        if self.outcome.variant != variant:
            raise ConfigError(
                f"scenario {self.scenario_id} requires the {variant} outcome, "
                f"got {self.outcome.variant}"
            )
        if not isinstance(self.threshold_strategy, (thr_kind, FixedThreshold)):
            raise ConfigError(
                f"scenario {self.scenario_id} requires threshold strategy "
                f"{thr_kind.__name__} (or a fixed threshold)"
            )
        if not isinstance(self.model_strategy, (model_kind, NoModelUpdate)):
            raise ConfigError(
                f"scenario {self.scenario_id} requires model strategy "
                f"{model_kind.__name__} (or no model updates)"
            )
        if self.outcome.kind == BINARY and self.estimator.family == GAUSSIAN:
            raise ConfigError("binary outcomes need a bernoulli GLM family")
        if self.outcome.kind != BINARY and self.estimator.family != GAUSSIAN:
            raise ConfigError("continuous outcomes need the gaussian family")
        if family != self.estimator.family:
            raise ConfigError(
                f"scenario {self.scenario_id} uses the {family} family"
            )


@dataclass
class AdaptationEvent:
    index: int
    kind: str  # threshold_update | threshold_skipped | model_update | model_skipped
    old: float
    new: float
    detail: str = ""


@dataclass(frozen=True)
class PatientRecord:
    """One patient's logged trial row."""

    index: int
    model_version: int
    threshold: float
    raw_risk: float
    shifted_risk: float
    treatment: int
    outcome: float
    baseline_risk: float


@dataclass
class TrialData:
    config: ScenarioConfig
    covariates: CohortTable
    model_version: np.ndarray
    threshold: np.ndarray
    raw_risk: np.ndarray
    shifted_risk: np.ndarray
    treatment: np.ndarray
    outcome: np.ndarray
    baseline_risk: np.ndarray
    history: ModelHistory
    matrix: CounterfactualRiskMatrix
    events: list[AdaptationEvent]
    clamp_count: int = 0

    @property
    def n(self) -> int:
        return len(self.covariates)

    @property
    def final_threshold(self) -> float:
        return float(self.threshold[-1])

    def record(self, i: int) -> PatientRecord:
        """Logged row for 1-based patient index i."""
        k = i - 1
        return PatientRecord(
            index=i,
            model_version=int(self.model_version[k]),
            threshold=float(self.threshold[k]),
            raw_risk=float(self.raw_risk[k]),
            shifted_risk=float(self.shifted_risk[k]),
            treatment=int(self.treatment[k]),
            outcome=float(self.outcome[k]),
            baseline_risk=float(self.baseline_risk[k]),
        )

    def threshold_trajectory(self) -> list[tuple[int, float]]:
        """(index, new threshold) pairs, starting from the initial value."""
        out = [(0, float(self.threshold[0]))]
        for ev in self.events:
            if ev.kind == "threshold_update":
                out.append((ev.index, ev.new))
        return out


def _resolve_cohort(config: ScenarioConfig, stream: SeedStream) -> CohortTable:
    if config.cohort_csv is not None:
        patients = load_cohort_csv(config.cohort_csv)
        if len(patients) < config.n_patients:
            raise ConfigError(
                f"cohort file has {len(patients)} rows, need {config.n_patients}"
            )
        return CohortTable.from_patients(patients[: config.n_patients])
    from .cohort import sample_cohort

    return sample_cohort(config.cohort_params, stream, config.n_patients)


def _original_model(config: ScenarioConfig) -> RiskModelVersion:
    coeffs: Optional[PceCoefficientSet] = None
    if config.coefficients_file is not None:
        coeffs = load_coefficients_file(config.coefficients_file)
    return original_pce_model(coeffs)


def _update_indices(config: ScenarioConfig) -> tuple[set[int], set[int]]:
    """Indices (1-based, after that patient completes) at which each strategy fires."""

    def cadence(warmup: int, every: int) -> set[int]:
        return {m for m in range(warmup, config.n_patients, every)}

    thr = config.threshold_strategy
    thr_idx: set[int] = set()
    if isinstance(thr, (RateTargetThreshold, NntTargetThreshold)):
        thr_idx = cadence(thr.warmup, thr.update_every)
    mdl = config.model_strategy
    mdl_idx: set[int] = set()
    if isinstance(mdl, (RecalibrateModel, ReviseModel)):
        mdl_idx = cadence(mdl.warmup, mdl.update_every)
    return thr_idx, mdl_idx


def run_scenario(config: ScenarioConfig, stream: Optional[SeedStream] = None) -> TrialData:
    """Simulate one complete trial; deterministic given (config, stream)."""
    if stream is None:
        stream = SeedStream(config.seed)
    covariates = _resolve_cohort(config, stream.child(0))
    n = config.n_patients
    noise = draw_noise(config.outcome, stream.child(1), n)

    original = _original_model(config)
    baseline_risk = predict_risk_batch(original, covariates)
    clamp_stats = ClampStats()

    current_model = original
    current_threshold = config.initial_threshold
    history = ModelHistory()
    events: list[AdaptationEvent] = []
    thr_idx, mdl_idx = _update_indices(config)
    boundaries = sorted(set(thr_idx) | set(mdl_idx) | {n})

    raw_risk = np.empty(n)
    shifted_risk = np.empty(n)
    treatment = np.empty(n, dtype=int)
    outcome = np.empty(n)
    model_version = np.empty(n, dtype=int)
    threshold = np.empty(n)

    start = 0
    next_version_id = 1
    for end in boundaries:
        if end <= start:
            continue
        block = covariates.slice(start, end)
        risks = predict_risk_batch(current_model, block)
        raw_risk[start:end] = risks
        shifted_risk[start:end] = risks - current_threshold
        treatment[start:end] = (shifted_risk[start:end] >= 0.0).astype(int)
        outcome[start:end] = outcomes_from_noise(
            config.outcome,
            baseline_risk[start:end],
            treatment[start:end],
            noise[start:end],
            clamp_stats,
        )
        model_version[start:end] = current_model.version_id
        threshold[start:end] = current_threshold
        for _ in range(start, end):
            history.append(current_model, current_threshold)
        m = end
        start = end
        if m >= n:
            break
        # Threshold first (reads only logged history), then the model.
        if m in thr_idx:
            current_threshold = _apply_threshold_update(
                config, m, covariates, history, raw_risk, treatment,
                outcome, current_threshold, events,
            )
        if m in mdl_idx:
            current_model, next_version_id = _apply_model_update(
                config, m, covariates, treatment, outcome, original,
                current_model, next_version_id, events,
            )

    matrix = build_counterfactual_matrix(history, covariates)
    return TrialData(
        config=config,
        covariates=covariates,
        model_version=model_version,
        threshold=threshold,
        raw_risk=raw_risk,
        shifted_risk=shifted_risk,
        treatment=treatment,
        outcome=outcome,
        baseline_risk=baseline_risk,
        history=history,
        matrix=matrix,
        events=events,
        clamp_count=clamp_stats.count,
    )


def _apply_threshold_update(
    config, m, covariates, history, raw_risk, treatment, outcome,
    current_threshold, events,
) -> float:
    strategy = config.threshold_strategy
    try:
        if isinstance(strategy, RateTargetThreshold):
            new = threshold_for_rate(raw_risk[:m], strategy.target_rate)
            detail = f"rate_target={strategy.target_rate!r}"
        else:
            new, detail = _nnt_threshold(
                config, m, covariates, history, treatment, outcome,
                current_threshold, strategy,
            )
        if not 0.0 < new < 1.0:
            raise ConfigError(f"proposed threshold {new!r} outside (0, 1)")
    except AdaptRdError as exc:
        events.append(
            AdaptationEvent(m, "threshold_skipped", current_threshold, current_threshold, str(exc))
        )
        return current_threshold
    events.append(AdaptationEvent(m, "threshold_update", current_threshold, new, detail))
    return new


def _nnt_threshold(
    config, m, covariates, history, treatment, outcome, current_threshold, strategy
) -> tuple[float, str]:
    prefix = covariates.slice(0, m)
    matrix = build_counterfactual_matrix(history, prefix)
    surface = fit_outcome_surface(matrix, treatment[:m], outcome[:m], config.estimator)
    grid = default_grid(matrix.focal_shifted, 101)
    curve = effect_curve(surface, matrix, grid, config.estimator)
    if not curve.estimates:
        raise ConfigError("effect curve has no supported grid points")
    sd = pooled_outcome_sd(outcome[:m], treatment[:m])
    # Effect curve lives on the shifted scale; thresholds are raw risks.
    beta_curve = [(e.r + current_threshold, e.beta_hat) for e in curve.estimates]
    d_curve = cohens_d_curve(beta_curve, sd)
    target_d = nnt_to_cohens_d(strategy.nnt)
    new = threshold_for_nnt(d_curve, target_d, current_threshold, strategy.smoothing)
    return new, f"nnt={strategy.nnt!r} target_d={target_d!r} pooled_sd={sd!r}"


def _apply_model_update(
    config, m, covariates, treatment, outcome, original, current_model,
    next_version_id, events,
):
    strategy = config.model_strategy
    prefix = covariates.slice(0, m)
    try:
        if isinstance(strategy, RecalibrateModel):
            new_model = recalibrate_model(
                prefix, treatment[:m], outcome[:m], original,
                n0=strategy.shrink_n0, next_version_id=next_version_id,
            )
        else:
            new_model = revise_model(
                prefix, treatment[:m], outcome[:m], original,
                n0=strategy.shrink_n0, next_version_id=next_version_id,
            )
    except AdaptRdError as exc:
        events.append(
            AdaptationEvent(
                m, "model_skipped", current_model.version_id, current_model.version_id, str(exc)
            )
        )
        return current_model, next_version_id
    detail = ",".join(f"{k}={v!r}" for k, v in sorted(new_model.fit_details.items()))
    events.append(
        AdaptationEvent(m, "model_update", current_model.version_id, new_model.version_id, detail)
    )
    return new_model, next_version_id + 1


# ---------------------------------------------------------------------------
# Evaluation at the final threshold


@dataclass
class MethodResult:
    estimate: Optional[float] = None
    se: Optional[float] = None
    ci_low: Optional[float] = None
    ci_high: Optional[float] = None
    error: Optional[str] = None


@dataclass
class EvaluationResult:
    truth: float
    methods: dict

    def to_dict(self) -> dict:
        out = {"truth": self.truth, "methods": {}}
        for name in METHODS:
            m = self.methods[name]
            out["methods"][name] = {
                "estimate": m.estimate,
                "se": m.se,
                "ci_low": m.ci_low,
                "ci_high": m.ci_high,
                "error": m.error,
            }
        return out


def evaluate_at_final_threshold(trial: TrialData) -> EvaluationResult:
    """All five estimators plus the DGP truth at r = 0 (the final threshold)."""
    config = trial.config
    est_cfg = config.estimator
    focal = trial.matrix.focal_shifted
    truth = true_smoothed_ate(
        config.outcome,
        trial.baseline_risk,
        0.0,
        est_cfg.bandwidth,
        weight_values=focal,
    )
    methods: dict[str, MethodResult] = {}

    try:
        surface = fit_outcome_surface(trial.matrix, trial.treatment, trial.outcome, est_cfg)
        est = estimate_effect(surface, trial.matrix, 0.0, est_cfg)
        methods["adaptive_rd"] = MethodResult(
            estimate=est.beta_hat, se=est.se, ci_low=est.ci[0], ci_high=est.ci[1]
        )
    except AdaptRdError as exc:
        methods["adaptive_rd"] = MethodResult(error=str(exc))

    try:
        methods["naive"] = MethodResult(estimate=naive_diff(trial.outcome, trial.treatment))
    except AdaptRdError as exc:
        methods["naive"] = MethodResult(error=str(exc))

    for name, fn in (
        ("outcome_regression", outcome_regression_ate),
        ("ipw", ipw_ate),
        ("aipw", aipw_ate),
    ):
        try:
            methods[name] = MethodResult(
                estimate=fn(
                    trial.covariates, trial.treatment, trial.outcome, focal, 0.0, est_cfg
                )
            )
        except AdaptRdError as exc:
            methods[name] = MethodResult(error=str(exc))

    return EvaluationResult(truth=truth, methods=methods)


# ---------------------------------------------------------------------------
# Replications


@dataclass
class ReplicationReport:
    scenario_id: int
    n_replications: int
    trial_failures: int
    per_method: dict
    final_thresholds: list
    treated_fractions: list

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "n_replications": self.n_replications,
            "trial_failures": self.trial_failures,
            "per_method": self.per_method,
            "final_thresholds": self.final_thresholds,
            "treated_fractions": self.treated_fractions,
        }


def _run_one_replication(config: ScenarioConfig, rep: int) -> dict:
    stream = SeedStream(config.seed, (rep,))
    try:
        trial = run_scenario(config, stream)
        result = evaluate_at_final_threshold(trial)
    except AdaptRdError as exc:
        return {"rep": rep, "failed": str(exc)}
    out = result.to_dict()
    out["rep"] = rep
    out["final_threshold"] = trial.final_threshold
    out["treated_fraction"] = float(np.mean(trial.treatment))
    return out


def _replication_worker(args) -> dict:
    config, rep = args
    return _run_one_replication(config, rep)


ERROR_QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


def run_replications(config: ScenarioConfig, count: int, workers: int = 1) -> ReplicationReport:
    """Run ``count`` independently seeded trials and aggregate per estimator.

    Replication ``rep`` always uses SeedStream(config.seed, (rep,)), so
    results are identical for any worker count and any execution order.
    """
    if count < 1:
        raise ConfigError("replication count must be >= 1")
    tasks = [(config, rep) for rep in range(count)]
    if workers > 1:
        with multiprocessing.Pool(workers) as pool:
            results = pool.map(_replication_worker, tasks)
    else:
        results = [_replication_worker(t) for t in tasks]

    trial_failures = sum(1 for r in results if "failed" in r)
    ok = [r for r in results if "failed" not in r]
    per_method = {}
    for name in METHODS:
        errors = []
        reps = []
        covered = []
        failures = 0
        for r in ok:
            m = r["methods"][name]
            if m["estimate"] is None:
                failures += 1
                continue
            err = m["estimate"] - r["truth"]
            errors.append(err)
            reps.append(r["rep"])
            if name == "adaptive_rd" and m["ci_low"] is not None:
                covered.append(m["ci_low"] <= r["truth"] <= m["ci_high"])
        arr = np.asarray(errors)
        entry = {
            "n_used": len(errors),
            "failures": failures,
            "errors": [float(e) for e in errors],
            "reps": reps,
            "bias": float(arr.mean()) if arr.size else None,
            "mse": float(np.mean(arr**2)) if arr.size else None,
            "mean_abs_error": float(np.mean(np.abs(arr))) if arr.size else None,
            "error_quantiles": (
                {repr(q): float(np.quantile(arr, q)) for q in ERROR_QUANTILES}
                if arr.size
                else None
            ),
        }
        if name == "adaptive_rd":
            entry["coverage"] = float(np.mean(covered)) if covered else None
        per_method[name] = entry

    return ReplicationReport(
        scenario_id=config.scenario_id,
        n_replications=count,
        trial_failures=trial_failures,
        per_method=per_method,
        final_thresholds=[r["final_threshold"] for r in ok],
        treated_fractions=[r["treated_fraction"] for r in ok],
    )


# ---------------------------------------------------------------------------
# Scenario presets


def scenario_preset(scenario_id: int, seed: int = 0, **overrides) -> ScenarioConfig:
    """Named preset configs matching the five benchmark scenarios."""
    if scenario_id not in _SCENARIO_SHAPES:
        raise ConfigError(f"scenario id must be 1..5, got {scenario_id}")
    warmup = overrides.pop("warmup", 400)
    update_every = overrides.pop("update_every", 100)
    base = dict(
        scenario_id=scenario_id,
        n_patients=3000,
        warmup=warmup,
        update_every=update_every,
        initial_threshold=0.10,
        seed=seed,
    )
    if scenario_id == 1:
        base.update(
            outcome=OutcomeModel("attendance"),
            threshold_strategy=RateTargetThreshold(0.30, warmup, update_every),
            model_strategy=NoModelUpdate(),
            estimator=EstimatorConfig(family=LOGIT),
        )
    elif scenario_id == 2:
        base.update(
            outcome=OutcomeModel("cholesterol"),
            threshold_strategy=RateTargetThreshold(0.30, warmup, update_every),
            model_strategy=NoModelUpdate(),
            estimator=EstimatorConfig(family=GAUSSIAN),
        )
    elif scenario_id == 3:
        base.update(
            outcome=OutcomeModel("cholesterol"),
            threshold_strategy=NntTargetThreshold(3.0, warmup, update_every, smoothing=0.5),
            model_strategy=NoModelUpdate(),
            estimator=EstimatorConfig(family=GAUSSIAN),
        )
    elif scenario_id == 4:
        base.update(
            outcome=OutcomeModel("ascvd"),
            threshold_strategy=FixedThreshold(0.10),
            model_strategy=RecalibrateModel(warmup, update_every),
            estimator=EstimatorConfig(family=LOGIT),
        )
    else:
        base.update(
            outcome=OutcomeModel("ascvd"),
            threshold_strategy=FixedThreshold(0.10),
            model_strategy=ReviseModel(warmup, update_every),
            estimator=EstimatorConfig(family=LOGIT),
        )
    base.update(overrides)
    return ScenarioConfig(**base)
