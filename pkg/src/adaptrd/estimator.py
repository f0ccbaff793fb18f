"""Local treatment-effect estimation on counterfactual risk matrices.

The main estimator fits a GLM of observed outcomes on the full counterfactual
risk profile: per-arm natural cubic splines in the focal (current
model/threshold) shifted risk, plus a shared linear block of principal
components of the remaining columns residualized on the focal one. Predicted
potential outcomes under each arm are then marginalized with a Gaussian
kernel over the focal risks, yielding the local effect at any risk value with
a delta-method standard error and Wald interval.

When no adaptation ever happened the matrix has a single distinct column, the
PC block is empty, and the whole pipeline collapses to a standard one
dimensional per-arm-spline kernel RD estimate.

Four comparator estimators (difference in means, kernel-weighted outcome
regression, IPW, and AIPW on a fixed covariate list) are included for
benchmarking.
"""

from __future__ import annotations

from dataclasses import dataclass, field


import numpy as np

from .cohort import CohortTable
from .errors import (
    ConfigError,
    DegenerateSupportError,
    EffectiveSupportError,
    InsufficientDataError,
    ValidationError,
)
from .numerics import (
    FAMILIES,
    GAUSSIAN,
    LOGIT,
    GlmFit,
    GlmSpec,
    PcaResult,
    SplineBasis,
    choose_knots,
    fit_glm,
    gaussian_kernel_weights,
    inverse_link,
    inverse_link_deriv,
    natural_cubic_basis,
    normal_quantile,
    pca,
    residualize,
)
from .risk_engine import CounterfactualRiskMatrix

MIN_PER_ARM = 10


@dataclass(frozen=True)
class EstimatorConfig:
    spline_df: int = 2
    pca_variance: float = 0.90
    bandwidth: float = 0.02
    family: str = GAUSSIAN
    confidence: float = 0.95
    min_effective: float = 5.0

    def __post_init__(self):
        if self.spline_df < 1:
            raise ConfigError("spline_df must be >= 1")
        if not 0.0 < self.pca_variance <= 1.0:
            raise ConfigError("pca_variance must lie in (0, 1]")
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth must be positive")
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family: {self.family}")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("confidence level must lie in (0, 1)")


@dataclass
class EffectEstimate:
    """Local effect at one shifted-risk value, with arm means and a Wald CI."""

    r: float
    beta_hat: float
    se: float
    ci: tuple[float, float]
    mu1_hat: float
    mu0_hat: float
    eff_n_treated: float
    eff_n_untreated: float
    low_support: bool = False


@dataclass
class FittedOutcomeSurface:
    """Fitted GLM plus every piece of metadata needed to replay its design."""

    fit: GlmFit
    family: str
    config: EstimatorConfig
    basis_untreated: SplineBasis
    basis_treated: SplineBasis
    resid_intercepts: np.ndarray  # per non-focal distinct column
    resid_slopes: np.ndarray
    nonfocal_columns: tuple[int, ...]
    pca_result: PcaResult
    focal_column: int
    treatments: np.ndarray
    _design_cache: dict = field(default_factory=dict, repr=False)

    def pc_scores(self, matrix: CounterfactualRiskMatrix) -> np.ndarray:
        """Retained-component scores of the residualized non-focal columns."""
        focal = matrix.shifted[:, self.focal_column]
        if not self.nonfocal_columns:
            return np.empty((matrix.n_patients, 0))
        resid = np.column_stack(
            [
                matrix.shifted[:, d] - (self.resid_intercepts[i] + self.resid_slopes[i] * focal)
                for i, d in enumerate(self.nonfocal_columns)
            ]
        )
        return self.pca_result.transform(resid)

    def design_for_arm(self, matrix: CounterfactualRiskMatrix, arm: int) -> np.ndarray:
        """Design matrix with every patient's treatment column forced to ``arm``."""
        key = (id(matrix), arm)
        if key not in self._design_cache:
            focal = matrix.shifted[:, self.focal_column]
            scores = self._scores_cached(matrix)
            arm_flags = np.full(matrix.n_patients, float(arm))
            self._design_cache[key] = _build_design(
                focal, arm_flags, self.basis_untreated, self.basis_treated, scores
            )
        return self._design_cache[key]

    def _scores_cached(self, matrix: CounterfactualRiskMatrix) -> np.ndarray:
        key = (id(matrix), "scores")
        if key not in self._design_cache:
            self._design_cache[key] = self.pc_scores(matrix)
        return self._design_cache[key]

    def arm_means(self, matrix: CounterfactualRiskMatrix) -> tuple[np.ndarray, np.ndarray]:
        """(mu0, mu1) predicted potential-outcome means for every patient."""
        key = (id(matrix), "means")
        if key not in self._design_cache:
            eta0 = self.design_for_arm(matrix, 0) @ self.fit.theta
            eta1 = self.design_for_arm(matrix, 1) @ self.fit.theta
            self._design_cache[key] = (
                inverse_link(eta0, self.family),
                inverse_link(eta1, self.family),
            )
        return self._design_cache[key]


def _build_design(focal, arm_flags, basis0, basis1, scores) -> np.ndarray:
    b0 = natural_cubic_basis(focal, basis0)
    b1 = natural_cubic_basis(focal, basis1)
    cols = [
        np.ones(focal.size),
        b0 * (1.0 - arm_flags)[:, None],
        arm_flags,
        b1 * arm_flags[:, None],
    ]
    if scores.shape[1] > 0:
        cols.append(scores)
    return np.column_stack(cols)


def fit_outcome_surface(
    matrix: CounterfactualRiskMatrix,
    treatments: np.ndarray,
    outcomes: np.ndarray,
    config: EstimatorConfig,
) -> FittedOutcomeSurface:
    """Fit the two-arm spline GLM on the counterfactual risk profile.

    Pipeline: residualize each non-focal distinct column on the focal column,
    compress the residuals with PCA at the configured variance threshold,
    build the per-arm spline design (knots chosen separately from each arm's
    focal risks), and fit the configured GLM family.
    """
    treatments = np.asarray(treatments)
    outcomes = np.asarray(outcomes, dtype=float)
    n = matrix.n_patients
    if treatments.shape != (n,) or outcomes.shape != (n,):
        raise ValidationError("treatments/outcomes must align with the matrix rows")
    n1 = int(np.sum(treatments == 1))
    n0 = n - n1
    if min(n0, n1) < MIN_PER_ARM:
        raise InsufficientDataError(
            f"need at least {MIN_PER_ARM} patients per arm, got {n0} untreated / {n1} treated"
        )
    focal_col = matrix.focal_index
    focal = matrix.shifted[:, focal_col]
    if float(focal.max() - focal.min()) <= 1e-12:
        raise DegenerateSupportError("focal risk column is constant")

    nonfocal = tuple(d for d in range(matrix.n_distinct) if d != focal_col)
    intercepts = np.zeros(len(nonfocal))
    slopes = np.zeros(len(nonfocal))
    if nonfocal:
        resid_cols = []
        for i, d in enumerate(nonfocal):
            res = residualize(matrix.shifted[:, d], focal)
            resid_cols.append(res.residuals)
            intercepts[i] = res.intercept
            slopes[i] = res.slope
        resid_matrix = np.column_stack(resid_cols)
    else:
        resid_matrix = np.empty((n, 0))
    pca_result = pca(resid_matrix, config.pca_variance)

    basis0 = choose_knots(focal[treatments == 0], config.spline_df)
    basis1 = choose_knots(focal[treatments == 1], config.spline_df)
    scores = pca_result.transform(resid_matrix)
    design = _build_design(focal, treatments.astype(float), basis0, basis1, scores)
    fit = fit_glm(GlmSpec(family=config.family, design=design, response=outcomes))
    return FittedOutcomeSurface(
        fit=fit,
        family=config.family,
        config=config,
        basis_untreated=basis0,
        basis_treated=basis1,
        resid_intercepts=intercepts,
        resid_slopes=slopes,
        nonfocal_columns=nonfocal,
        pca_result=pca_result,
        focal_column=focal_col,
        treatments=treatments.astype(int),
    )


def predict_arm_means(
    surface: FittedOutcomeSurface, matrix: CounterfactualRiskMatrix, k: int
) -> tuple[float, float]:
    """(mu0, mu1) for patient k (1-based row of the matrix)."""
    if matrix.n_distinct <= max((*surface.nonfocal_columns, surface.focal_column)):
        raise ValidationError("matrix does not match the surface's version structure")
    mu0, mu1 = surface.arm_means(matrix)
    return float(mu0[k - 1]), float(mu1[k - 1])


def _effect_gradient(
    surface: FittedOutcomeSurface, matrix: CounterfactualRiskMatrix, weights: np.ndarray
) -> np.ndarray:
    """Gradient in theta of the kernel-weighted effect functional."""
    X0 = surface.design_for_arm(matrix, 0)
    X1 = surface.design_for_arm(matrix, 1)
    d1 = inverse_link_deriv(X1 @ surface.fit.theta, surface.family)
    d0 = inverse_link_deriv(X0 @ surface.fit.theta, surface.family)
    return X1.T @ (weights * d1) - X0.T @ (weights * d0)


def delta_method_se(
    surface: FittedOutcomeSurface,
    matrix: CounterfactualRiskMatrix,
    r: float,
    config: EstimatorConfig,
) -> float:
    """Standard error of the local effect via first-order propagation.

    The kernel weights are fixed functions of the logged risks, so the
    gradient chains only through the inverse link at each patient's two
    counterfactual design rows.
    """
    weights = gaussian_kernel_weights(
        matrix.shifted[:, surface.focal_column], r, config.bandwidth
    )
    grad = _effect_gradient(surface, matrix, weights)
    quad = float(grad @ surface.fit.cov @ grad)
    if quad < -1e-10:
        raise ValidationError(f"covariance quadratic form is negative: {quad}")
    return float(np.sqrt(max(quad, 0.0)))


def estimate_effect(
    surface: FittedOutcomeSurface,
    matrix: CounterfactualRiskMatrix,
    r: float,
    config: EstimatorConfig,
) -> EffectEstimate:
    """Kernel-weighted local effect and arm means at shifted risk ``r``."""
    focal = matrix.shifted[:, surface.focal_column]
    weights = gaussian_kernel_weights(focal, r, config.bandwidth)
    mu0, mu1 = surface.arm_means(matrix)
    beta = float(weights @ (mu1 - mu0))
    mu1_bar = float(weights @ mu1)
    mu0_bar = float(weights @ mu0)
    grad = _effect_gradient(surface, matrix, weights)
    quad = float(grad @ surface.fit.cov @ grad)
    if quad < -1e-10:
        raise ValidationError(f"covariance quadratic form is negative: {quad}")
    se = float(np.sqrt(max(quad, 0.0)))
    z = normal_quantile(0.5 + config.confidence / 2.0)
    n = matrix.n_patients
    treated = surface.treatments == 1
    eff_n1 = float(weights[treated].sum() * n)
    eff_n0 = float(weights[~treated].sum() * n)
    return EffectEstimate(
        r=float(r),
        beta_hat=beta,
        se=se,
        ci=(beta - z * se, beta + z * se),
        mu1_hat=mu1_bar,
        mu0_hat=mu0_bar,
        eff_n_treated=eff_n1,
        eff_n_untreated=eff_n0,
        low_support=min(eff_n0, eff_n1) < config.min_effective,
    )


@dataclass
class EffectCurve:
    estimates: list[EffectEstimate]
    skipped: list[tuple[float, str]]


def effect_curve(
    surface: FittedOutcomeSurface,
    matrix: CounterfactualRiskMatrix,
    grid: np.ndarray,
    config: EstimatorConfig,
) -> EffectCurve:
    """Evaluate the effect across a grid; unsupported points are reported."""
    estimates = []
    skipped = []
    for r in np.asarray(grid, dtype=float):
        try:
            estimates.append(estimate_effect(surface, matrix, float(r), config))
        except EffectiveSupportError as exc:
            skipped.append((float(r), str(exc)))
    return EffectCurve(estimates=estimates, skipped=skipped)


def default_grid(focal_risks: np.ndarray, points: int = 101) -> np.ndarray:
    """Evenly spaced grid over the central 98% of the focal risks."""
    lo = float(np.quantile(focal_risks, 0.01))
    hi = float(np.quantile(focal_risks, 0.99))
    if hi <= lo:
        raise DegenerateSupportError("risk support is degenerate")
    return np.linspace(lo, hi, points)


# ---------------------------------------------------------------------------
# Comparator estimators


def naive_diff(outcomes: np.ndarray, treatments: np.ndarray) -> float:
    """Difference in arm means, ignoring risks and covariates entirely."""
    outcomes = np.asarray(outcomes, dtype=float)
    treatments = np.asarray(treatments)
    y1 = outcomes[treatments == 1]
    y0 = outcomes[treatments == 0]
    if y1.size == 0 or y0.size == 0:
        raise InsufficientDataError("both arms must be non-empty")
    return float(y1.mean() - y0.mean())


# Fixed predictor list shared by the regression-based comparators.
COMPARATOR_PREDICTORS = (
    "age",
    "total_chol",
    "hdl_chol",
    "systolic_bp",
    "bp_treated",
    "smoker",
    "diabetes",
)


def _comparator_design(covariates: CohortTable) -> np.ndarray:
    cols = [np.ones(len(covariates))]
    for name in COMPARATOR_PREDICTORS:
        cols.append(getattr(covariates, name).astype(float))
    return np.column_stack(cols)


def _comparator_checks(covariates, treatments, outcomes, focal_risks):
    treatments = np.asarray(treatments)
    outcomes = np.asarray(outcomes, dtype=float)
    focal_risks = np.asarray(focal_risks, dtype=float)
    n = len(covariates)
    if treatments.shape != (n,) or outcomes.shape != (n,) or focal_risks.shape != (n,):
        raise ValidationError("comparator inputs must have aligned lengths")
    if np.sum(treatments == 1) < MIN_PER_ARM or np.sum(treatments == 0) < MIN_PER_ARM:
        raise InsufficientDataError(f"need at least {MIN_PER_ARM} patients per arm")
    return treatments, outcomes, focal_risks


def outcome_regression_ate(
    covariates: CohortTable,
    treatments: np.ndarray,
    outcomes: np.ndarray,
    focal_risks: np.ndarray,
    r: float,
    config: EstimatorConfig,
) -> float:
    """Kernel-smoothed counterfactual-prediction contrast from one GLM."""
    treatments, outcomes, focal_risks = _comparator_checks(
        covariates, treatments, outcomes, focal_risks
    )
    base = _comparator_design(covariates)
    design = np.column_stack([base, treatments.astype(float)])
    fit = fit_glm(GlmSpec(family=config.family, design=design, response=outcomes))
    eta1 = np.column_stack([base, np.ones(len(covariates))]) @ fit.theta
    eta0 = np.column_stack([base, np.zeros(len(covariates))]) @ fit.theta
    effects = inverse_link(eta1, config.family) - inverse_link(eta0, config.family)
    weights = gaussian_kernel_weights(focal_risks, r, config.bandwidth)
    return float(weights @ effects)


PROPENSITY_CLIP = (0.01, 0.99)


def _fitted_propensity(covariates: CohortTable, treatments: np.ndarray) -> np.ndarray:
    design = _comparator_design(covariates)
    fit = fit_glm(GlmSpec(family=LOGIT, design=design, response=treatments.astype(float)))
    e = inverse_link(design @ fit.theta, LOGIT)
    return np.clip(e, *PROPENSITY_CLIP)


def ipw_ate(
    covariates: CohortTable,
    treatments: np.ndarray,
    outcomes: np.ndarray,
    focal_risks: np.ndarray,
    r: float,
    config: EstimatorConfig,
) -> float:
    """Kernel-weighted average of propensity-scaled pseudo-outcomes."""
    treatments, outcomes, focal_risks = _comparator_checks(
        covariates, treatments, outcomes, focal_risks
    )
    e = _fitted_propensity(covariates, treatments)
    a = treatments.astype(float)
    pseudo = (a / e - (1.0 - a) / (1.0 - e)) * outcomes
    weights = gaussian_kernel_weights(focal_risks, r, config.bandwidth)
    return float(weights @ pseudo)


def aipw_ate(
    covariates: CohortTable,
    treatments: np.ndarray,
    outcomes: np.ndarray,
    focal_risks: np.ndarray,
    r: float,
    config: EstimatorConfig,
) -> float:
    """Doubly robust combination of the outcome and propensity models."""
    treatments, outcomes, focal_risks = _comparator_checks(
        covariates, treatments, outcomes, focal_risks
    )
    base = _comparator_design(covariates)
    design = np.column_stack([base, treatments.astype(float)])
    fit = fit_glm(GlmSpec(family=config.family, design=design, response=outcomes))
    m1 = inverse_link(np.column_stack([base, np.ones(len(covariates))]) @ fit.theta, config.family)
    m0 = inverse_link(np.column_stack([base, np.zeros(len(covariates))]) @ fit.theta, config.family)
    e = _fitted_propensity(covariates, treatments)
    a = treatments.astype(float)
    influence = m1 - m0 + a * (outcomes - m1) / e - (1.0 - a) * (outcomes - m0) / (1.0 - e)
    weights = gaussian_kernel_weights(focal_risks, r, config.bandwidth)
    return float(weights @ influence)
