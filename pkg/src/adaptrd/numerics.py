"""Self-contained numerical kernel.

Implements the pieces of statistical machinery the estimator is built from:
iteratively reweighted least squares (IRLS) for three GLM families, natural
cubic spline bases, PCA on small dense matrices, Gaussian kernel weights and
the standard normal CDF. Everything here is pure and reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import erfc, ndtri

from .errors import (
    DegenerateSupportError,
    EffectiveSupportError,
    NonConvergenceError,
    NumericError,
    RankDeficiencyError,
    ValidationError,
)

GAUSSIAN = "gaussian_identity"
LOGIT = "bernoulli_logit"
CLOGLOG = "bernoulli_cloglog"
FAMILIES = (GAUSSIAN, LOGIT, CLOGLOG)

# IRLS controls; surfaced here rather than buried in the loop.
STEP_TOL = 1e-8
DEVIANCE_TOL = 1e-10
MAX_ITER = 100
RIDGE_JITTER = 1e-10

_MU_EPS = 1e-10
_ETA_CAP = 30.0


# ---------------------------------------------------------------------------
# GLM families


def inverse_link(eta: np.ndarray, family: str) -> np.ndarray:
    if family == GAUSSIAN:
        return eta
    eta = np.clip(eta, -_ETA_CAP, _ETA_CAP)
    if family == LOGIT:
        return 1.0 / (1.0 + np.exp(-eta))
    if family == CLOGLOG:
        return 1.0 - np.exp(-np.exp(eta))
    raise ValidationError(f"unknown family: {family}")


def inverse_link_deriv(eta: np.ndarray, family: str) -> np.ndarray:
    """d mu / d eta for each family."""
    if family == GAUSSIAN:
        return np.ones_like(eta)
    eta = np.clip(eta, -_ETA_CAP, _ETA_CAP)
    if family == LOGIT:
        mu = 1.0 / (1.0 + np.exp(-eta))
        return mu * (1.0 - mu)
    if family == CLOGLOG:
        return np.exp(eta - np.exp(eta))
    raise ValidationError(f"unknown family: {family}")


def link_function(mu: np.ndarray, family: str) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    if family == GAUSSIAN:
        return mu
    mu = np.clip(mu, _MU_EPS, 1.0 - _MU_EPS)
    if family == LOGIT:
        return np.log(mu / (1.0 - mu))
    if family == CLOGLOG:
        return np.log(-np.log(1.0 - mu))
    raise ValidationError(f"unknown family: {family}")


def _deviance(y: np.ndarray, mu: np.ndarray, w: np.ndarray, family: str) -> float:
    if family == GAUSSIAN:
        return float(np.sum(w * (y - mu) ** 2))
    mu = np.clip(mu, _MU_EPS, 1.0 - _MU_EPS)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(y > 0, y * np.log(y / mu), 0.0)
        t0 = np.where(y < 1, (1.0 - y) * np.log((1.0 - y) / (1.0 - mu)), 0.0)
    return float(2.0 * np.sum(w * (t1 + t0)))


@dataclass
class GlmSpec:
    """A GLM fitting problem: family, design, response, optional weights."""

    family: str
    design: np.ndarray
    response: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family: {self.family}")
        self.design = np.asarray(self.design, dtype=float)
        self.response = np.asarray(self.response, dtype=float)
        if self.design.ndim != 2:
            raise ValidationError("design must be a 2-D matrix")
        n, p = self.design.shape
        if n < p:
            raise ValidationError(f"need n >= p, got n={n}, p={p}")
        if self.response.shape != (n,):
            raise ValidationError("response length must match design rows")
        if not np.all(np.isfinite(self.design)):
            raise ValidationError("design matrix contains non-finite values")
        if not np.all(np.isfinite(self.response)):
            raise ValidationError("response contains non-finite values")
        if self.family != GAUSSIAN and not np.all(np.isin(self.response, (0.0, 1.0))):
            raise ValidationError("bernoulli response must be binary 0/1")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (n,):
                raise ValidationError("weights length must match design rows")
            if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
                raise ValidationError("weights must be non-negative and finite")


@dataclass
class GlmFit:
    """Coefficients, covariance and convergence state of a fitted GLM."""

    theta: np.ndarray
    cov: np.ndarray
    family: str
    dispersion: float
    converged: bool
    iterations: int
    deviance: float
    boundary_fit: bool = False  # fitted means pinned at the clamp (e.g. separation)


def _solve_information(info: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve info @ x = rhs, retrying once with ridge jitter on the diagonal."""
    try:
        chol = np.linalg.cholesky(info)
        return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs.T)).T
    except np.linalg.LinAlgError:
        pass
    jittered = info + RIDGE_JITTER * np.eye(info.shape[0])
    try:
        chol = np.linalg.cholesky(jittered)
        return np.linalg.solve(chol.T, np.linalg.solve(chol, rhs.T)).T
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError(
            "information matrix singular after ridge jitter"
        ) from exc


def fit_glm(spec: GlmSpec) -> GlmFit:
    """Maximum-likelihood GLM fit via IRLS.

    Converges when the max coefficient step drops below ``STEP_TOL`` or the
    relative deviance change drops below ``DEVIANCE_TOL``. Raises
    NonConvergenceError (carrying the last iterate) after ``MAX_ITER``
    iterations and RankDeficiencyError if the weighted information stays
    singular after a ridge jitter.
    """
    X = spec.design
    y = spec.response
    n, p = X.shape
    w = spec.weights if spec.weights is not None else np.ones(n)

    # Standard starting value: nudge binary responses toward 0.5.
    if spec.family == GAUSSIAN:
        eta = np.full(n, float(np.average(y, weights=w)) if np.any(w > 0) else 0.0)
    else:
        eta = link_function((y + 0.5) / 2.0, spec.family)

    theta = np.zeros(p)
    dev = np.inf
    info = np.eye(p)

    def irls_step(eta):
        mu = inverse_link(eta, spec.family)
        dmu = inverse_link_deriv(eta, spec.family)
        if spec.family == GAUSSIAN:
            irls_w = w
            z = y
        else:
            var = np.clip(mu * (1.0 - mu), _MU_EPS, None)
            dmu = np.clip(dmu, _MU_EPS, None)
            irls_w = w * dmu * dmu / var
            z = eta + (y - mu) / dmu
        Xw = X * irls_w[:, None]
        info = X.T @ Xw
        theta_new = _solve_information(info, Xw.T @ z)
        return theta_new, info

    for it in range(1, MAX_ITER + 1):
        theta_new, info = irls_step(eta)
        eta = X @ theta_new
        dev_new = _deviance(y, inverse_link(eta, spec.family), w, spec.family)
        step = float(np.max(np.abs(theta_new - theta))) if it > 1 else np.inf
        rel_dev = abs(dev_new - dev) / (abs(dev) + 1e-300) if np.isfinite(dev) else np.inf
        theta = theta_new
        dev = dev_new
        if step < STEP_TOL or rel_dev < DEVIANCE_TOL:
            # One polishing solve so the score vanishes at the returned theta
            # even when the deviance rule fired first.
            theta, info = irls_step(eta)
            eta = X @ theta
            dev = _deviance(y, inverse_link(eta, spec.family), w, spec.family)
            return _finalize_fit(spec, theta, info, dev, True, it, eta)

    last = _finalize_fit(spec, theta, info, dev, False, MAX_ITER, eta)
    raise NonConvergenceError(
        f"IRLS did not converge in {MAX_ITER} iterations (family={spec.family})",
        last_fit=last,
    )


def _finalize_fit(spec, theta, info, dev, converged, iterations, eta) -> GlmFit:
    n, p = spec.design.shape
    try:
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        cov = np.linalg.inv(info + RIDGE_JITTER * np.eye(p))
    dispersion = 1.0
    if spec.family == GAUSSIAN:
        dispersion = dev / max(n - p, 1)
        cov = cov * dispersion
    cov = 0.5 * (cov + cov.T)
    if spec.family == GAUSSIAN:
        boundary = False
    else:
        mu = inverse_link(eta, spec.family)
        boundary = bool(np.any(mu <= 1e-8) or np.any(mu >= 1.0 - 1e-8))
    return GlmFit(
        theta=theta,
        cov=cov,
        family=spec.family,
        dispersion=dispersion,
        converged=converged,
        iterations=iterations,
        deviance=dev,
        boundary_fit=boundary,
    )


def glm_linear_predictor(fit: GlmFit, row: np.ndarray) -> float:
    row = np.asarray(row, dtype=float)
    if not np.all(np.isfinite(row)):
        raise NumericError("design row contains non-finite values")
    return float(row @ fit.theta)


def glm_mean(fit: GlmFit, row: np.ndarray, family: Optional[str] = None) -> float:
    """Fitted mean for one design row under the family inverse link."""
    fam = family if family is not None else fit.family
    return float(inverse_link(np.asarray([glm_linear_predictor(fit, row)]), fam)[0])


# ---------------------------------------------------------------------------
# Natural cubic splines


@dataclass(frozen=True)
class SplineBasis:
    """Knot layout for a natural cubic spline with ``df`` basis columns."""

    interior_knots: tuple[float, ...]
    boundary_knots: tuple[float, float]
    df: int

    def __post_init__(self):
        lo, hi = self.boundary_knots
        if not lo < hi:
            raise ValidationError("boundary knots must be strictly increasing")
        knots = self.interior_knots
        if len(knots) != self.df - 1:
            raise ValidationError("need df-1 interior knots")
        if any(not lo < k < hi for k in knots):
            raise ValidationError("interior knots must lie inside the boundaries")
        if any(knots[i] >= knots[i + 1] for i in range(len(knots) - 1)):
            raise ValidationError("interior knots must be strictly increasing")

    @property
    def all_knots(self) -> np.ndarray:
        return np.asarray(
            (self.boundary_knots[0], *self.interior_knots, self.boundary_knots[1])
        )


def choose_knots(values: np.ndarray, df: int) -> SplineBasis:
    """Boundary knots at min/max, df-1 interior knots at even quantiles."""
    values = np.asarray(values, dtype=float)
    if df < 1:
        raise ValidationError("df must be >= 1")
    distinct = np.unique(values)
    if distinct.size < df + 2:
        raise DegenerateSupportError(
            f"need at least {df + 2} distinct values for df={df}, got {distinct.size}"
        )
    lo, hi = float(values.min()), float(values.max())
    qs = [m / df for m in range(1, df)]
    interior = [float(np.quantile(values, q)) for q in qs]
    if any(not lo < k < hi for k in interior) or any(
        interior[i] >= interior[i + 1] for i in range(len(interior) - 1)
    ):
        raise DegenerateSupportError("quantile knots collapsed onto the boundaries")
    return SplineBasis(tuple(interior), (lo, hi), df)


def natural_cubic_basis(x: np.ndarray, basis: SplineBasis) -> np.ndarray:
    """Evaluate the natural cubic spline basis, |x| rows by df columns.

    Uses the standard truncated-power construction with the natural
    constraint folded in, so every column is exactly linear beyond the
    boundary knots. The intercept is not included.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    knots = basis.all_knots
    K = knots.size
    out = np.empty((x.size, basis.df))
    out[:, 0] = x
    if K > 2:
        last = knots[-1]

        def d(k_idx):
            k = knots[k_idx]
            num = np.maximum(x - k, 0.0) ** 3 - np.maximum(x - last, 0.0) ** 3
            return num / (last - k)

        d_ref = d(K - 2)
        for j in range(K - 2):
            out[:, j + 1] = d(j) - d_ref
    return out


# ---------------------------------------------------------------------------
# Residualization and PCA


class ResidualizeResult(NamedTuple):
    residuals: np.ndarray
    intercept: float
    slope: float
    degenerate: bool


def residualize(column: np.ndarray, against: np.ndarray) -> ResidualizeResult:
    """Least-squares residuals of ``column`` on an intercept plus ``against``.

    If ``against`` is (numerically) constant, falls back to centering the
    column and flags the result as degenerate.
    """
    column = np.asarray(column, dtype=float)
    against = np.asarray(against, dtype=float)
    if column.shape != against.shape:
        raise ValidationError("column and against must have equal length")
    a_mean = float(against.mean())
    c_mean = float(column.mean())
    var = float(np.mean((against - a_mean) ** 2))
    if var <= 1e-24:
        return ResidualizeResult(column - c_mean, c_mean, 0.0, True)
    slope = float(np.mean((against - a_mean) * (column - c_mean)) / var)
    intercept = c_mean - slope * a_mean
    resid = column - (intercept + slope * against)
    return ResidualizeResult(resid, intercept, slope, False)


@dataclass
class PcaResult:
    """Principal components of a centered matrix, ordered by variance."""

    loadings: np.ndarray
    explained_ratios: np.ndarray
    retained: int
    means: np.ndarray

    def transform(self, matrix: np.ndarray) -> np.ndarray:
        """Scores of the retained components for rows of ``matrix``."""
        matrix = np.asarray(matrix, dtype=float)
        if self.retained == 0:
            return np.empty((matrix.shape[0], 0))
        return (matrix - self.means) @ self.loadings[:, : self.retained]


PCA_COMPONENT_CAP = 10


def pca(matrix: np.ndarray, variance_threshold: float) -> PcaResult:
    """Eigendecomposition PCA retaining the configured variance fraction.

    Retains the smallest number of components whose cumulative explained
    variance reaches ``variance_threshold``, capped at min(m, 10). A
    zero-variance matrix yields zero retained components.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ValidationError("matrix must be 2-D")
    n, m = matrix.shape
    if n < 2:
        raise ValidationError("need at least 2 rows for PCA")
    if not 0 < variance_threshold <= 1:
        raise ValidationError("variance threshold must be in (0, 1]")
    if m == 0:
        return PcaResult(np.empty((0, 0)), np.empty(0), 0, np.empty(0))
    means = matrix.mean(axis=0)
    centered = matrix - means
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    # Deterministic sign: largest-magnitude entry of each loading positive.
    for j in range(m):
        col = eigvecs[:, j]
        k = int(np.argmax(np.abs(col)))
        if col[k] < 0:
            eigvecs[:, j] = -col
    total = float(eigvals.sum())
    if total <= 1e-24:
        return PcaResult(eigvecs, np.zeros(m), 0, means)
    ratios = eigvals / total
    cumulative = np.cumsum(ratios)
    retained = int(np.searchsorted(cumulative, variance_threshold - 1e-12) + 1)
    retained = min(retained, m, PCA_COMPONENT_CAP)
    return PcaResult(eigvecs, ratios, retained, means)


# ---------------------------------------------------------------------------
# Kernel weights and the normal distribution

KERNEL_SUPPORT_MULTIPLE = 12.0


def gaussian_kernel_weights(values: np.ndarray, center: float, bandwidth: float) -> np.ndarray:
    """Normalized Gaussian weights exp(-(v - center)^2 / (2 h^2)).

    The max exponent is subtracted before exponentiation so small bandwidths
    cannot underflow the whole vector. Raises EffectiveSupportError when every
    value lies farther than 12 bandwidths from the center.
    """
    values = np.asarray(values, dtype=float)
    if bandwidth <= 0 or not np.isfinite(bandwidth):
        raise ValidationError("bandwidth must be positive and finite")
    if not np.isfinite(center):
        raise NumericError("kernel center must be finite")
    dist = np.abs(values - center)
    if values.size == 0 or float(dist.min()) > KERNEL_SUPPORT_MULTIPLE * bandwidth:
        raise EffectiveSupportError(
            f"no values within {KERNEL_SUPPORT_MULTIPLE} bandwidths of r={center}"
        )
    expo = -0.5 * (dist / bandwidth) ** 2
    w = np.exp(expo - expo.max())
    return w / w.sum()


def normal_cdf(x):
    """Standard normal CDF via erfc, accurate to well below 1e-12."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise NumericError("normal_cdf requires finite input")
    out = 0.5 * erfc(-x / np.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def normal_quantile(p):
    """Inverse standard normal CDF."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0) or np.any(p >= 1):
        raise NumericError("quantile probability must be in (0, 1)")
    out = ndtri(p)
    return float(out) if out.ndim == 0 else out
