"""Versioned cardiovascular risk models and counterfactual risk matrices.

Implements the sex/race-stratified 10-year ASCVD risk calculator (coefficient
table embedded as package data, checksum-verified, overridable by file),
unstratified complementary log-log GLM risk models produced by revision,
threshold-based treatment assignment, and the matrix of shifted risks every
patient would have received under each earlier model/threshold pair.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .cohort import CohortTable, PatientCovariates
from .errors import ConfigError, NumericError, ValidationError

SUBGROUPS = ("white_female", "black_female", "white_male", "black_male")

PCE_TERMS = (
    "ln_age",
    "ln_age_sq",
    "ln_total_chol",
    "ln_age_x_ln_total_chol",
    "ln_hdl",
    "ln_age_x_ln_hdl",
    "ln_sbp_treated",
    "ln_age_x_ln_sbp_treated",
    "ln_sbp_untreated",
    "ln_age_x_ln_sbp_untreated",
    "smoker",
    "ln_age_x_smoker",
    "diabetes",
)

# Design terms of the unstratified (revised) model: intercept + PCE transforms.
UNSTRATIFIED_TERMS = ("intercept",) + PCE_TERMS

RISK_FLOOR = 1e-12
RISK_CEIL = 1.0 - 1e-12

_COEFFICIENT_SHA256 = "c61aa498a5abb8dd995d21928558b184c94ceffbecca1ed29504438d09a148c4"


@dataclass(frozen=True)
class SubgroupCoefficients:
    terms: dict
    s0: float
    lp_bar: float


@dataclass(frozen=True)
class PceCoefficientSet:
    """Per-subgroup term coefficients plus baseline survival and mean LP."""

    subgroups: dict

    def __post_init__(self):
        if set(self.subgroups) != set(SUBGROUPS):
            raise ConfigError(f"coefficient set must define exactly {SUBGROUPS}")
        for name, sg in self.subgroups.items():
            if not 0.0 < sg.s0 < 1.0:
                raise ConfigError(f"{name}: s0 must lie in (0, 1)")
            if not math.isfinite(sg.lp_bar):
                raise ConfigError(f"{name}: lp_bar must be finite")
            unknown = set(sg.terms) - set(PCE_TERMS)
            if unknown:
                raise ConfigError(f"{name}: unknown terms {sorted(unknown)}")
            if any(not math.isfinite(v) for v in sg.terms.values()):
                raise ConfigError(f"{name}: coefficients must be finite")


def _parse_coefficient_json(payload: dict) -> PceCoefficientSet:
    subgroups = {}
    for name, sg in payload.items():
        subgroups[name] = SubgroupCoefficients(
            terms={k: float(v) for k, v in sg["terms"].items()},
            s0=float(sg["s0"]),
            lp_bar=float(sg["lp_bar"]),
        )
    return PceCoefficientSet(subgroups)


def load_default_coefficients() -> PceCoefficientSet:
    """Load the embedded coefficient table, verifying its checksum."""
    blob = resources.files("adaptrd").joinpath("data/pce_coefficients.json").read_bytes()
    digest = hashlib.sha256(blob).hexdigest()
    if digest != _COEFFICIENT_SHA256:
        raise ConfigError(
            "embedded coefficient table failed checksum validation; "
            f"expected {_COEFFICIENT_SHA256}, got {digest}"
        )
    return _parse_coefficient_json(json.loads(blob))


def load_coefficients_file(path) -> PceCoefficientSet:
    """Load a user-supplied coefficient override file (same JSON schema)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"coefficient file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"coefficient file is not valid JSON: {exc}") from exc
    return _parse_coefficient_json(payload)


def subgroup_for(pc: PatientCovariates) -> str:
    """Resolve the coefficient subgroup; race 'other' uses the white tables."""
    race = "black" if pc.race == "black" else "white"
    return f"{race}_{pc.sex}"


def _pce_term_values(table: CohortTable) -> dict:
    ln_age = np.log(table.age)
    ln_tc = np.log(table.total_chol)
    ln_hdl = np.log(table.hdl_chol)
    ln_sbp = np.log(table.systolic_bp)
    treated = table.bp_treated.astype(float)
    smoker = table.smoker.astype(float)
    return {
        "ln_age": ln_age,
        "ln_age_sq": ln_age**2,
        "ln_total_chol": ln_tc,
        "ln_age_x_ln_total_chol": ln_age * ln_tc,
        "ln_hdl": ln_hdl,
        "ln_age_x_ln_hdl": ln_age * ln_hdl,
        "ln_sbp_treated": ln_sbp * treated,
        "ln_age_x_ln_sbp_treated": ln_age * ln_sbp * treated,
        "ln_sbp_untreated": ln_sbp * (1.0 - treated),
        "ln_age_x_ln_sbp_untreated": ln_age * ln_sbp * (1.0 - treated),
        "smoker": smoker,
        "ln_age_x_smoker": ln_age * smoker,
        "diabetes": table.diabetes.astype(float),
    }


def unstratified_design(table: CohortTable) -> np.ndarray:
    """Design matrix over UNSTRATIFIED_TERMS (intercept + 13 transforms)."""
    terms = _pce_term_values(table)
    cols = [np.ones(len(table))] + [terms[t] for t in PCE_TERMS]
    return np.column_stack(cols)


def pce_linear_predictor(pc: PatientCovariates, coeffs: PceCoefficientSet) -> float:
    """Weighted sum of transformed covariates for the patient's subgroup."""
    table = CohortTable.from_patients([pc])
    terms = _pce_term_values(table)
    sg = coeffs.subgroups[subgroup_for(pc)]
    return float(sum(c * terms[t][0] for t, c in sg.terms.items()))


def pce_risk(lp: float, s0: float, lp_bar: float) -> float:
    """10-year risk = 1 - s0^exp(lp - lp_bar), clamped away from {0, 1}."""
    if not 0.0 < s0 < 1.0:
        raise ValidationError("s0 must lie in (0, 1)")
    if not math.isfinite(lp) or not math.isfinite(lp_bar):
        raise NumericError("linear predictor must be finite")
    risk = 1.0 - s0 ** math.exp(lp - lp_bar)
    return min(max(risk, RISK_FLOOR), RISK_CEIL)


def _pce_risk_batch(table: CohortTable, coeffs: PceCoefficientSet) -> np.ndarray:
    terms = _pce_term_values(table)
    n = len(table)
    black = table.race == "black"
    out = np.empty(n)
    for name in SUBGROUPS:
        race, sex = name.split("_")
        mask = (black if race == "black" else ~black) & (
            table.female if sex == "female" else ~table.female
        )
        if not mask.any():
            continue
        sg = coeffs.subgroups[name]
        lp = np.zeros(mask.sum())
        for t, c in sg.terms.items():
            lp += c * terms[t][mask]
        out[mask] = 1.0 - sg.s0 ** np.exp(lp - sg.lp_bar)
    return np.clip(out, RISK_FLOOR, RISK_CEIL)


PCE_STRATIFIED = "pce_stratified"
GLM_UNSTRATIFIED = "glm_unstratified"


@dataclass(frozen=True)
class RiskModelVersion:
    """One immutable version of the risk function.

    ``pce_stratified`` wraps a subgroup coefficient table (the original model
    and every recalibration of it, which is an exact coefficient transform).
    ``glm_unstratified`` wraps a single complementary log-log coefficient
    vector over UNSTRATIFIED_TERMS; it carries no race or sex terms, and its
    treatment coefficient is metadata only (prediction is at treatment = 0).
    """

    version_id: int
    kind: str
    provenance: str  # original | recalibrated | revised
    coefficients: Optional[PceCoefficientSet] = None
    glm_theta: Optional[np.ndarray] = None
    fit_details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.version_id < 0:
            raise ValidationError("version_id must be non-negative")
        if self.kind == PCE_STRATIFIED:
            if self.coefficients is None:
                raise ValidationError("pce_stratified model needs a coefficient set")
        elif self.kind == GLM_UNSTRATIFIED:
            theta = self.glm_theta
            if theta is None or np.asarray(theta).shape != (len(UNSTRATIFIED_TERMS),):
                raise ValidationError(
                    f"glm_unstratified model needs {len(UNSTRATIFIED_TERMS)} coefficients"
                )
        else:
            raise ValidationError(f"unknown model kind: {self.kind}")


def original_pce_model(coeffs: Optional[PceCoefficientSet] = None) -> RiskModelVersion:
    if coeffs is None:
        coeffs = load_default_coefficients()
    return RiskModelVersion(version_id=0, kind=PCE_STRATIFIED, provenance="original", coefficients=coeffs)


def predict_risk(model: RiskModelVersion, pc: PatientCovariates) -> float:
    """Predicted risk in [0, 1] for one patient under one model version."""
    return float(predict_risk_batch(model, CohortTable.from_patients([pc]))[0])


def predict_risk_batch(model: RiskModelVersion, table: CohortTable) -> np.ndarray:
    if model.kind == PCE_STRATIFIED:
        return _pce_risk_batch(table, model.coefficients)
    design = unstratified_design(table)
    lp = design @ np.asarray(model.glm_theta, dtype=float)
    risk = 1.0 - np.exp(-np.exp(np.clip(lp, -30.0, 30.0)))
    return np.clip(risk, RISK_FLOOR, RISK_CEIL)


def cloglog_of_risk(risk: np.ndarray) -> np.ndarray:
    """log(-log(1 - risk)) on clamped risks; the PCE's natural linear scale."""
    r = np.clip(np.asarray(risk, dtype=float), RISK_FLOOR, RISK_CEIL)
    return np.log(-np.log1p(-r))


def recalibrated_coefficients(
    base: PceCoefficientSet, intercept: float, slope: float
) -> PceCoefficientSet:
    """Compose a cloglog-scale calibration map with a coefficient table.

    cloglog(risk) of the stratified model is LP - lp_bar + log(-log s0), so
    intercept/slope calibration is an exact transform of each subgroup:
    coefficients scale by the slope and (s0, lp_bar) absorb the rest.
    """
    if not math.isfinite(intercept) or not math.isfinite(slope):
        raise NumericError("calibration coefficients must be finite")
    subgroups = {}
    for name, sg in base.subgroups.items():
        new_terms = {t: slope * c for t, c in sg.terms.items()}
        base_cll = math.log(-math.log(sg.s0))
        new_cll = intercept + slope * base_cll
        new_s0 = math.exp(-math.exp(new_cll))
        new_s0 = min(max(new_s0, RISK_FLOOR), RISK_CEIL)
        subgroups[name] = SubgroupCoefficients(
            terms=new_terms, s0=new_s0, lp_bar=slope * sg.lp_bar
        )
    return PceCoefficientSet(subgroups)


def assign_treatment(shifted_risk: float) -> int:
    """1 iff the threshold-shifted risk is at or above zero (ties treat)."""
    if not math.isfinite(shifted_risk):
        raise NumericError("shifted risk must be finite")
    return 1 if shifted_risk >= 0.0 else 0


# ---------------------------------------------------------------------------
# Model history and the counterfactual risk matrix


class ModelHistory:
    """The (model, threshold) pair in force for each patient index 1..i."""

    def __init__(self):
        self.models: list[RiskModelVersion] = []
        self._version_index: list[int] = []
        self._thresholds: list[float] = []

    def __len__(self) -> int:
        return len(self._version_index)

    def append(self, model: RiskModelVersion, threshold: float) -> None:
        if not 0.0 < threshold < 1.0:
            raise ValidationError("threshold must lie in (0, 1)")
        if not self.models or self.models[-1].version_id != model.version_id:
            if any(m.version_id == model.version_id for m in self.models):
                raise ValidationError("model versions must not be reused after replacement")
            self.models.append(model)
        self._version_index.append(len(self.models) - 1)
        self._thresholds.append(float(threshold))

    def model_for(self, j: int) -> RiskModelVersion:
        """Model in force for patient j (1-based)."""
        return self.models[self._version_index[j - 1]]

    def threshold_for(self, j: int) -> float:
        return self._thresholds[j - 1]

    @property
    def thresholds(self) -> np.ndarray:
        return np.asarray(self._thresholds)

    def distinct_pairs(self) -> list[tuple[int, float]]:
        """(model list index, threshold) pairs in order of first use."""
        seen = []
        for idx, thr in zip(self._version_index, self._thresholds):
            if (idx, thr) not in seen:
                seen.append((idx, thr))
        return seen


@dataclass
class CounterfactualRiskMatrix:
    """Shifted risks r[k][j] = risk of patient k under model/threshold j.

    Columns sharing a (model version, threshold) pair are stored once;
    ``column_map[j-1]`` locates patient j's column among the distinct ones.
    """

    shifted: np.ndarray  # n x D distinct columns, risk - threshold
    raw: np.ndarray  # n x D raw risks
    column_map: np.ndarray  # n ints into the distinct columns
    version_ids: np.ndarray  # D ints
    thresholds: np.ndarray  # D floats

    @property
    def n_patients(self) -> int:
        return self.shifted.shape[0]

    @property
    def n_distinct(self) -> int:
        return self.shifted.shape[1]

    @property
    def focal_index(self) -> int:
        """Distinct-column index of the last patient's (current) pair."""
        return int(self.column_map[-1])

    @property
    def focal_shifted(self) -> np.ndarray:
        return self.shifted[:, self.focal_index]

    def shifted_entry(self, k: int, j: int) -> float:
        """r[k][j] for 1-based patient indices k (row) and j (column)."""
        return float(self.shifted[k - 1, self.column_map[j - 1]])

    def diagonal_shifted(self) -> np.ndarray:
        idx = np.arange(self.n_patients)
        return self.shifted[idx, self.column_map[idx]]

    def diagonal_raw(self) -> np.ndarray:
        idx = np.arange(self.n_patients)
        return self.raw[idx, self.column_map[idx]]


def build_counterfactual_matrix(
    history: ModelHistory,
    patients: Union[CohortTable, Sequence[PatientCovariates]],
) -> CounterfactualRiskMatrix:
    """Apply every distinct (model, threshold) pair to every patient.

    Raw risks are computed once per distinct model version and broadcast to
    the thresholds paired with it, so storage and compute are O(n x distinct)
    rather than O(n^2).
    """
    table = patients if isinstance(patients, CohortTable) else CohortTable.from_patients(list(patients))
    n = len(table)
    if len(history) != n:
        raise ValidationError(
            f"history covers {len(history)} patients but {n} were supplied"
        )
    pairs = history.distinct_pairs()
    raw_by_model: dict[int, np.ndarray] = {}
    for model_idx, _ in pairs:
        if model_idx not in raw_by_model:
            raw_by_model[model_idx] = predict_risk_batch(history.models[model_idx], table)
    raw = np.column_stack([raw_by_model[mi] for mi, _ in pairs])
    thresholds = np.asarray([thr for _, thr in pairs])
    shifted = raw - thresholds[None, :]
    version_ids = np.asarray([history.models[mi].version_id for mi, _ in pairs])
    pair_pos = {pair: d for d, pair in enumerate(pairs)}
    column_map = np.asarray(
        [
            pair_pos[(history._version_index[j], history._thresholds[j])]
            for j in range(n)
        ]
    )
    return CounterfactualRiskMatrix(
        shifted=shifted,
        raw=raw,
        column_map=column_map,
        version_ids=version_ids,
        thresholds=thresholds,
    )


def export_matrix_csv(matrix: CounterfactualRiskMatrix, path) -> None:
    """Long-format export: one row per (patient, distinct column)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write("patient_index,version_id,threshold,raw_risk,shifted_risk\n")
        for k in range(matrix.n_patients):
            for d in range(matrix.n_distinct):
                fh.write(
                    f"{k + 1},{int(matrix.version_ids[d])},{float(matrix.thresholds[d])!r},"
                    f"{float(matrix.raw[k, d])!r},{float(matrix.shifted[k, d])!r}\n"
                )


def import_matrix_csv(path, column_pairs: Sequence[tuple[int, float]]) -> CounterfactualRiskMatrix:
    """Rebuild a matrix from its CSV export.

    ``column_pairs`` is the per-patient (version_id, threshold) sequence from
    the trial log, used to reconstruct the column map.
    """
    path = Path(path)
    rows: dict[tuple[int, float], dict[int, tuple[float, float]]] = {}
    order: list[tuple[int, float]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        expected = ["patient_index", "version_id", "threshold", "raw_risk", "shifted_risk"]
        if header != expected:
            raise ConfigError(f"matrix file header must be {','.join(expected)}")
        for line_no, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != 5:
                raise ConfigError(f"matrix file line {line_no}: expected 5 fields")
            k = int(parts[0])
            key = (int(parts[1]), float(parts[2]))
            if key not in rows:
                rows[key] = {}
                order.append(key)
            rows[key][k] = (float(parts[3]), float(parts[4]))
    n = len(column_pairs)
    D = len(order)
    raw = np.empty((n, D))
    shifted = np.empty((n, D))
    for d, key in enumerate(order):
        col = rows[key]
        if len(col) != n:
            raise ConfigError(
                f"matrix column {key} covers {len(col)} patients, expected {n}"
            )
        for k in range(1, n + 1):
            raw[k - 1, d], shifted[k - 1, d] = col[k]
    pos = {key: d for d, key in enumerate(order)}
    try:
        column_map = np.asarray([pos[(vid, thr)] for vid, thr in column_pairs])
    except KeyError as exc:
        raise ConfigError(f"trial log references matrix column {exc} not in file") from exc
    return CounterfactualRiskMatrix(
        shifted=shifted,
        raw=raw,
        column_map=column_map,
        version_ids=np.asarray([k[0] for k in order]),
        thresholds=np.asarray([k[1] for k in order]),
    )
