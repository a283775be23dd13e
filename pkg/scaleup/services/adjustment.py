import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from scaleup.errors import DegenerateEstimateError
from scaleup.models import DeltaGuard, FitReport, OlsFit, SubpopulationFit
from scaleup.services.estimators import DegreeEstimates, scaleup_estimated_degrees
from scaleup.services.survey import ArdSurvey

logger = logging.getLogger(__name__)


def scale_responses(column) -> np.ndarray:
    """z_i = y_i / mean(y)."""
    column = np.asarray(column, dtype=float)
    mean = column.mean() if column.size else 0.0
    if not mean > 0:
        raise DegenerateEstimateError("Response column has zero mean; it cannot be scaled")
    return column / mean


def ols(x, y) -> OlsFit:
    """Closed-form simple least squares of y on x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    if n < 2 or y.shape[0] != n:
        raise DegenerateEstimateError(f"Regression needs at least 2 paired points, got {n}")
    x_bar = x.mean()
    y_bar = y.mean()
    dx = x - x_bar
    sxx = float(np.dot(dx, dx))
    if not sxx > 0:
        raise DegenerateEstimateError("Regressor has zero variance")
    slope = float(np.dot(dx, y - y_bar)) / sxx
    intercept = float(y_bar - slope * x_bar)
    residuals = y - (intercept + slope * x)
    ssr = float(np.dot(residuals, residuals))
    sst = float(np.dot(y - y_bar, y - y_bar))
    return OlsFit(
        intercept=intercept,
        slope=slope,
        residual_variance=ssr / (n - 2) if n > 2 else 0.0,
        r_squared=1.0 - ssr / sst if sst > 0 else 1.0,
        n=n,
    )


@dataclass(frozen=True)
class FirstStage:
    """Per-subpopulation regressions of scaled responses on degrees, plus recorded failures."""
    fits: Dict[int, OlsFit]
    failures: Dict[int, str]

    def slope(self, k: int) -> float:
        if k not in self.fits:
            raise DegenerateEstimateError(self.failures.get(k, f"No first-stage fit for subpopulation {k}"))
        return self.fits[k].slope


def first_stage_slopes(survey: ArdSurvey, degrees: DegreeEstimates) -> FirstStage:
    """
    Regress z_ik on d_{i,-k} for each known k and z_iH on d_i for each hidden H.

    Failures (e.g. an all-zero column) are logged and recorded, never raised.
    """
    fits: Dict[int, OlsFit] = {}
    failures: Dict[int, str] = {}
    for k in range(survey.K):
        label = survey.labels[k]
        try:
            regressor = degrees.loo(k) if survey.is_known(k) else degrees.full
            fits[k] = ols(regressor, scale_responses(survey.column(k)))
        except DegenerateEstimateError as e:
            failures[k] = f"first stage failed for '{label}': {e}"
            logger.warning(failures[k])
    return FirstStage(fits=fits, failures=failures)


def fit_second_stage(ratios: Sequence[float], slopes: Sequence[float]) -> OlsFit:
    """OLS of N_k / N_k^LOO on the first-stage slopes; returns (gamma0, gamma1) as intercept/slope."""
    ratios = np.asarray(ratios, dtype=float)
    slopes = np.asarray(slopes, dtype=float)
    if ratios.shape != slopes.shape:
        raise DegenerateEstimateError("Second stage needs one ratio per slope")
    if ratios.size < 2:
        raise DegenerateEstimateError(f"Second stage needs at least 2 known subpopulations, got {ratios.size}")
    try:
        return ols(slopes, ratios)
    except DegenerateEstimateError as e:
        raise DegenerateEstimateError(f"Second stage: {e}")


def resolve_delta(inverse_ratio: float, guard: DeltaGuard):
    """
    Turn gamma0 + gamma1 * beta into a degree ratio.

    Returns (delta_hat or None, status, diagnostic or None).
    """
    if np.isfinite(inverse_ratio) and inverse_ratio > 0:
        delta = 1.0 / inverse_ratio
        if guard.mode == "clamp" and not guard.lower <= delta <= guard.upper:
            clipped = float(np.clip(delta, guard.lower, guard.upper))
            return clipped, "clamped", f"degree ratio {delta:.6g} clamped to {clipped:.6g}"
        return delta, "adjusted", None
    message = f"predicted inverse degree ratio {inverse_ratio:.6g} is not positive"
    if guard.mode == "clamp":
        return guard.upper, "clamped", f"{message}; degree ratio clamped to {guard.upper:.6g}"
    return None, "guarded", f"{message}; reporting the unadjusted estimate"


@dataclass(frozen=True)
class AdjustmentFit:
    """
    Result of the degree ratio adjustment on one survey view.

    `target` is None for an in-sample fit of every subpopulation's degree ratio.
    Estimates of known subpopulations are leave-one-out; hidden ones use the full degrees.
    """
    first_stage: FirstStage
    second_stage: OlsFit
    second_stage_indices: List[int]
    ratios: Dict[int, float]
    estimates: Dict[int, float]
    delta_hat: Dict[int, float]
    adjusted_sizes: Dict[int, float]
    target: Optional[int] = None
    status: str = "adjusted"
    inverse_ratio: Optional[float] = None
    diagnostics: List[str] = field(default_factory=list)

    @property
    def estimate(self) -> float:
        return self.estimates[self.target]

    @property
    def adjusted(self) -> float:
        """Adjusted target size; the unadjusted estimate when the guard tripped."""
        return self.adjusted_sizes.get(self.target, self.estimates[self.target])

    def to_report(self, survey: ArdSurvey) -> FitReport:
        rows = []
        for k, label in enumerate(survey.labels):
            fit = self.first_stage.fits.get(k)
            rows.append(SubpopulationFit(
                label=label,
                known_size=survey.known_sizes.get(k),
                first_stage_slope=fit.slope if fit else None,
                ratio=self.ratios.get(k),
                estimate=self.estimates.get(k),
                delta_hat=self.delta_hat.get(k),
                adjusted=self.adjusted_sizes.get(k),
                diagnostic=self.first_stage.failures.get(k),
            ))
        has_target = self.target is not None
        return FitReport(
            target=survey.labels[self.target] if has_target else "",
            status=self.status,
            estimate=self.estimate if has_target else 0.0,
            adjusted=self.adjusted if has_target else 0.0,
            delta_hat=self.delta_hat.get(self.target) if has_target else None,
            inverse_ratio=self.inverse_ratio,
            gamma0=self.second_stage.intercept,
            gamma1=self.second_stage.slope,
            second_stage_r_squared=self.second_stage.r_squared,
            second_stage_points=len(self.second_stage_indices),
            subpopulations=rows,
            diagnostics=list(self.diagnostics),
        )


def _size_estimates(survey: ArdSurvey, degrees: DegreeEstimates):
    estimates: Dict[int, float] = {}
    failures: Dict[int, str] = {}
    for k in range(survey.K):
        try:
            estimates[k] = scaleup_estimated_degrees(survey, degrees, k, loo=survey.is_known(k)).estimate
        except DegenerateEstimateError as e:
            failures[k] = str(e)
    return estimates, failures


def _fit(survey: ArdSurvey, degrees: DegreeEstimates, guard: DeltaGuard, target: Optional[int]) -> AdjustmentFit:
    diagnostics: List[str] = []
    first_stage = first_stage_slopes(survey, degrees)
    if target is not None and target in first_stage.failures:
        raise DegenerateEstimateError(first_stage.failures[target])
    estimates, estimate_failures = _size_estimates(survey, degrees)
    if target is not None and target in estimate_failures:
        raise DegenerateEstimateError(estimate_failures[target])
    diagnostics.extend(estimate_failures.values())

    ratios: Dict[int, float] = {}
    for k in survey.known_indices:
        if k not in first_stage.fits:
            diagnostics.append(first_stage.failures[k])
            continue
        estimate = estimates.get(k, 0.0)
        if not estimate > 0:
            diagnostics.append(f"'{survey.labels[k]}' has a zero leave-one-out estimate; excluded from the second stage")
            continue
        ratios[k] = survey.known_sizes[k] / estimate
    indices = list(ratios)
    second_stage = fit_second_stage([ratios[k] for k in indices], [first_stage.slope(k) for k in indices])

    delta_hat: Dict[int, float] = {}
    adjusted_sizes: Dict[int, float] = {}
    for k, fit in first_stage.fits.items():
        if k not in estimates:
            continue
        delta, _, _ = resolve_delta(second_stage.intercept + second_stage.slope * fit.slope, guard)
        if delta is not None:
            delta_hat[k] = delta
            adjusted_sizes[k] = estimates[k] / delta

    status = "adjusted"
    inverse_ratio = None
    if target is not None:
        inverse_ratio = second_stage.intercept + second_stage.slope * first_stage.slope(target)
        delta, status, diagnostic = resolve_delta(inverse_ratio, guard)
        if diagnostic:
            logger.warning(f"'{survey.labels[target]}': {diagnostic}")
            diagnostics.append(diagnostic)
        if delta is None:
            delta_hat.pop(target, None)
            adjusted_sizes.pop(target, None)

    return AdjustmentFit(
        first_stage=first_stage,
        second_stage=second_stage,
        second_stage_indices=indices,
        ratios=ratios,
        estimates=estimates,
        delta_hat=delta_hat,
        adjusted_sizes=adjusted_sizes,
        target=target,
        status=status,
        inverse_ratio=inverse_ratio,
        diagnostics=diagnostics,
    )


def adjust(survey: ArdSurvey, degrees: DegreeEstimates, target: int, guard: DeltaGuard = DeltaGuard()) -> AdjustmentFit:
    """
    Degree-ratio-adjusted size of `target`: N_adj = N_target * (gamma0 + gamma1 * beta_target).

    A known target is treated as hidden first: degrees are re-estimated without it, so
    neither its known size nor its column enters the second stage or its own degrees.
    """
    if survey.is_known(target):
        survey = survey.with_hidden(target)
        degrees = degrees.for_survey(survey)
    return _fit(survey, degrees, guard, target)


def estimate_all_degree_ratios(survey: ArdSurvey, degrees: DegreeEstimates, guard: DeltaGuard = DeltaGuard()) -> AdjustmentFit:
    """In-sample degree ratios for every subpopulation, known ones included."""
    return _fit(survey, degrees, guard, target=None)
