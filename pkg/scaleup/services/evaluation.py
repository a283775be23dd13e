import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from scaleup.errors import DegenerateEstimateError, SurveyValidationError
from scaleup.models import (
    DeltaGuard,
    EvaluationAggregate,
    EvaluationProvenance,
    EvaluationReport,
    SubpopulationFilter,
    SubpopulationResult,
)
from scaleup.services.adjustment import adjust
from scaleup.services.estimators import DegreeEstimates, estimate_degrees
from scaleup.services.parallel import map_ordered
from scaleup.services.survey import ArdSurvey, filter_subpopulations

logger = logging.getLogger(__name__)

REPORT_JSON = "report.json"
REPORT_CSV = "report.csv"
MIN_KNOWN_FOR_EVALUATION = 3


def _paired(truths, estimates) -> Tuple[np.ndarray, np.ndarray]:
    truths = np.asarray(truths, dtype=float)
    estimates = np.asarray(estimates, dtype=float)
    if truths.shape != estimates.shape or truths.ndim != 1:
        raise SurveyValidationError(f"Truths and estimates differ in length ({truths.size} vs {estimates.size})")
    if truths.size == 0:
        raise SurveyValidationError("At least one truth/estimate pair is required")
    if not (truths > 0).all():
        raise SurveyValidationError("Truths must be positive")
    return truths, estimates


def relative_error(truth: float, estimate: float) -> float:
    """100 * (truth - estimate) / truth; positive means underestimation."""
    if not truth > 0:
        raise SurveyValidationError("Truth must be positive")
    return 100.0 * (truth - estimate) / truth


def mape(truths, estimates) -> float:
    """Mean absolute percent error."""
    truths, estimates = _paired(truths, estimates)
    return float(np.mean(100.0 * np.abs(truths - estimates) / truths))


def rmse(truths, estimates) -> float:
    truths, estimates = _paired(truths, estimates)
    return float(np.sqrt(np.mean((truths - estimates) ** 2)))


def percent_reduction(mape_basic: float, mape_adjusted: float) -> float:
    """100 * (MAPE_basic - MAPE_adjusted) / MAPE_basic; negative when adjustment hurts."""
    if not mape_basic > 0:
        raise DegenerateEstimateError("Percent reduction is undefined when the basic MAPE is 0")
    return 100.0 * (mape_basic - mape_adjusted) / mape_basic


def format_reduction(reduction: Optional[float]) -> str:
    return "n/a" if reduction is None else f"{reduction:.1f}%"


def _fold(survey: ArdSurvey, degrees: DegreeEstimates, guard: DeltaGuard, k: int) -> SubpopulationResult:
    label = survey.labels[k]
    truth = survey.known_sizes[k]
    try:
        fit = adjust(survey, degrees, k, guard)
    except DegenerateEstimateError as e:
        logger.warning(f"Fold '{label}' failed: {e}")
        return SubpopulationResult(label=label, known_size=truth, status="failed", diagnostic=str(e))

    basic, adjusted = fit.estimate, fit.adjusted
    error_basic = relative_error(truth, basic)
    error_adjusted = relative_error(truth, adjusted)
    return SubpopulationResult(
        label=label,
        known_size=truth,
        basic=basic,
        adjusted=adjusted,
        relative_error_basic=error_basic,
        relative_error_adjusted=error_adjusted,
        adjusted_better=abs(error_adjusted) < abs(error_basic),
        status=fit.status,
        diagnostic="; ".join(fit.diagnostics) or None,
    )


def evaluate_loo(
    survey: ArdSurvey,
    degrees_source: Union[str, Sequence[float], np.ndarray] = "estimated",
    subpopulation_filter: SubpopulationFilter = SubpopulationFilter(),
    guard: DeltaGuard = DeltaGuard(),
    threads: int = 1,
    seed: Optional[int] = None,
) -> EvaluationReport:
    """
    Treat each known subpopulation in turn as hidden and compare basic vs adjusted estimates.

    `degrees_source` is "estimated" or a vector of true respondent degrees. Failed and
    guarded folds are reported per subpopulation and left out of the aggregate.
    """
    filtered = filter_subpopulations(survey, subpopulation_filter)
    if filtered.L < MIN_KNOWN_FOR_EVALUATION:
        raise SurveyValidationError(
            f"Leave-one-out evaluation needs at least {MIN_KNOWN_FOR_EVALUATION} known subpopulations, "
            f"got {filtered.L}"
        )
    if isinstance(degrees_source, str):
        if degrees_source != "estimated":
            raise SurveyValidationError(f"Unknown degrees source '{degrees_source}'")
        degrees = estimate_degrees(filtered)
    else:
        degrees = DegreeEstimates.from_true(degrees_source, filtered)

    results = map_ordered(lambda k: _fold(filtered, degrees, guard, k), filtered.known_indices, threads)
    evaluated = [r for r in results if r.status in ("adjusted", "clamped")]
    if not evaluated:
        raise DegenerateEstimateError("Every leave-one-out fold failed or was guarded")

    truths = [r.known_size for r in evaluated]
    basic = [r.basic for r in evaluated]
    adjusted = [r.adjusted for r in evaluated]
    mape_basic = mape(truths, basic)
    mape_adjusted = mape(truths, adjusted)
    reduction = None
    diagnostics = []
    if mape_basic > 0:
        reduction = percent_reduction(mape_basic, mape_adjusted)
    else:
        diagnostics.append("Basic MAPE is 0 over the evaluated folds; percent reduction is undefined")
        logger.warning(diagnostics[-1])
    aggregate = EvaluationAggregate(
        mape_basic=mape_basic,
        mape_adjusted=mape_adjusted,
        percent_reduction=reduction,
        evaluated=len(evaluated),
        failed=sum(r.status == "failed" for r in results),
        guarded=sum(r.status == "guarded" for r in results),
        adjusted_better=sum(bool(r.adjusted_better) for r in evaluated),
        rmse_basic=rmse(truths, basic),
        rmse_adjusted=rmse(truths, adjusted),
        diagnostics=diagnostics,
    )
    logger.info(
        f"Evaluated {aggregate.evaluated} folds: MAPE {mape_basic:.2f} -> {mape_adjusted:.2f} "
        f"({format_reduction(reduction)} reduction)"
    )
    return EvaluationReport(
        subpopulations=results,
        aggregate=aggregate,
        provenance=EvaluationProvenance(
            filter=subpopulation_filter.describe(),
            degrees_source=degrees.source,
            guard=guard.describe(),
            seed=seed,
            respondents=filtered.n,
            dropped_respondents=filtered.dropped_respondents,
        ),
    )


def basic_ratio_span(report: EvaluationReport) -> Tuple[float, float]:
    """Smallest and largest basic N_hat_k / N_k over the evaluated folds."""
    ratios = [r.basic / r.known_size for r in report.subpopulations if r.basic is not None]
    if not ratios:
        raise DegenerateEstimateError("No basic estimates in the report")
    return min(ratios), max(ratios)


def report_frame(report: EvaluationReport) -> pd.DataFrame:
    """One row per subpopulation per estimator."""
    rows = []
    for result in report.subpopulations:
        for estimator, estimate, error in (
            ("basic", result.basic, result.relative_error_basic),
            ("adjusted", result.adjusted, result.relative_error_adjusted),
        ):
            rows.append({
                "label": result.label,
                "known_size": result.known_size,
                "estimator": estimator,
                "estimate": estimate,
                "relative_error": error,
                "abs_percent_error": abs(error) if error is not None else None,
                "status": result.status,
            })
    return pd.DataFrame(rows, columns=[
        "label", "known_size", "estimator", "estimate", "relative_error", "abs_percent_error", "status",
    ])


def write_report(report: EvaluationReport, directory) -> Tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    json_path = directory / REPORT_JSON
    csv_path = directory / REPORT_CSV
    json_path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    report_frame(report).to_csv(csv_path, index=False)
    return json_path, csv_path
