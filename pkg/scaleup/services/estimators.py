import logging
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np

from scaleup.errors import DegenerateEstimateError, SurveyValidationError
from scaleup.models import SizeEstimate
from scaleup.services.survey import ArdSurvey

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DegreeEstimates:
    """
    Respondent network sizes: the full vector d_i and the leave-one-out rows d_{i,-k}.

    `leave_one_out` has one row per known subpopulation, in `known_indices` order. It is
    None when leaving out any known subpopulation leaves no known size to scale by.
    """
    full: np.ndarray
    leave_one_out: Optional[np.ndarray]
    known_indices: Tuple[int, ...]
    source: Literal["estimated", "true"] = "estimated"

    def loo(self, k: int) -> np.ndarray:
        """d_{i,-k} for known subpopulation k."""
        if k not in self.known_indices:
            raise SurveyValidationError(f"Leave-one-out degrees are only defined for known subpopulations (index {k})")
        if self.leave_one_out is None:
            raise DegenerateEstimateError(
                f"Leave-one-out degrees for subpopulation {k} are undefined: no other known subpopulation remains"
            )
        return self.leave_one_out[self.known_indices.index(k)]

    @classmethod
    def from_true(cls, degrees, survey: ArdSurvey) -> "DegreeEstimates":
        """Wrap known degrees; every leave-one-out row equals the supplied vector."""
        degrees = np.asarray(degrees, dtype=float)
        if degrees.shape != (survey.n,):
            raise SurveyValidationError(f"Expected {survey.n} true degrees, got {degrees.shape[0] if degrees.ndim else 0}")
        if not np.all(np.isfinite(degrees)) or (degrees < 0).any():
            raise SurveyValidationError("True degrees must be finite and nonnegative")
        degrees = degrees.copy()
        degrees.setflags(write=False)
        rows = np.broadcast_to(degrees, (survey.L, survey.n))
        return cls(full=degrees, leave_one_out=rows, known_indices=survey.known_indices, source="true")

    def for_survey(self, survey: ArdSurvey) -> "DegreeEstimates":
        """Degrees for a re-viewed survey (e.g. one known subpopulation moved to hidden)."""
        if self.source == "true":
            return DegreeEstimates.from_true(self.full, survey)
        return estimate_degrees(survey)


def estimate_degrees(survey: ArdSurvey) -> DegreeEstimates:
    """
    d_i = N * sum_{k known} y_ik / sum_{k known} N_k, plus the leave-one-out variants.

    Under simple random sampling the inclusion probability cancels, so it never appears.
    """
    known = survey.known_indices
    sizes = np.array([survey.known_sizes[k] for k in known], dtype=float)
    total_size = sizes.sum()
    if total_size <= 0:
        raise DegenerateEstimateError("Known subpopulation sizes sum to zero")

    known_responses = survey.responses[:, known].astype(float)
    row_totals = known_responses.sum(axis=1)
    N = float(survey.total_population)
    full = N * row_totals / total_size

    remaining = total_size - sizes
    leave_one_out = None
    if np.all(remaining > 0):
        leave_one_out = N * (row_totals[None, :] - known_responses.T) / remaining[:, None]
        leave_one_out.setflags(write=False)
    else:
        logger.debug("Leave-one-out degrees undefined: only one known subpopulation")
    full.setflags(write=False)
    return DegreeEstimates(full=full, leave_one_out=leave_one_out, known_indices=known, source="estimated")


def scaleup(total_population: float, column, degrees) -> float:
    """Basic scale-up estimate N * sum(y) / sum(d)."""
    degree_total = float(np.sum(degrees))
    if degree_total <= 0:
        raise DegenerateEstimateError("Degrees sum to zero; the scale-up estimate is undefined")
    return float(total_population) * float(np.sum(column)) / degree_total


def scaleup_known_degrees(survey: ArdSurvey, degrees, k: int) -> SizeEstimate:
    """Size of subpopulation k given the respondents' true degrees."""
    degrees = np.asarray(degrees, dtype=float)
    if degrees.shape != (survey.n,):
        raise SurveyValidationError(f"Expected {survey.n} degrees, got shape {degrees.shape}")
    estimate = scaleup(survey.total_population, survey.column(k), degrees)
    return SizeEstimate(index=k, label=survey.labels[k], estimate=estimate, variant="known-degree")


def scaleup_estimated_degrees(survey: ArdSurvey, degrees: DegreeEstimates, k: int, loo: bool) -> SizeEstimate:
    """
    Size of subpopulation k with estimated degrees.

    With `loo` set, k must be known and d_{i,-k} is used; otherwise the full d_i.
    """
    column = survey.column(k)
    if loo:
        if not survey.is_known(k):
            raise SurveyValidationError(
                f"Leave-one-out estimate requested for hidden subpopulation '{survey.labels[k]}'"
            )
        vector = degrees.loo(k)
        variant = "loo"
    else:
        vector = degrees.full
        variant = "estimated-degree" if degrees.source == "estimated" else "known-degree"
    try:
        estimate = scaleup(survey.total_population, column, vector)
    except DegenerateEstimateError as e:
        raise DegenerateEstimateError(f"Subpopulation '{survey.labels[k]}': {e}")
    return SizeEstimate(index=k, label=survey.labels[k], estimate=estimate, variant=variant)
