import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from scaleup.errors import DegenerateEstimateError, SurveyValidationError
from scaleup.models import BiasProfile, OracleCheck, SbmConfig, VerifyReport
from scaleup.services.estimators import estimate_degrees, scaleup, scaleup_estimated_degrees
from scaleup.services.parallel import STREAM_ORACLE, STREAM_SAMPLES, map_ordered, substream
from scaleup.services.simulators import SimulatedWorld, bias_multiplier, centered_power, simulate_sbm

logger = logging.getLogger(__name__)

Estimator = Callable[[float, np.ndarray, np.ndarray], float]

# Below this sample size the Monte Carlo tolerances are widened by SMALL_SAMPLE_WIDENING.
SMALL_SAMPLE = 200
SMALL_SAMPLE_WIDENING = 1.5
IDENTITY_TOLERANCE = 1e-10


class PopulationTruth(BaseModel):
    """Group mean degrees and sizes of a fixed population."""
    model_config = ConfigDict(frozen=True)

    known_mean_degrees: Tuple[float, ...]
    known_sizes: Tuple[int, ...]
    hidden_mean_degree: float
    frame_mean_degree: float
    hidden_size: int
    total_population: int

    @model_validator(mode="after")
    def check_truth(self):
        if len(self.known_mean_degrees) != len(self.known_sizes):
            raise ValueError("one mean degree per known subpopulation is required")
        if min(self.known_sizes, default=1) < 1 or self.hidden_size < 1 or self.total_population < 1:
            raise ValueError("sizes must be positive")
        if min(self.known_mean_degrees, default=0.0) < 0 or self.hidden_mean_degree < 0:
            raise ValueError("mean degrees must be nonnegative")
        return self


def bias_known_degrees(truth: PopulationTruth) -> float:
    """Bias of the known-degree estimator: N_H * (d_H / d_F - 1)."""
    if not truth.frame_mean_degree > 0:
        raise DegenerateEstimateError("Frame mean degree must be positive")
    return truth.hidden_size * (truth.hidden_mean_degree / truth.frame_mean_degree - 1.0)


def bias_estimated_degrees(truth: PopulationTruth) -> float:
    """Bias with estimated degrees: N_H * (d_H * sum N_k / sum d_k N_k - 1)."""
    sizes = np.asarray(truth.known_sizes, dtype=float)
    weighted = float(np.dot(truth.known_mean_degrees, sizes))
    if not weighted > 0:
        raise DegenerateEstimateError("Known subpopulations have zero total degree")
    return truth.hidden_size * (truth.hidden_mean_degree * sizes.sum() / weighted - 1.0)


def bias_fk(degrees, profile: BiasProfile, k: int, size: float) -> float:
    """Bias of the known-degree estimator under f_k: N_k * (sum d f_k(d) / sum d - 1)."""
    degrees = np.asarray(degrees, dtype=float)
    total = degrees.sum()
    if not total > 0:
        raise DegenerateEstimateError("Degrees sum to zero")
    return size * (float(np.dot(degrees, bias_multiplier(degrees, profile, k))) / total - 1.0)


def _moments(degrees, g):
    d = np.asarray(degrees, dtype=float)
    g = np.asarray(g, dtype=float)
    return d.sum(), float(np.dot(d, g)), float(np.dot(d, d)), float(np.dot(d * d, g))


def gamma1_closed_form(degrees, g, a: float) -> float:
    """
    Slope shared by every subpopulation's (sum d^2 f / sum d f, sum d / sum d f) pair.

    With A = sum d, B = sum d g, C = sum d^2, D = sum d^2 g:
    gamma1 = A B / (a (C B - A D)).
    """
    if a == 0:
        raise DegenerateEstimateError("a must be nonzero")
    A, B, C, D = _moments(degrees, g)
    bracket = C * B - A * D
    if abs(bracket) <= 1e-12 * (abs(C * B) + abs(A * D)):
        raise DegenerateEstimateError("gamma1 is undefined: g does not vary with degree")
    return A * B / (a * bracket)


def expected_first_stage_proxy(degrees, g, a: float, c: float) -> Tuple[float, float]:
    """(sum d / sum d f, sum d^2 f / sum d f) for f = a + g c: E[N/N_hat] and the slope proxy."""
    A, B, C, D = _moments(degrees, g)
    weight = a * A + c * B
    return A / weight, (a * C + c * D) / weight


def gamma1_two_point(degrees, g, a: float, c1: float, c2: float) -> float:
    """Slope of the line through the expected points of two subpopulations with c1 != c2."""
    r1, x1 = expected_first_stage_proxy(degrees, g, a, c1)
    r2, x2 = expected_first_stage_proxy(degrees, g, a, c2)
    if x1 == x2:
        raise DegenerateEstimateError("Two-point solve needs distinct proxies")
    return (r2 - r1) / (x2 - x1)


@dataclass(frozen=True)
class MonteCarloResult:
    expected: float
    mean: float
    standard_error: float
    replicates: int

    def agrees(self, z: float) -> bool:
        return abs(self.mean - self.expected) <= z * self.standard_error + 1e-9 * max(1.0, abs(self.expected))


def _summarize(expected: float, draws) -> MonteCarloResult:
    draws = np.asarray(draws, dtype=float)
    return MonteCarloResult(
        expected=expected,
        mean=float(draws.mean()),
        standard_error=float(draws.std(ddof=1) / np.sqrt(draws.size)),
        replicates=int(draws.size),
    )


def population_truth(world: SimulatedWorld, hidden: int) -> PopulationTruth:
    """Group mean degrees of a block-model population with group `hidden` treated as unknown."""
    if world.group_of is None:
        raise SurveyValidationError("Population truth needs a world whose groups partition the population")
    degrees = world.degrees.astype(float)
    groups = range(world.survey.K)
    means = [float(degrees[world.group_of == g].mean()) for g in groups]
    sizes = [int(np.sum(world.group_of == g)) for g in groups]
    known = [g for g in groups if g != hidden]
    return PopulationTruth(
        known_mean_degrees=tuple(means[g] for g in known),
        known_sizes=tuple(sizes[g] for g in known),
        hidden_mean_degree=means[hidden],
        frame_mean_degree=float(degrees.mean()),
        hidden_size=sizes[hidden],
        total_population=world.survey.total_population,
    )


def monte_carlo_sampling_bias(
    world: SimulatedWorld,
    hidden: int,
    sample_size: int,
    replicates: int,
    seed: int,
    threads: int = 1,
) -> Tuple[MonteCarloResult, MonteCarloResult]:
    """
    Bias of the known-degree and estimated-degree estimators of group `hidden` over
    simple random samples of a fixed population.
    """
    population = world.survey.with_hidden(hidden)
    truth = population_truth(world, hidden)
    if not 2 <= sample_size <= population.n:
        raise SurveyValidationError(f"Sample size must be in [2, {population.n}]")

    def replicate(r: int) -> Tuple[float, float]:
        rows = substream(seed, STREAM_SAMPLES, r).choice(population.n, size=sample_size, replace=False)
        sample = population.take_rows(rows)
        known_degree = scaleup(sample.total_population, sample.column(hidden), world.degrees[rows])
        estimated = scaleup_estimated_degrees(sample, estimate_degrees(sample), hidden, loo=False).estimate
        return known_degree - truth.hidden_size, estimated - truth.hidden_size

    draws = np.array(map_ordered(replicate, range(replicates), threads))
    return (
        _summarize(bias_known_degrees(truth), draws[:, 0]),
        _summarize(bias_estimated_degrees(truth), draws[:, 1]),
    )


def monte_carlo_bias_fk(
    degrees,
    size: int,
    total_population: int,
    profile: BiasProfile,
    k: int,
    replicates: int,
    seed: int,
    estimator: Estimator = scaleup,
) -> MonteCarloResult:
    """Mean of N_hat_k - N_k over binomial redraws at fixed degrees."""
    degrees = np.asarray(degrees)
    probabilities = np.clip(size / total_population * bias_multiplier(degrees, profile, k), 0.0, 1.0)
    draws = substream(seed, STREAM_ORACLE, k).binomial(degrees, probabilities, size=(replicates, degrees.size))
    errors = [estimator(total_population, row, degrees) - size for row in draws]
    return _summarize(bias_fk(degrees, profile, k, size), errors)


def _check(name: str, expected: float, observed: float, tolerance: float, passed: bool, detail: str = "") -> OracleCheck:
    return OracleCheck(name=name, expected=expected, observed=observed, tolerance=tolerance, passed=bool(passed), detail=detail)


def _monte_carlo_check(name: str, result: MonteCarloResult, z: float) -> OracleCheck:
    return _check(
        name,
        expected=result.expected,
        observed=result.mean,
        tolerance=z * result.standard_error,
        passed=result.agrees(z),
        detail=f"{result.replicates} replicates, z={z:g}, s.e.={result.standard_error:.4g}",
    )


def run_oracle_suite(
    seed: int,
    threads: int = 1,
    replicates: int = 2000,
    sample_size: int = 600,
    z_sampling: float = 2.0,
    z_binomial: float = 3.0,
    estimator: Estimator = scaleup,
) -> VerifyReport:
    """
    Check the estimators against the closed-form bias results.

    `estimator` is the known-degree scale-up used for the binomial checks; passing a
    corrupted one must make those checks fail.
    """
    checks: List[OracleCheck] = []
    widened = sample_size < SMALL_SAMPLE
    if widened:
        z_sampling *= SMALL_SAMPLE_WIDENING
        z_binomial *= SMALL_SAMPLE_WIDENING
        logger.info(f"Sample size {sample_size} < {SMALL_SAMPLE}: tolerances widened by {SMALL_SAMPLE_WIDENING}")

    # Fixed population: a block model whose groups have distinct mean degrees.
    population = simulate_sbm(
        SbmConfig(nodes=3000, groups=6, within=(0.05, 0.08, 0.11, 0.14, 0.17, 0.2), between=0.01),
        seed=seed,
        threads=threads,
    )
    hidden = population.survey.K - 1
    known_result, estimated_result = monte_carlo_sampling_bias(
        population, hidden, min(sample_size, population.survey.n), replicates, seed, threads
    )
    checks.append(_monte_carlo_check("known_degree_bias", known_result, z_sampling))
    checks.append(_monte_carlo_check("estimated_degree_bias", estimated_result, z_sampling))

    # Binomial model at fixed degrees.
    rng = substream(seed, STREAM_ORACLE, 10_000)
    degrees = np.rint(rng.uniform(10, 1000, size=max(sample_size, 2))).astype(np.int64)
    g = centered_power(degrees, 2.0)
    bound = min(1.0 / g.max(), -1.0 / g.min())
    profile = BiasProfile(a=1.0, exponents=(2.0,), c=(0.8 * bound,))
    size, total = 50_000, 10_000_000
    fk_result = monte_carlo_bias_fk(degrees, size, total, profile, 0, replicates, seed, estimator)
    checks.append(_monte_carlo_check("binomial_bias", fk_result, z_binomial))

    expected_responses = degrees * size / total * bias_multiplier(degrees, profile, 0)
    noiseless = estimator(total, expected_responses, degrees) - size
    analytic = bias_fk(degrees, profile, 0, size)
    checks.append(_check(
        "noiseless_binomial_bias",
        expected=analytic,
        observed=noiseless,
        tolerance=1e-9 * max(1.0, abs(analytic)),
        passed=abs(noiseless - analytic) <= 1e-9 * max(1.0, abs(analytic)),
        detail="scale-up on expected responses",
    ))

    closed = gamma1_closed_form(degrees, g, profile.a)
    pairs = rng.uniform(-bound, bound, size=(20, 2))
    solved = np.array([gamma1_two_point(degrees, g, profile.a, c1, c2) for c1, c2 in pairs])
    worst = float(np.max(np.abs(solved - closed)) / abs(closed))
    checks.append(_check(
        "gamma1_two_point_identity",
        expected=closed,
        observed=float(solved[np.argmax(np.abs(solved - closed))]),
        tolerance=IDENTITY_TOLERANCE,
        passed=worst <= IDENTITY_TOLERANCE,
        detail=f"20 random (c1, c2) pairs, worst relative error {worst:.3g}",
    ))
    spread = float((solved.max() - solved.min()) / abs(closed))
    checks.append(_check(
        "gamma1_pair_invariance",
        expected=0.0,
        observed=spread,
        tolerance=IDENTITY_TOLERANCE,
        passed=spread <= IDENTITY_TOLERANCE,
        detail="relative spread of two-point solutions",
    ))
    if widened:
        for check in checks:
            check.detail += " (small-sample tolerance)"
    return VerifyReport(seed=seed, checks=checks)
