import json
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from scaleup.errors import DegenerateEstimateError, SurveyValidationError
from scaleup.models import BinomialSimConfig, DeltaGuard, EvaluationReport, SbmConfig, SubpopulationFilter
from scaleup.services import evaluation
from scaleup.services.adjustment import estimate_all_degree_ratios
from scaleup.services.estimators import estimate_degrees
from scaleup.services.evaluation import (
    basic_ratio_span,
    evaluate_loo,
    format_reduction,
    mape,
    percent_reduction,
    relative_error,
    write_report,
)
from scaleup.services.simulators import simulate_binomial, simulate_sbm, varying_exponent_config
from scaleup.services.survey import filter_subpopulations, load_survey


@pytest.mark.parametrize(
    "truths,estimates,expected",
    [
        ([100, 200], [110, 180], 10.0),
        ([100, 200], [100, 200], 0.0),
        ([100], [50], 50.0),
    ],
)
def test_mape(truths, estimates, expected):
    assert mape(truths, estimates) == pytest.approx(expected)


def test_mape_errors():
    with pytest.raises(SurveyValidationError, match="positive"):
        mape([0, 100], [1, 100])
    with pytest.raises(SurveyValidationError, match="length"):
        mape([100, 200], [100])


def test_mape_invariances():
    rng = np.random.default_rng(8)
    truths = rng.uniform(100, 1000, size=20)
    estimates = truths * rng.uniform(0.7, 1.3, size=20)
    order = rng.permutation(20)
    base = mape(truths, estimates)
    assert mape(truths[order], estimates[order]) == pytest.approx(base)
    assert mape(truths * 7.5, estimates * 7.5) == pytest.approx(base)


def test_percent_reduction_and_relative_error():
    assert percent_reduction(10.0, 1.0) == pytest.approx(90.0)
    assert percent_reduction(10.0, 10.0) == 0.0
    assert percent_reduction(10.0, 11.2) == pytest.approx(-12.0)
    with pytest.raises(DegenerateEstimateError):
        percent_reduction(0.0, 1.0)
    assert relative_error(100, 80) == pytest.approx(20.0)
    assert relative_error(100, 125) == pytest.approx(-25.0)


def test_exact_basic_estimates_leave_reduction_undefined(small_world, monkeypatch):
    sizes = small_world.survey.known_sizes

    def exact_basic(survey, degrees, k, guard):
        return SimpleNamespace(estimate=float(sizes[k]), adjusted=1.1 * sizes[k], status="adjusted", diagnostics=[])

    monkeypatch.setattr(evaluation, "adjust", exact_basic)
    report = evaluate_loo(small_world.survey)
    aggregate = report.aggregate
    assert aggregate.mape_basic == 0.0
    assert aggregate.mape_adjusted == pytest.approx(10.0)
    assert aggregate.percent_reduction is None
    assert aggregate.evaluated == small_world.survey.L
    assert "percent reduction is undefined" in aggregate.diagnostics[0]
    assert format_reduction(aggregate.percent_reduction) == "n/a"
    assert json.loads(report.model_dump_json())["aggregate"]["percent_reduction"] is None


def test_evaluate_binomial_world(small_world):
    report = evaluate_loo(small_world.survey, seed=small_world.seed)
    survey = small_world.survey
    assert [r.label for r in report.subpopulations] == list(survey.labels)
    aggregate = report.aggregate
    assert aggregate.evaluated + aggregate.failed + aggregate.guarded == survey.L
    evaluated = [r for r in report.subpopulations if r.status in ("adjusted", "clamped")]
    truths = [r.known_size for r in evaluated]
    assert aggregate.mape_basic == pytest.approx(mape(truths, [r.basic for r in evaluated]))
    assert aggregate.percent_reduction == pytest.approx(
        100 * (aggregate.mape_basic - aggregate.mape_adjusted) / aggregate.mape_basic
    )
    for result in evaluated:
        assert result.relative_error_basic == pytest.approx(relative_error(result.known_size, result.basic))
        assert result.adjusted_better == (abs(result.relative_error_adjusted) < abs(result.relative_error_basic))
    assert report.provenance.degrees_source == "estimated"
    assert report.provenance.seed == small_world.seed
    assert report.provenance.respondents == survey.n


def test_adjustment_helps_on_biased_world(small_world):
    report = evaluate_loo(small_world.survey)
    assert report.aggregate.percent_reduction > 50
    low, high = basic_ratio_span(report)
    assert low < 1 < high


def test_evaluation_needs_three_known(small_world):
    with pytest.raises(SurveyValidationError, match="at least 3"):
        evaluate_loo(small_world.survey, subpopulation_filter=SubpopulationFilter(include=("sub01", "sub02")))


def test_evaluation_is_deterministic_across_threads(small_world):
    one = evaluate_loo(small_world.survey, threads=1)
    many = evaluate_loo(small_world.survey, threads=4)
    assert one.model_dump() == many.model_dump()


def test_evaluation_ignores_respondent_order(small_world):
    survey = small_world.survey
    permuted = survey.take_rows(np.random.default_rng(1).permutation(survey.n))
    a = evaluate_loo(survey).aggregate
    b = evaluate_loo(permuted).aggregate
    assert b.mape_adjusted == pytest.approx(a.mape_adjusted, rel=1e-9)
    assert b.mape_basic == pytest.approx(a.mape_basic, rel=1e-9)


def test_clamped_folds_are_counted(small_world):
    report = evaluate_loo(small_world.survey, guard=DeltaGuard(mode="clamp", lower=0.999, upper=1.001))
    statuses = {r.status for r in report.subpopulations}
    assert "clamped" in statuses
    for result in report.subpopulations:
        assert 0.999 <= result.basic / result.adjusted <= 1.001
    assert report.provenance.guard == "clamp:0.999,1.001"


def test_unbiased_world_basic_mape_is_small():
    world = simulate_binomial(BinomialSimConfig(c=(0.0,) * 50), seed=31)
    report = evaluate_loo(world.survey)
    assert report.aggregate.mape_basic < 3


def test_true_degrees_on_block_model():
    world = simulate_sbm(SbmConfig.ci_default(), seed=19)
    report = evaluate_loo(world.survey, degrees_source=world.degrees, seed=19)
    assert report.provenance.degrees_source == "true"
    assert report.aggregate.evaluated == 10
    assert report.aggregate.adjusted_better >= 7
    assert report.aggregate.percent_reduction > 0


def test_fixture_subset_reports(mccarty_files):
    survey = load_survey(*mccarty_files)
    for spec in ("", "include=@names", "exclude=@names", "exclude=twin,diabetes"):
        subset = SubpopulationFilter.parse(spec)
        report = evaluate_loo(survey, subpopulation_filter=subset)
        known = filter_subpopulations(survey, subset).L
        aggregate = report.aggregate
        assert len(report.subpopulations) == known
        assert aggregate.evaluated + aggregate.failed + aggregate.guarded == known
        assert report.provenance.respondents == 521
        assert report.provenance.dropped_respondents == 53
        assert report.provenance.filter == subset.describe()


def test_write_report(small_world, tmp_path):
    report = evaluate_loo(small_world.survey)
    json_path, csv_path = write_report(report, tmp_path)
    again = EvaluationReport.model_validate(json.loads(json_path.read_text(encoding="utf-8")))
    assert again.aggregate == report.aggregate
    frame = pd.read_csv(csv_path)
    assert list(frame.columns) == [
        "label", "known_size", "estimator", "estimate", "relative_error", "abs_percent_error", "status",
    ]
    assert len(frame) == 2 * small_world.survey.L
    assert set(frame["estimator"]) == {"basic", "adjusted"}
    assert (frame["abs_percent_error"] == frame["relative_error"].abs()).all()


@pytest.mark.slow
def test_binomial_reproduction():
    reductions = []
    for seed in range(5):
        world = simulate_binomial(BinomialSimConfig(), seed=seed)
        report = evaluate_loo(world.survey, seed=seed)
        reductions.append(report.aggregate.percent_reduction)
        low, high = basic_ratio_span(report)
        assert low == pytest.approx(0.82, abs=0.10)
        assert high == pytest.approx(1.37, abs=0.10)
        fit = estimate_all_degree_ratios(world.survey, estimate_degrees(world.survey))
        assert fit.second_stage.r_squared >= 0.95
    assert np.mean(reductions) >= 90


@pytest.mark.slow
def test_varying_exponent_reproduction():
    reductions, spans = [], []
    for seed in range(5):
        world = simulate_binomial(varying_exponent_config(), seed=seed)
        report = evaluate_loo(world.survey)
        reductions.append(report.aggregate.percent_reduction)
        spans.append(basic_ratio_span(report))
    assert np.mean(reductions) >= 75
    low, high = np.mean(spans, axis=0)
    assert low == pytest.approx(0.78, abs=0.12)
    assert high == pytest.approx(1.46, abs=0.12)


@pytest.mark.slow
def test_block_model_reproduction():
    for seed in range(3):
        world = simulate_sbm(SbmConfig(), seed=seed, threads=4)
        report = evaluate_loo(world.survey, degrees_source=world.degrees, threads=4)
        assert report.aggregate.percent_reduction >= 60
        assert report.aggregate.adjusted_better >= 16
