import argparse
import logging

from scaleup.commands.common import add_survey_arguments, resolve_degrees
from scaleup.config import resolve_output_dir
from scaleup.errors import GuardError, SurveyValidationError
from scaleup.models import DeltaGuard, EstimateReport, MissingPolicy, RunConfig, SubpopulationFilter
from scaleup.services.adjustment import adjust, estimate_all_degree_ratios
from scaleup.services.estimators import DegreeEstimates, estimate_degrees, scaleup_estimated_degrees
from scaleup.services.survey import filter_subpopulations, load_survey

logger = logging.getLogger(__name__)

ESTIMATE_FILE = "estimate.json"
RATIOS_FILE = "degree_ratios.json"


def register(subparsers, parents):
    parser = subparsers.add_parser(
        "estimate",
        parents=parents,
        help="Basic and degree-ratio-adjusted size of a hidden subpopulation",
    )
    add_survey_arguments(parser, required=True)
    parser.add_argument("--hidden", default=None, help="Target label (default: the first hidden label)")
    parser.add_argument("--no-adjust", action="store_true", help="Report the basic estimate only")
    parser.add_argument("--all-ratios", action="store_true", help="Also write in-sample degree ratios for every subpopulation")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, run_config: RunConfig) -> int:
    survey = load_survey(run_config.responses, run_config.metadata, MissingPolicy(mode=args.missing))
    if args.hidden is None and not survey.hidden_indices:
        raise SurveyValidationError("The survey declares no hidden subpopulation; pass --hidden <label>")
    target_label = args.hidden or survey.labels[survey.hidden_indices[0]]
    survey.index_of(target_label)

    subpopulation_filter = SubpopulationFilter.parse(run_config.filter)
    guard = DeltaGuard.parse(run_config.guard)
    survey = filter_subpopulations(survey, subpopulation_filter, referenced=[target_label])
    target = survey.index_of(target_label)

    source = resolve_degrees(run_config.degrees, survey)
    degrees = estimate_degrees(survey) if isinstance(source, str) else DegreeEstimates.from_true(source, survey)
    basic = scaleup_estimated_degrees(survey, degrees, target, loo=survey.is_known(target))

    fit = None if args.no_adjust else adjust(survey, degrees, target, guard)
    report = EstimateReport(
        target=target_label,
        basic=basic,
        adjustment=fit.to_report(survey.with_hidden(target) if survey.is_known(target) else survey) if fit else None,
        degrees_source=degrees.source,
        filter=subpopulation_filter.describe(),
        guard=guard.describe(),
        respondents=survey.n,
        dropped_respondents=survey.dropped_respondents,
    )
    out = resolve_output_dir(run_config.out)
    path = out / ESTIMATE_FILE
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")

    if args.all_ratios:
        ratios = estimate_all_degree_ratios(survey, degrees, guard).to_report(survey)
        (out / RATIOS_FILE).write_text(ratios.model_dump_json(indent=2), encoding="utf-8")
        for row in ratios.subpopulations:
            delta = f"{row.delta_hat:.4f}" if row.delta_hat is not None else "n/a"
            print(f"  {row.label}: delta_hat={delta}")

    if fit is None:
        print(f"estimate: {target_label} basic={basic.estimate:.1f} -> {path}")
        return 0
    summary = report.adjustment
    print(
        f"estimate: {target_label} basic={basic.estimate:.1f} adjusted={summary.adjusted:.1f} "
        f"delta_hat={summary.delta_hat if summary.delta_hat is not None else 'n/a'} "
        f"gamma0={summary.gamma0:.4g} gamma1={summary.gamma1:.4g} status={summary.status} -> {path}"
    )
    if fit.status == "guarded":
        raise GuardError(f"Degree ratio for '{target_label}' is undefined: {'; '.join(fit.diagnostics)}")
    return 0
