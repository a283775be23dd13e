import argparse
import logging

from scaleup.commands.common import SIMULATION_KINDS, add_survey_arguments, resolve_degrees, simulate_world
from scaleup.config import resolve_output_dir
from scaleup.errors import SurveyValidationError
from scaleup.models import DeltaGuard, MissingPolicy, RunConfig, SubpopulationFilter
from scaleup.services.evaluation import evaluate_loo, format_reduction, write_report
from scaleup.services.survey import load_survey

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser(
        "evaluate",
        parents=parents,
        help="Leave-one-out comparison of basic and adjusted estimates",
    )
    add_survey_arguments(parser, required=False)
    parser.add_argument("--kind", choices=SIMULATION_KINDS, default=None, help="Evaluate a freshly simulated world instead of a survey")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, run_config: RunConfig) -> int:
    subpopulation_filter = SubpopulationFilter.parse(run_config.filter)
    guard = DeltaGuard.parse(run_config.guard)
    world = None
    if args.kind is not None:
        if run_config.responses or run_config.metadata:
            raise SurveyValidationError("Pass either --kind or --responses/--metadata, not both")
        world = simulate_world(args.kind, run_config.config_path, run_config.seed, run_config.threads)
        survey = world.survey
    elif run_config.responses and run_config.metadata:
        survey = load_survey(run_config.responses, run_config.metadata, MissingPolicy(mode=args.missing))
    else:
        raise SurveyValidationError("evaluate needs --responses and --metadata, or --kind")

    report = evaluate_loo(
        survey,
        degrees_source=resolve_degrees(run_config.degrees, survey, world),
        subpopulation_filter=subpopulation_filter,
        guard=guard,
        threads=run_config.threads,
        seed=run_config.seed,
    )
    json_path, csv_path = write_report(report, resolve_output_dir(run_config.out))
    aggregate = report.aggregate
    print(
        f"evaluate: MAPE basic={aggregate.mape_basic:.2f} adjusted={aggregate.mape_adjusted:.2f} "
        f"reduction={format_reduction(aggregate.percent_reduction)} adjusted-better={aggregate.adjusted_better}/{aggregate.evaluated} "
        f"failed={aggregate.failed} guarded={aggregate.guarded} -> {json_path}, {csv_path}"
    )
    return 0
