import argparse
import logging

from scaleup.commands.common import SIMULATION_KINDS, simulate_world
from scaleup.config import resolve_output_dir
from scaleup.models import RunConfig
from scaleup.services.simulators import write_world

logger = logging.getLogger(__name__)


def register(subparsers, parents):
    parser = subparsers.add_parser(
        "simulate",
        parents=parents,
        help="Write a simulated ARD world and its truth sidecar",
    )
    parser.add_argument("--kind", choices=SIMULATION_KINDS, default="binomial", help="Simulator")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, run_config: RunConfig) -> int:
    world = simulate_world(args.kind, run_config.config_path, run_config.seed, run_config.threads)
    responses_path, metadata_path, truth_path = write_world(world, resolve_output_dir(run_config.out))
    survey = world.survey
    print(
        f"simulate: kind={args.kind} respondents={survey.n} subpopulations={survey.K} "
        f"seed={world.seed} -> {responses_path}, {metadata_path}, {truth_path}"
    )
    return 0
