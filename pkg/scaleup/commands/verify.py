import argparse
import logging

from scaleup.config import resolve_output_dir
from scaleup.models import RunConfig
from scaleup.services.oracles import SMALL_SAMPLE, run_oracle_suite

logger = logging.getLogger(__name__)

VERIFY_FILE = "verify.json"


def register(subparsers, parents):
    parser = subparsers.add_parser(
        "verify",
        parents=parents,
        help="Check the estimators against the closed-form bias results",
    )
    parser.add_argument("--replicates", type=int, default=2000, help="Monte Carlo replicates per check")
    parser.add_argument(
        "--sample-size",
        type=int,
        default=600,
        help=f"Respondents per replicate; below {SMALL_SAMPLE} tolerances are widened",
    )
    parser.add_argument("--z", type=float, default=2.0, help="Standard errors allowed for the sampling-bias checks")
    parser.add_argument("--z-binomial", type=float, default=3.0, help="Standard errors allowed for the binomial check")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace, run_config: RunConfig) -> int:
    report = run_oracle_suite(
        seed=run_config.seed,
        threads=run_config.threads,
        replicates=args.replicates,
        sample_size=args.sample_size,
        z_sampling=args.z,
        z_binomial=args.z_binomial,
    )
    path = resolve_output_dir(run_config.out) / VERIFY_FILE
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    for check in report.checks:
        mark = "PASS" if check.passed else "FAIL"
        print(
            f"{mark} {check.name}: expected={check.expected:.6g} observed={check.observed:.6g} "
            f"tolerance={check.tolerance:.3g} ({check.detail})"
        )
    failed = sum(not check.passed for check in report.checks)
    print(f"verify: {len(report.checks) - failed}/{len(report.checks)} checks passed -> {path}")
    return 0 if report.passed else 1
