import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from scaleup import config
from scaleup.commands import estimate, evaluate, simulate, verify
from scaleup.commands.common import add_common_arguments, check_paths, resolve_seed
from scaleup.errors import ScaleupError
from scaleup.models import RunConfig

logger = logging.getLogger(__name__)

COMMANDS = (simulate, estimate, evaluate, verify)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scaleup",
        description="Network scale-up size estimation with degree ratio adjustment",
    )
    common = argparse.ArgumentParser(add_help=False)
    add_common_arguments(common)
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for command in COMMANDS:
        command.register(subparsers, [common])
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        subcommand=args.subcommand,
        responses=getattr(args, "responses", None),
        metadata=getattr(args, "metadata", None),
        out=args.out,
        seed=resolve_seed(args.seed, args.config_path),
        threads=args.threads,
        filter=args.filter,
        guard=args.guard,
        degrees=args.degrees,
        config_path=args.config_path,
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    config.configure_logging(args.log_level)
    logger.debug(f"Configuration status: {config.get_config_status()}")
    try:
        check_paths(args)
        run_config = _run_config(args)
        print(run_config.summary_line())
        return args.handler(args, run_config)
    except ScaleupError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"error: invalid arguments: {e}", file=sys.stderr)
        return 2
    except Exception:
        logger.exception("Unhandled error")
        return 1


if __name__ == "__main__":
    sys.exit(main())
