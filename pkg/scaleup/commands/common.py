import argparse
import json
from pathlib import Path
from typing import Optional, Type, TypeVar, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from scaleup import config
from scaleup.errors import SurveyValidationError
from scaleup.models import BinomialSimConfig, SbmConfig
from scaleup.services.simulators import (
    SimulatedWorld,
    simulate_binomial,
    simulate_sbm,
    varying_exponent_config,
)
from scaleup.services.survey import ArdSurvey, read_degree_file

ModelT = TypeVar("ModelT", bound=BaseModel)

SIMULATION_KINDS = ("binomial", "binomial-varp", "sbm")


def add_common_arguments(parser: argparse.ArgumentParser):
    """Flags accepted by every subcommand."""
    parser.add_argument("--seed", type=int, default=None, help=f"Master seed (default {config.DEFAULT_SEED})")
    parser.add_argument("--config", dest="config_path", default=None, help="Simulation config JSON")
    parser.add_argument("--out", default=config.DEFAULT_OUTPUT_DIR, help="Output directory")
    parser.add_argument("--filter", default="", help="Subpopulation filter, e.g. 'include=@names' or 'exclude=twin,diabetes'")
    parser.add_argument("--degrees", default="estimated", help="'estimated', 'true' (simulations) or 'true:<path>'")
    parser.add_argument("--guard", default=config.DEFAULT_GUARD, help="'fail' or 'clamp:<lower>,<upper>'")
    parser.add_argument("--threads", type=int, default=config.DEFAULT_THREADS, help="Worker threads")
    parser.add_argument(
        "--log-level",
        type=str.upper,
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        default=config.DEFAULT_LOG_LEVEL.upper(),
        help="Logging level",
    )


def add_survey_arguments(parser: argparse.ArgumentParser, required: bool):
    parser.add_argument("--responses", required=required, help="Responses CSV")
    parser.add_argument("--metadata", required=required, help="Metadata JSON")
    parser.add_argument(
        "--missing",
        choices=("drop-respondent", "reject"),
        default="drop-respondent",
        help="Policy for rows with missing cells",
    )


def require_file(path: Optional[str], what: str) -> Optional[Path]:
    if path is None:
        return None
    resolved = Path(path)
    if not resolved.is_file():
        raise SurveyValidationError(f"{what} not found: {resolved}")
    return resolved


def check_paths(args: argparse.Namespace):
    """Fail before any work starts if an input path is missing."""
    require_file(getattr(args, "responses", None), "Responses file")
    require_file(getattr(args, "metadata", None), "Metadata file")
    require_file(args.config_path, "Config file")
    if args.degrees.startswith("true:"):
        require_file(args.degrees.partition(":")[2], "Degree file")
    elif args.degrees not in ("estimated", "true"):
        raise SurveyValidationError(f"Invalid --degrees '{args.degrees}'. Use estimated, true or true:<path>.")


def _read_json_object(path: str) -> dict:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SurveyValidationError(f"{path} is not valid JSON: {e}")
    if not isinstance(payload, dict):
        raise SurveyValidationError(f"{path} must hold a JSON object")
    return payload


def read_model(path: Optional[str], model: Type[ModelT], **defaults) -> ModelT:
    """Validate a JSON config file against `model`; no file gives the defaults."""
    payload = _read_json_object(path) if path is not None else {}
    try:
        return model(**{**defaults, **payload})
    except ValidationError as e:
        raise SurveyValidationError(f"Invalid {model.__name__}: {e}")


def resolve_seed(seed: Optional[int], config_path: Optional[str]) -> int:
    """--seed, else the config file's "seed", else SCALEUP_SEED."""
    if seed is not None:
        return seed
    if config_path is not None:
        value = _read_json_object(config_path).get("seed")
        if value is not None:
            if isinstance(value, bool) or not isinstance(value, int):
                raise SurveyValidationError(f"{config_path}: seed must be an integer, got {value!r}")
            return value
    return config.DEFAULT_SEED


def simulate_world(kind: str, config_path: Optional[str], seed: int, threads: int) -> SimulatedWorld:
    if kind == "sbm":
        return simulate_sbm(read_model(config_path, SbmConfig), seed=seed, threads=threads)
    if kind == "binomial-varp":
        preset = varying_exponent_config()
        sim = read_model(config_path, BinomialSimConfig, exponents=preset.exponents)
        return simulate_binomial(sim, seed=seed, threads=threads)
    if kind == "binomial":
        return simulate_binomial(read_model(config_path, BinomialSimConfig), seed=seed, threads=threads)
    raise SurveyValidationError(f"Unknown simulation kind '{kind}'. Use one of {', '.join(SIMULATION_KINDS)}.")


def resolve_degrees(spec: str, survey: ArdSurvey, world: Optional[SimulatedWorld] = None) -> Union[str, np.ndarray]:
    """'estimated', or the true degree vector named by `spec`."""
    if spec == "estimated":
        return "estimated"
    if spec == "true":
        if world is None:
            raise SurveyValidationError("--degrees true needs a simulated world; use true:<path> for a survey")
        return world.degrees
    degrees = read_degree_file(spec.partition(":")[2])
    if degrees.shape[0] != survey.n:
        raise SurveyValidationError(f"Degree file has {degrees.shape[0]} entries for {survey.n} respondents")
    return degrees
