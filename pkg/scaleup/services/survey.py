import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError

from scaleup import config
from scaleup.errors import SurveyValidationError
from scaleup.models import MissingPolicy, SubpopulationFilter, SurveyMetadata

logger = logging.getLogger(__name__)

RESPONSES_FILE = "responses.csv"
METADATA_FILE = "metadata.json"
ID_COLUMN = "id"
INT64_MAX = int(np.iinfo(np.int64).max)


@dataclass(frozen=True, eq=False)
class ArdSurvey:
    """
    Aggregated relational data: an n x K matrix of "how many X's do you know" counts.

    Known subpopulations carry a size N_k; the rest are hidden. Simulated worlds may have
    every subpopulation known (empty hidden set); surveys used to estimate a hidden size
    must have at least one hidden column.
    """
    responses: np.ndarray
    labels: Tuple[str, ...]
    known_sizes: Dict[int, int]
    total_population: int
    hidden_indices: Tuple[int, ...]
    respondent_ids: Optional[Tuple[str, ...]] = None
    dropped_respondents: int = 0
    groups: Dict[str, Tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        responses = np.asarray(self.responses)
        if responses.ndim != 2:
            raise SurveyValidationError("responses must be a respondents x subpopulations matrix")
        if not np.issubdtype(responses.dtype, np.integer):
            if not np.all(np.isfinite(responses)) or not np.all(responses == np.round(responses)):
                raise SurveyValidationError("responses must be finite integers")
        responses = responses.astype(np.int64, copy=True)
        if (responses < 0).any():
            raise SurveyValidationError("responses must be nonnegative")
        responses.setflags(write=False)
        object.__setattr__(self, "responses", responses)

        n, K = responses.shape
        if n < 2:
            raise SurveyValidationError(f"at least 2 respondents are required, got {n}")
        if len(self.labels) != K:
            raise SurveyValidationError(f"{len(self.labels)} labels for {K} response columns")
        if len(set(self.labels)) != K:
            raise SurveyValidationError("subpopulation labels must be unique")
        if self.total_population < 1:
            raise SurveyValidationError("total population must be positive")
        known = set(self.known_sizes)
        hidden = set(self.hidden_indices)
        if known & hidden or (known | hidden) != set(range(K)):
            raise SurveyValidationError("known and hidden subpopulations must partition the columns")
        if not known:
            raise SurveyValidationError("at least one known subpopulation is required")
        for k, size in self.known_sizes.items():
            if size < 1 or size > self.total_population:
                raise SurveyValidationError(
                    f"known size of '{self.labels[k]}' must be in [1, {self.total_population}], got {size}"
                )
        if self.respondent_ids is not None and len(self.respondent_ids) != n:
            raise SurveyValidationError("one respondent id per row is required")
        object.__setattr__(self, "known_sizes", dict(sorted(self.known_sizes.items())))
        object.__setattr__(self, "hidden_indices", tuple(sorted(self.hidden_indices)))

    @property
    def n(self) -> int:
        return self.responses.shape[0]

    @property
    def K(self) -> int:
        return self.responses.shape[1]

    @property
    def L(self) -> int:
        return len(self.known_sizes)

    @property
    def known_indices(self) -> Tuple[int, ...]:
        return tuple(self.known_sizes)

    def is_known(self, k: int) -> bool:
        return k in self.known_sizes

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SurveyValidationError(f"Unknown subpopulation '{label}'")

    def column(self, k: int) -> np.ndarray:
        self._check_index(k)
        return self.responses[:, k]

    def known_size(self, k: int) -> int:
        if k not in self.known_sizes:
            raise SurveyValidationError(f"Subpopulation '{self.labels[k]}' has no known size")
        return self.known_sizes[k]

    def with_hidden(self, k: int) -> "ArdSurvey":
        """The same survey with known subpopulation k treated as hidden."""
        self.known_size(k)
        sizes = {j: size for j, size in self.known_sizes.items() if j != k}
        return replace(self, known_sizes=sizes, hidden_indices=self.hidden_indices + (k,))

    def take_rows(self, rows: Sequence[int]) -> "ArdSurvey":
        rows = np.asarray(rows)
        ids = tuple(self.respondent_ids[i] for i in rows) if self.respondent_ids is not None else None
        return replace(self, responses=self.responses[rows], respondent_ids=ids)

    def metadata(self) -> SurveyMetadata:
        return SurveyMetadata(
            total_population=self.total_population,
            known_sizes={self.labels[k]: size for k, size in self.known_sizes.items()},
            hidden=[self.labels[k] for k in self.hidden_indices],
            groups={name: list(labels) for name, labels in self.groups.items()},
        )

    def _check_index(self, k: int):
        if not 0 <= k < self.K:
            raise SurveyValidationError(f"Subpopulation index {k} out of range [0, {self.K})")


def _read_metadata(metadata_path: Path) -> SurveyMetadata:
    try:
        return SurveyMetadata.model_validate_json(metadata_path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise SurveyValidationError(f"Invalid metadata file {metadata_path}: {e}")


def _read_cells(responses_path: Path) -> pd.DataFrame:
    """Read the CSV as strings; the first row holds the labels."""
    try:
        frame = pd.read_csv(
            responses_path,
            header=None,
            dtype=str,
            na_filter=False,
            index_col=False,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        raise SurveyValidationError(f"Responses file {responses_path} is empty")
    except pd.errors.ParserError as e:
        raise SurveyValidationError(f"Responses file {responses_path} is not rectangular: {e}")
    # Short rows are padded with NaN by the parser.
    if frame.isna().any().any():
        row = int(np.flatnonzero(frame.isna().any(axis=1).to_numpy())[0])
        raise SurveyValidationError(f"Responses file {responses_path} is not rectangular (line {row + 1})")
    if len(frame) < 2:
        raise SurveyValidationError(f"Responses file {responses_path} has no respondent rows")
    return frame.apply(lambda column: column.str.strip())


def load_survey(responses_path, metadata_path, policy: MissingPolicy = MissingPolicy()) -> ArdSurvey:
    """
    Load and validate a survey from a responses CSV and a metadata JSON file.

    Missing cells ("" or "NA") either drop the whole respondent row or reject the file,
    depending on `policy`.
    """
    responses_path = Path(responses_path)
    metadata_path = Path(metadata_path)
    for path in (responses_path, metadata_path):
        if not path.is_file():
            raise SurveyValidationError(f"File not found: {path}")

    metadata = _read_metadata(metadata_path)
    frame = _read_cells(responses_path)
    labels = list(frame.iloc[0])
    cells = frame.iloc[1:].reset_index(drop=True)
    cells.columns = range(len(labels))

    respondent_ids = None
    if labels and labels[0].lower() == ID_COLUMN:
        respondent_ids = tuple(cells[0])
        cells = cells.drop(columns=0)
        cells.columns = range(len(labels) - 1)
        labels = labels[1:]
    if not labels or any(not label for label in labels):
        raise SurveyValidationError("Every response column needs a non-empty label")
    if len(set(labels)) != len(labels):
        raise SurveyValidationError("Duplicate subpopulation labels in header")

    missing = cells.isin(config.MISSING_TOKENS)
    is_integer = cells.apply(lambda column: column.str.fullmatch(r"[+-]?\d+")).fillna(False).astype(bool)
    bad = ~missing & ~is_integer
    if bad.any().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        raise SurveyValidationError(
            f"Non-integer response '{cells.iat[row, col]}' in row {row + 1}, column '{labels[col]}'"
        )
    oversized = cells.where(is_integer, "0").apply(lambda column: column.map(lambda cell: abs(int(cell)) > INT64_MAX))
    if oversized.any().any():
        row, col = np.argwhere(oversized.to_numpy())[0]
        raise SurveyValidationError(
            f"Response '{cells.iat[row, col]}' in row {row + 1}, column '{labels[col]}' is out of the 64-bit integer range"
        )
    values = cells.where(~missing).apply(pd.to_numeric)
    if (values < 0).any().any():
        row, col = np.argwhere((values < 0).to_numpy())[0]
        raise SurveyValidationError(
            f"Negative response {int(values.iat[row, col])} in row {row + 1}, column '{labels[col]}'"
        )

    incomplete = missing.any(axis=1).to_numpy()
    dropped = int(incomplete.sum())
    if dropped:
        if policy.mode == "reject":
            row, col = np.argwhere(missing.to_numpy())[0]
            raise SurveyValidationError(f"Missing response in row {row + 1}, column '{labels[col]}'")
        if dropped == len(cells):
            raise SurveyValidationError("Every respondent has a missing response; nothing left to analyze")
        logger.info(f"Dropped {dropped} of {len(cells)} respondents with missing responses")
        values = values[~incomplete]
        if respondent_ids is not None:
            respondent_ids = tuple(rid for rid, skip in zip(respondent_ids, incomplete) if not skip)

    index = {label: k for k, label in enumerate(labels)}
    declared = list(metadata.known_sizes) + list(metadata.hidden)
    for label in declared:
        if label not in index:
            raise SurveyValidationError(f"Metadata references unknown label '{label}'")
    if len(set(declared)) != len(declared):
        raise SurveyValidationError("A label is declared both known and hidden in metadata")
    undeclared = [label for label in labels if label not in set(declared)]
    if undeclared:
        raise SurveyValidationError(f"Columns not declared in metadata: {', '.join(undeclared)}")
    for name, members in metadata.groups.items():
        for label in members:
            if label not in index:
                raise SurveyValidationError(f"Group '{name}' references unknown label '{label}'")

    return ArdSurvey(
        responses=values.to_numpy(dtype=np.int64),
        labels=tuple(labels),
        known_sizes={index[label]: size for label, size in metadata.known_sizes.items()},
        total_population=metadata.total_population,
        hidden_indices=tuple(index[label] for label in metadata.hidden),
        respondent_ids=respondent_ids,
        dropped_respondents=dropped,
        groups={name: tuple(members) for name, members in metadata.groups.items()},
    )


def write_survey(survey: ArdSurvey, directory) -> Tuple[Path, Path]:
    """Serialize a survey to `responses.csv` + `metadata.json` in `directory`."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(survey.responses, columns=list(survey.labels))
    if survey.respondent_ids is not None:
        frame.insert(0, ID_COLUMN, list(survey.respondent_ids))
    responses_path = directory / RESPONSES_FILE
    metadata_path = directory / METADATA_FILE
    frame.to_csv(responses_path, index=False)
    metadata_path.write_text(survey.metadata().model_dump_json(indent=2), encoding="utf-8")
    return responses_path, metadata_path


def _expand_labels(survey: ArdSurvey, labels: Iterable[str]) -> set:
    expanded = set()
    for label in labels:
        if label.startswith("@"):
            name = label[1:]
            if name not in survey.groups:
                raise SurveyValidationError(f"Unknown subpopulation group '{name}'")
            expanded.update(survey.groups[name])
        else:
            survey.index_of(label)
            expanded.add(label)
    return expanded


def filter_subpopulations(
    survey: ArdSurvey,
    subpopulation_filter: SubpopulationFilter,
    referenced: Sequence[str] = (),
) -> ArdSurvey:
    """
    Keep the subpopulations selected by the filter and re-index every column-keyed field.

    `referenced` lists labels the caller still needs (e.g. the hidden target); removing
    any of them is an error, as is leaving fewer than 2 known subpopulations.
    """
    if subpopulation_filter.is_identity():
        return survey
    excluded = _expand_labels(survey, subpopulation_filter.exclude)
    included = (
        _expand_labels(survey, subpopulation_filter.include)
        if subpopulation_filter.include is not None
        else None
    )

    keep = []
    for k, label in enumerate(survey.labels):
        if label in excluded:
            continue
        if survey.is_known(k) and included is not None and label not in included:
            continue
        keep.append(k)

    kept_labels = {survey.labels[k] for k in keep}
    for label in referenced:
        if label not in kept_labels:
            raise SurveyValidationError(f"Filter removes subpopulation '{label}' which is still referenced")
    remap = {old: new for new, old in enumerate(keep)}
    known_sizes = {remap[k]: size for k, size in survey.known_sizes.items() if k in remap}
    if len(known_sizes) < 2:
        raise SurveyValidationError(
            f"Filter '{subpopulation_filter.describe()}' leaves {len(known_sizes)} known subpopulation(s); at least 2 are required"
        )
    groups = {
        name: tuple(label for label in members if label in kept_labels)
        for name, members in survey.groups.items()
    }
    logger.debug(f"Filter '{subpopulation_filter.describe()}' keeps {len(keep)} of {survey.K} subpopulations")
    return ArdSurvey(
        responses=survey.responses[:, keep],
        labels=tuple(survey.labels[k] for k in keep),
        known_sizes=known_sizes,
        total_population=survey.total_population,
        hidden_indices=tuple(remap[k] for k in survey.hidden_indices if k in remap),
        respondent_ids=survey.respondent_ids,
        dropped_respondents=survey.dropped_respondents,
        groups=groups,
    )


def read_degree_file(path) -> np.ndarray:
    """Read a true-degree vector from a truth sidecar (JSON) or a one-column CSV."""
    path = Path(path)
    if not path.is_file():
        raise SurveyValidationError(f"Degree file not found: {path}")
    if path.suffix.lower() == ".json":
        payload = json.loads(path.read_text(encoding="utf-8"))
        if "true_degrees" not in payload:
            raise SurveyValidationError(f"{path} has no 'true_degrees' entry")
        degrees = np.asarray(payload["true_degrees"], dtype=float)
    else:
        degrees = pd.read_csv(path, header=None).iloc[:, 0].to_numpy(dtype=float)
    if degrees.ndim != 1 or not np.all(np.isfinite(degrees)) or (degrees < 0).any():
        raise SurveyValidationError(f"{path} must hold finite nonnegative degrees")
    return degrees
