import json

import numpy as np
import pandas as pd
import pytest

from scaleup.models import BinomialSimConfig
from scaleup.services.simulators import simulate_binomial
from scaleup.services.survey import ArdSurvey

NAMES = [
    "michael", "christina", "christopher", "jacqueline", "james", "jennifer",
    "anthony", "kimberly", "robert", "stephanie", "david", "nicole",
]
OTHERS = [
    "twin", "diabetes", "priest", "postal_worker", "gun_death", "new_birth", "adoption",
    "widow", "dialysis", "pilot", "jaycees", "native_american", "suicide", "auto_accident",
    "opened_business", "midwife", "kidney_donor",
]
HIDDEN = ["homeless", "prisoner", "hiv_positive"]
FIXTURE_ROWS = 574
FIXTURE_ONE_MISSING = 47
FIXTURE_TWO_MISSING = 6
FIXTURE_POPULATION = 280_000_000


def make_survey(responses, known_sizes, total_population=1000, hidden=(), labels=None) -> ArdSurvey:
    responses = np.asarray(responses)
    if labels is None:
        labels = tuple(f"s{k}" for k in range(responses.shape[1]))
    return ArdSurvey(
        responses=responses,
        labels=tuple(labels),
        known_sizes=dict(known_sizes),
        total_population=total_population,
        hidden_indices=tuple(hidden),
    )


@pytest.fixture
def survey_factory():
    return make_survey


@pytest.fixture
def small_world():
    """A degree-biased binomial world small enough for per-test use."""
    sim = BinomialSimConfig(
        respondents=3000,
        subpopulations=12,
        total_population=1_000_000,
        size_bounds=(5_000, 50_000),
        degree_bounds=(10, 500),
    )
    return simulate_binomial(sim, seed=11)


def write_mccarty_like(directory):
    """574 respondents x 32 subpopulations; 47 rows miss one cell and 6 rows miss two."""
    rng = np.random.default_rng(1998)
    labels = NAMES + OTHERS + HIDDEN
    sizes = rng.integers(300_000, 5_000_000, size=len(labels))
    degrees = rng.lognormal(mean=np.log(600), sigma=0.5, size=FIXTURE_ROWS)
    counts = rng.poisson(degrees[:, None] * sizes[None, :] / FIXTURE_POPULATION)
    cells = pd.DataFrame(counts.astype(str), columns=labels)

    rows = rng.choice(FIXTURE_ROWS, size=FIXTURE_ONE_MISSING + FIXTURE_TWO_MISSING, replace=False)
    for position, row in enumerate(rows):
        width = 1 if position < FIXTURE_ONE_MISSING else 2
        for column in rng.choice(len(labels), size=width, replace=False):
            cells.iat[row, column] = "NA" if position % 2 else ""

    responses_path = directory / "responses.csv"
    metadata_path = directory / "metadata.json"
    cells.to_csv(responses_path, index=False)
    metadata = {
        "total_population": FIXTURE_POPULATION,
        "known_sizes": {label: int(size) for label, size in zip(labels, sizes) if label not in HIDDEN},
        "hidden": HIDDEN,
        "groups": {"names": NAMES},
    }
    metadata_path.write_text(json.dumps(metadata, indent=2), encoding="utf-8")
    return responses_path, metadata_path


@pytest.fixture
def mccarty_files(tmp_path):
    return write_mccarty_like(tmp_path)


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def write_files(tmp_path):
    """Write a responses CSV and metadata dict; returns both paths."""
    def _write(csv_text, metadata):
        responses = write_csv(tmp_path / "responses.csv", csv_text)
        meta = tmp_path / "metadata.json"
        meta.write_text(json.dumps(metadata), encoding="utf-8")
        return responses, meta
    return _write
