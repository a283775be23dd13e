import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np

from scaleup import config
from scaleup.errors import SurveyValidationError
from scaleup.models import BiasProfile, BinomialSimConfig, SbmConfig
from scaleup.services.parallel import (
    STREAM_BLOCKS,
    STREAM_DEGREES,
    STREAM_RESPONSES,
    STREAM_SIZES,
    map_ordered,
    substream,
)
from scaleup.services.survey import ArdSurvey, write_survey

logger = logging.getLogger(__name__)

TRUTH_FILE = "truth.json"
# Rows of a diagonal SBM block sampled per draw; fixed so the stream layout never changes.
BLOCK_ROW_CHUNK = 2048
# Round-off allowance when checking binomial probabilities at the edge of the admissible range.
PROBABILITY_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class SimulatedWorld:
    """A synthetic survey with every size known, plus the ground truth that generated it."""
    survey: ArdSurvey
    degrees: np.ndarray
    kind: Literal["binomial", "sbm"]
    seed: int
    profile: Optional[BiasProfile] = None
    block_edges: Optional[np.ndarray] = None
    group_of: Optional[np.ndarray] = None
    settings: Optional[dict] = None

    def truth(self) -> dict:
        payload = {
            "kind": self.kind,
            "seed": self.seed,
            "true_degrees": self.degrees.tolist(),
            "settings": self.settings or {},
        }
        if self.profile is not None:
            payload.update({"a": self.profile.a, "c": list(self.profile.c), "p": list(self.profile.exponents)})
        if self.block_edges is not None:
            payload["block_edges"] = self.block_edges.tolist()
        return payload


def centered_power(degrees, exponent: float) -> np.ndarray:
    """g(d) = d**p - mean(d**p)."""
    powered = np.asarray(degrees, dtype=float) ** exponent
    return powered - powered.mean()


def bias_multiplier(degrees, profile: BiasProfile, k: int) -> np.ndarray:
    """f_k(d_i) = a + g_k(d_i) * c_k."""
    return profile.a + centered_power(degrees, profile.exponents[k]) * profile.c[k]


def admissible_c_range(g: np.ndarray, a: float, max_share: float) -> Tuple[float, float]:
    """
    Interval of c keeping share * (a + g_i * c) inside [0, 1] for every respondent.

    `max_share` is the largest N_k / N the interval must serve.
    """
    ceiling = 1.0 / max_share
    if not 0 <= a <= ceiling:
        raise SurveyValidationError(f"a = {a} already gives probabilities outside [0, 1]")
    positive = g > 0
    negative = g < 0
    if not positive.any() or not negative.any():
        raise SurveyValidationError("Degenerate degree distribution: g(d) has no spread, so c is unbounded")
    # a + g c >= 0 and a + g c <= ceiling, solved for c on each sign of g
    lower = max(np.max(-a / g[positive]), np.max((ceiling - a) / g[negative]))
    upper = min(np.min((ceiling - a) / g[positive]), np.min(-a / g[negative]))
    if lower > upper:
        raise SurveyValidationError("No admissible range of c keeps every probability inside [0, 1]")
    return float(lower), float(upper)


def _assignment_order(sim: BinomialSimConfig, members: List[int], g: np.ndarray, degrees: np.ndarray, sizes: np.ndarray) -> List[int]:
    """Members in the order that receives ascending c values."""
    if sim.c_order == "index":
        return members
    # delta_k - 1 = c_k * sum(d g) / sum(d); its sign decides which end of the range shrinks delta
    by_size = sorted(members, key=lambda k: (-int(sizes[k]), k))
    return by_size if float(np.dot(degrees, g)) >= 0 else by_size[::-1]


def _spaced_c(sim: BinomialSimConfig, degrees: np.ndarray, sizes: np.ndarray) -> List[float]:
    """
    Evenly spaced c_k within each exponent group's admissible range.

    With c_order="size" the degree ratio falls as the subpopulation grows, so the
    size-weighted mean ratio in the estimated-degree denominator sits below one.
    """
    c = [0.0] * sim.subpopulations
    groups: Dict[float, List[int]] = {}
    for k in range(sim.subpopulations):
        groups.setdefault(sim.exponent_for(k), []).append(k)
    for exponent, members in groups.items():
        g = centered_power(degrees, exponent)
        share = float(sizes[members].max()) / sim.total_population
        lower, upper = admissible_c_range(g, sim.a, share)
        if sim.c_range == "symmetric":
            bound = min(-lower, upper)
            if bound < 0:
                raise SurveyValidationError("Admissible range of c does not contain 0; use c_range='full'")
            lower, upper = -bound, bound
        ordered = _assignment_order(sim, members, g, degrees, sizes)
        for k, value in zip(ordered, np.linspace(lower, upper, len(members))):
            c[k] = float(value)
        logger.debug(f"p={exponent}: c spaced over [{lower:.3g}, {upper:.3g}] for {len(members)} subpopulations")
    return c


def response_probabilities(degrees, sizes, total_population: int, profile: BiasProfile) -> np.ndarray:
    """K x n matrix of (N_k / N) * f_k(d_i); raises if any entry leaves [0, 1]."""
    sizes = np.asarray(sizes, dtype=float)
    probabilities = np.empty((len(sizes), len(degrees)))
    for k in range(len(sizes)):
        probabilities[k] = sizes[k] / total_population * bias_multiplier(degrees, profile, k)
    if probabilities.min() < -PROBABILITY_SLACK or probabilities.max() > 1 + PROBABILITY_SLACK:
        worst = int(np.argmax(np.maximum(-probabilities, probabilities - 1).max(axis=1)))
        raise SurveyValidationError(
            f"Subpopulation {worst} has binomial probabilities in "
            f"[{probabilities[worst].min():.4g}, {probabilities[worst].max():.4g}], outside [0, 1]"
        )
    return np.clip(probabilities, 0.0, 1.0)


def _labels(prefix: str, count: int) -> Tuple[str, ...]:
    width = len(str(count))
    return tuple(f"{prefix}{k + 1:0{width}d}" for k in range(count))


def simulate_binomial(sim: BinomialSimConfig, seed: Optional[int] = None, threads: int = 1) -> SimulatedWorld:
    """
    ARD from y_ik ~ Binomial(d_i, N_k / N * f_k(d_i)).

    Sizes and degrees are uniform draws rounded to integers; degrees are shared by every
    subpopulation. Each subpopulation's responses come from its own seeded substream.
    """
    seed = seed if seed is not None else (sim.seed if sim.seed is not None else config.DEFAULT_SEED)
    K, n = sim.subpopulations, sim.respondents
    sizes = np.rint(substream(seed, STREAM_SIZES).uniform(*sim.size_bounds, size=K)).astype(np.int64)
    degrees = np.rint(substream(seed, STREAM_DEGREES).uniform(*sim.degree_bounds, size=n)).astype(np.int64)
    if degrees.min() < 1:
        raise SurveyValidationError("Degree bounds produce zero degrees; raise the lower bound")
    sizes = np.clip(sizes, 1, sim.total_population)

    c = list(sim.c) if sim.c is not None else _spaced_c(sim, degrees, sizes)
    profile = BiasProfile(a=sim.a, exponents=tuple(sim.exponent_for(k) for k in range(K)), c=tuple(c))
    probabilities = response_probabilities(degrees, sizes, sim.total_population, profile)

    def draw(k: int) -> np.ndarray:
        return substream(seed, STREAM_RESPONSES, k).binomial(degrees, probabilities[k])

    columns = map_ordered(draw, range(K), threads)
    survey = ArdSurvey(
        responses=np.column_stack(columns),
        labels=_labels("sub", K),
        known_sizes={k: int(size) for k, size in enumerate(sizes)},
        total_population=sim.total_population,
        hidden_indices=(),
    )
    logger.info(f"Simulated binomial world: n={n}, K={K}, seed={seed}")
    return SimulatedWorld(
        survey=survey,
        degrees=degrees,
        kind="binomial",
        seed=seed,
        profile=profile,
        settings=sim.model_dump(mode="json"),
    )


def varying_exponent_config(**overrides) -> BinomialSimConfig:
    """The binomial setup with p cycling over (-2, -1, 1, 2) across subpopulations."""
    return BinomialSimConfig(**{"exponents": config.VARYING_EXPONENTS, **overrides})


def _sample_block(seed: int, a: int, b: int, rows: int, cols: int, prob: float):
    """
    Neighbor counts for one block of the adjacency matrix.

    Diagonal blocks keep only the strict upper triangle so the graph is simple and
    undirected; returns (row counts, column counts, edge count).
    """
    rng = substream(seed, STREAM_BLOCKS, a, b)
    row_counts = np.zeros(rows, dtype=np.int64)
    col_counts = np.zeros(cols, dtype=np.int64)
    for start in range(0, rows, BLOCK_ROW_CHUNK):
        stop = min(start + BLOCK_ROW_CHUNK, rows)
        edges = rng.random((stop - start, cols)) < prob
        if a == b:
            edges = np.triu(edges, k=start + 1)
        row_counts[start:stop] += edges.sum(axis=1)
        col_counts += edges.sum(axis=0)
    if a == b:
        row_counts += col_counts
        col_counts = row_counts
    return row_counts, col_counts, int(row_counts.sum() // 2 if a == b else row_counts.sum())


def simulate_sbm(sim: SbmConfig, seed: Optional[int] = None, threads: int = 1) -> SimulatedWorld:
    """
    ARD read off a stochastic block model graph.

    y_ik is the number of node i's neighbors in group k and d_i its degree; every node is
    a respondent and every group size is known.
    """
    seed = seed if seed is not None else (sim.seed if sim.seed is not None else config.DEFAULT_SEED)
    sizes = np.asarray(sim.group_sizes, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    G = sim.groups
    blocks = [(a, b) for a in range(G) for b in range(a, G)]

    def sample(block):
        a, b = block
        prob = sim.within[a] if a == b else sim.between
        return _sample_block(seed, a, b, int(sizes[a]), int(sizes[b]), prob)

    counts = np.zeros((sim.nodes, G), dtype=np.int64)
    block_edges = np.zeros((G, G), dtype=np.int64)
    for (a, b), (row_counts, col_counts, edges) in zip(blocks, map_ordered(sample, blocks, threads)):
        counts[offsets[a]:offsets[a + 1], b] += row_counts
        if a != b:
            counts[offsets[b]:offsets[b + 1], a] += col_counts
        block_edges[a, b] = block_edges[b, a] = edges

    degrees = counts.sum(axis=1)
    survey = ArdSurvey(
        responses=counts,
        labels=_labels("group", G),
        known_sizes={g: int(size) for g, size in enumerate(sizes)},
        total_population=sim.nodes,
        hidden_indices=(),
    )
    logger.info(f"Simulated SBM world: {sim.nodes} nodes, {G} groups, {int(np.triu(block_edges).sum())} edges, seed={seed}")
    return SimulatedWorld(
        survey=survey,
        degrees=degrees,
        kind="sbm",
        seed=seed,
        block_edges=block_edges,
        group_of=np.repeat(np.arange(G), sizes),
        settings=sim.model_dump(mode="json"),
    )


def write_world(world: SimulatedWorld, directory) -> Tuple[Path, Path, Path]:
    """Write the survey (CSV + metadata JSON) and the truth sidecar."""
    directory = Path(directory)
    responses_path, metadata_path = write_survey(world.survey, directory)
    truth_path = directory / TRUTH_FILE
    truth_path.write_text(json.dumps(world.truth(), indent=2), encoding="utf-8")
    return responses_path, metadata_path, truth_path
