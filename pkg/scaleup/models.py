from typing import Dict, List, Literal, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, field_validator, model_validator

from scaleup import config
from scaleup.errors import SurveyValidationError


class MissingPolicy(BaseModel):
    """What to do with respondent rows that contain a missing cell."""
    model_config = ConfigDict(frozen=True)

    mode: Literal["drop-respondent", "reject"] = "drop-respondent"


class SurveyMetadata(BaseModel):
    total_population: PositiveInt
    known_sizes: Dict[str, PositiveInt]
    hidden: List[str] = Field(default_factory=list)
    groups: Dict[str, List[str]] = Field(default_factory=dict)


class SubpopulationFilter(BaseModel):
    """
    Include/exclude subpopulations by label.

    Labels starting with "@" name a group from the survey metadata (e.g. "@names").
    `include` restricts the known subpopulations; `exclude` removes any subpopulation.
    """
    model_config = ConfigDict(frozen=True)

    include: Optional[Tuple[str, ...]] = None
    exclude: Tuple[str, ...] = ()

    @classmethod
    def parse(cls, spec: Optional[str]) -> "SubpopulationFilter":
        """Parse `include=a,b;exclude=@names` style specs. Empty spec -> no-op filter."""
        if not spec or not spec.strip():
            return cls()
        include = None
        exclude: List[str] = []
        for clause in spec.split(";"):
            clause = clause.strip()
            if not clause:
                continue
            key, sep, value = clause.partition("=")
            labels = [label.strip() for label in value.split(",") if label.strip()]
            if not sep or key.strip() not in ("include", "exclude"):
                raise SurveyValidationError(f"Invalid filter clause '{clause}'. Use include=<labels> or exclude=<labels>.")
            if key.strip() == "include":
                include = (include or []) + labels
            else:
                exclude.extend(labels)
        return cls(include=tuple(include) if include is not None else None, exclude=tuple(exclude))

    def is_identity(self) -> bool:
        return self.include is None and not self.exclude

    def describe(self) -> str:
        parts = []
        if self.include is not None:
            parts.append("include=" + ",".join(self.include))
        if self.exclude:
            parts.append("exclude=" + ",".join(self.exclude))
        return ";".join(parts) or "all"


class DeltaGuard(BaseModel):
    """Behavior when the predicted inverse degree ratio is not positive."""
    model_config = ConfigDict(frozen=True)

    mode: Literal["fail", "clamp"] = "fail"
    lower: float = 0.1
    upper: float = 10.0

    @model_validator(mode="after")
    def check_bounds(self):
        if not (0 < self.lower < self.upper):
            raise ValueError(f"Guard bounds must satisfy 0 < lower < upper, got [{self.lower}, {self.upper}]")
        return self

    @classmethod
    def parse(cls, spec: Optional[str]) -> "DeltaGuard":
        """Parse `fail` or `clamp:<lower>,<upper>`."""
        spec = (spec or config.DEFAULT_GUARD).strip()
        if spec == "fail":
            return cls()
        if spec.startswith("clamp"):
            _, _, bounds = spec.partition(":")
            if not bounds:
                return cls(mode="clamp")
            try:
                lower, upper = (float(value) for value in bounds.split(","))
            except ValueError:
                raise SurveyValidationError(f"Invalid guard '{spec}'. Use clamp:<lower>,<upper>.")
            return cls(mode="clamp", lower=lower, upper=upper)
        raise SurveyValidationError(f"Invalid guard '{spec}'. Use 'fail' or 'clamp:<lower>,<upper>'.")

    def describe(self) -> str:
        return "fail" if self.mode == "fail" else f"clamp:{self.lower},{self.upper}"


class BiasProfile(BaseModel):
    """f_k(d) = a + g_k(d) * c_k with g_k(d) = d**p_k - mean(d**p_k)."""
    model_config = ConfigDict(frozen=True)

    a: float = 1.0
    exponents: Tuple[float, ...]
    c: Tuple[float, ...]

    @model_validator(mode="after")
    def check_shape(self):
        if self.a == 0:
            raise ValueError("Bias profile requires a != 0")
        if len(self.exponents) != len(self.c):
            raise ValueError("Bias profile needs one exponent and one c per subpopulation")
        return self


class BinomialSimConfig(BaseModel):
    respondents: int = config.BINOMIAL_RESPONDENTS
    subpopulations: int = config.BINOMIAL_SUBPOPULATIONS
    total_population: int = config.BINOMIAL_TOTAL_POPULATION
    size_bounds: Tuple[float, float] = config.BINOMIAL_SIZE_BOUNDS
    degree_bounds: Tuple[float, float] = config.BINOMIAL_DEGREE_BOUNDS
    # Cycled across subpopulations; (2.0,) is the shared-p model.
    exponents: Tuple[float, ...] = (config.BINOMIAL_EXPONENT,)
    a: float = 1.0
    # Explicit c_k; when omitted they are spaced evenly over the admissible range.
    c: Optional[Tuple[float, ...]] = None
    c_range: Literal["symmetric", "full"] = "symmetric"
    # "size": larger subpopulations get smaller degree ratios; "index": c increases with k.
    c_order: Literal["size", "index"] = "size"
    seed: Optional[int] = None

    @model_validator(mode="after")
    def check_config(self):
        if self.respondents < 2:
            raise ValueError("respondents must be >= 2")
        if self.subpopulations < 2:
            raise ValueError("subpopulations must be >= 2")
        if self.total_population < 1:
            raise ValueError("total_population must be positive")
        for name in ("size_bounds", "degree_bounds"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must be positive and ordered, got ({lo}, {hi})")
        if self.size_bounds[1] > self.total_population:
            raise ValueError("size_bounds upper limit exceeds total_population")
        if not self.exponents:
            raise ValueError("at least one exponent is required")
        if self.a == 0:
            raise ValueError("a must be nonzero")
        if self.c is not None and len(self.c) != self.subpopulations:
            raise ValueError(f"c has {len(self.c)} values for {self.subpopulations} subpopulations")
        return self

    def exponent_for(self, k: int) -> float:
        return self.exponents[k % len(self.exponents)]


class SbmConfig(BaseModel):
    nodes: int = config.SBM_NODES
    groups: int = config.SBM_GROUPS
    group_sizes: Optional[Tuple[int, ...]] = None
    within: Optional[Tuple[float, ...]] = None
    between: float = config.SBM_BETWEEN
    seed: Optional[int] = None

    @model_validator(mode="after")
    def fill_and_check(self):
        if self.groups < 2:
            raise ValueError("groups must be >= 2")
        if self.group_sizes is None:
            base, extra = divmod(self.nodes, self.groups)
            sizes = tuple(base + (1 if g < extra else 0) for g in range(self.groups))
            self.group_sizes = sizes
        if self.within is None:
            lo, hi = config.SBM_WITHIN_RANGE
            step = (hi - lo) / (self.groups - 1)
            self.within = tuple(round(lo + step * g, 12) for g in range(self.groups))
        if len(self.group_sizes) != self.groups or len(self.within) != self.groups:
            raise ValueError("group_sizes and within need one entry per group")
        if any(size < 1 for size in self.group_sizes):
            raise ValueError("group sizes must be positive")
        if sum(self.group_sizes) != self.nodes:
            raise ValueError(f"group sizes sum to {sum(self.group_sizes)}, expected {self.nodes}")
        for prob in (*self.within, self.between):
            if not (0.0 <= prob <= 1.0):
                raise ValueError(f"connectivity {prob} outside [0, 1]")
        return self

    @classmethod
    def ci_default(cls, seed: Optional[int] = None) -> "SbmConfig":
        return cls(nodes=config.SBM_CI_NODES, groups=config.SBM_CI_GROUPS, seed=seed)


class OlsFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    intercept: float
    slope: float
    residual_variance: float
    r_squared: float
    n: int


class SizeEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    label: str
    estimate: float
    variant: Literal["known-degree", "estimated-degree", "loo"]

    @field_validator("estimate")
    @classmethod
    def check_estimate(cls, value: float) -> float:
        if not value >= 0 or value == float("inf"):
            raise ValueError(f"size estimate must be finite and >= 0, got {value}")
        return value


class SubpopulationFit(BaseModel):
    label: str
    known_size: Optional[int] = None
    first_stage_slope: Optional[float] = None
    ratio: Optional[float] = None
    estimate: Optional[float] = None
    delta_hat: Optional[float] = None
    adjusted: Optional[float] = None
    diagnostic: Optional[str] = None


class FitReport(BaseModel):
    target: str
    status: Literal["adjusted", "clamped", "guarded"]
    estimate: float
    adjusted: float
    delta_hat: Optional[float] = None
    inverse_ratio: Optional[float] = None
    gamma0: float
    gamma1: float
    second_stage_r_squared: float
    second_stage_points: int
    subpopulations: List[SubpopulationFit]
    diagnostics: List[str] = Field(default_factory=list)


class SubpopulationResult(BaseModel):
    label: str
    known_size: int
    basic: Optional[float] = None
    adjusted: Optional[float] = None
    relative_error_basic: Optional[float] = None
    relative_error_adjusted: Optional[float] = None
    adjusted_better: Optional[bool] = None
    status: str = "adjusted"
    diagnostic: Optional[str] = None


class EvaluationAggregate(BaseModel):
    mape_basic: float
    mape_adjusted: float
    # None when the basic MAPE is 0; the reason is in `diagnostics`
    percent_reduction: Optional[float] = None
    evaluated: int
    failed: int
    guarded: int
    adjusted_better: int
    rmse_basic: Optional[float] = None
    rmse_adjusted: Optional[float] = None
    diagnostics: List[str] = Field(default_factory=list)


class EvaluationProvenance(BaseModel):
    filter: str
    degrees_source: Literal["estimated", "true"]
    guard: str
    seed: Optional[int] = None
    respondents: int
    dropped_respondents: int = 0


class EvaluationReport(BaseModel):
    subpopulations: List[SubpopulationResult]
    aggregate: EvaluationAggregate
    provenance: EvaluationProvenance


class OracleCheck(BaseModel):
    name: str
    expected: float
    observed: float
    tolerance: float
    passed: bool
    detail: str = ""


class VerifyReport(BaseModel):
    seed: int
    checks: List[OracleCheck]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


class RunConfig(BaseModel):
    subcommand: Literal["simulate", "estimate", "evaluate", "verify"]
    responses: Optional[str] = None
    metadata: Optional[str] = None
    out: str = config.DEFAULT_OUTPUT_DIR
    seed: int = config.DEFAULT_SEED
    threads: int = config.DEFAULT_THREADS
    filter: str = ""
    guard: str = config.DEFAULT_GUARD
    degrees: str = "estimated"
    config_path: Optional[str] = None

    @field_validator("threads")
    @classmethod
    def check_threads(cls, value: int) -> int:
        if value < 1:
            raise ValueError("threads must be >= 1")
        return value

    def summary_line(self) -> str:
        """The line every subcommand prints so the run can be reproduced."""
        fields = [f"{self.subcommand}", f"seed={self.seed}", f"threads={self.threads}"]
        for name in ("responses", "metadata", "config_path"):
            value = getattr(self, name)
            if value:
                fields.append(f"{name}={value}")
        if self.filter:
            fields.append(f"filter={self.filter}")
        fields.append(f"guard={self.guard}")
        fields.append(f"degrees={self.degrees}")
        fields.append(f"out={self.out}")
        return "config: " + " ".join(fields)


class EstimateReport(BaseModel):
    target: str
    basic: SizeEstimate
    adjustment: Optional[FitReport] = None
    degrees_source: Literal["estimated", "true"]
    filter: str
    guard: str
    respondents: int
    dropped_respondents: int = 0
