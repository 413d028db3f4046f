import re
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

FLOAT_TEXT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
INIT_PATTERN = re.compile(rf"^(index|random|const:{FLOAT_TEXT}|file:.+)$")
# seeds feed numpy SeedSequence words
SEED_LIMIT = 2**64


def _check_batch_seeds(seed: int, runs: int) -> None:
    """Run i of a batch uses seed + i"""
    if seed + runs - 1 >= SEED_LIMIT:
        raise ValueError(f"seed + runs - 1 must stay below 2**64 (seed={seed}, runs={runs})")


class DelayKind(str, Enum):
    ZERO = "zero"
    CONSTANT = "constant"
    UNIFORM = "uniform"
    TRACE = "trace"

    @classmethod
    def _missing_(cls, value):
        if value == "uniform_iid":
            return cls.UNIFORM
        return None


class DelaySpec(BaseModel):
    """
    Delay process description. Edge keys are 0-based (receiver, sender);
    trace keys are (receiver, sender, send_time).
    """

    kind: DelayKind = DelayKind.ZERO
    tau_bar: int = Field(default=0, ge=0)
    per_link_bounds: Optional[Dict[Tuple[int, int], int]] = None
    seed: int = Field(default=0, ge=0, lt=SEED_LIMIT)
    trace: Optional[Dict[Tuple[int, int, int], int]] = None


class ScenarioConfig(BaseModel):
    graph: Optional[str] = None
    delay_kind: DelayKind = DelayKind.UNIFORM
    tau_bar: int = Field(default=0, ge=0)
    seed: int = Field(default=0, ge=0, lt=SEED_LIMIT)
    gamma: float = 0.1
    init: str = "index"
    iters: int = Field(default=300, ge=0)
    runs: int = Field(default=100, ge=1)
    out: Optional[str] = None
    force_gamma: bool = False
    trace: Optional[str] = None

    @field_validator("init")
    @classmethod
    def check_init(cls, value: str) -> str:
        if not INIT_PATTERN.match(value):
            raise ValueError("init must be one of index, random, const:<v>, file:<path>")
        return value

    @model_validator(mode="after")
    def check_seed_range(self) -> "ScenarioConfig":
        _check_batch_seeds(self.seed, self.runs)
        return self

    @classmethod
    def merged(cls, file_values: Optional[Dict[str, Any]] = None, **overrides: Any) -> "ScenarioConfig":
        """Scenario-file values first, then any non-None overrides (CLI flags win)"""
        data: Dict[str, Any] = dict(file_values or {})
        data.update({key: value for key, value in overrides.items() if value is not None})
        return cls.model_validate(data)

    def delay_spec(self, seed: Optional[int] = None, trace: Optional[dict] = None) -> DelaySpec:
        return DelaySpec(
            kind=self.delay_kind,
            tau_bar=self.tau_bar,
            seed=self.seed if seed is None else seed,
            trace=trace,
        )


class SpectrumSummary(BaseModel):
    moduli: List[float]
    gap: float


class SweepRow(BaseModel):
    value: float
    mean_gap: float


class SweepTable(BaseModel):
    parameter: str  # "gamma" or "tau_bar"
    rows: List[SweepRow] = []


class GraphInfo(BaseModel):
    n: int
    m: int
    in_degrees: List[int]
    out_degrees: List[int]
    strongly_connected: bool
    min_push_weight: float


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class CheckReport(BaseModel):
    passed: bool
    results: List[CheckResult] = []


class GraphUploadResponse(BaseModel):
    graph_id: str
    message: str
    info: GraphInfo


class RunSummary(BaseModel):
    graph_id: str
    iterations: int
    average: float
    final_x: List[float]
    final_s: List[float]
    final_error: float
    converged_at: Optional[int] = None
    error_curve: List[float] = []


class MonteCarloSummary(BaseModel):
    graph_id: str
    runs: int
    final_error: float
    mean_error: List[float] = []


class ExperimentRequest(BaseModel):
    graph_id: str
    delay_kind: DelayKind = DelayKind.UNIFORM
    tau_bar: int = Field(default=0, ge=0)
    seed: int = Field(default=0, ge=0, lt=SEED_LIMIT)
    gamma: float = 0.1
    # no file: mode over HTTP
    init: str = Field(default="index", pattern=rf"^(index|random|const:{FLOAT_TEXT})$")
    iters: int = Field(default=300, ge=0)
    runs: int = Field(default=100, ge=1)
    force_gamma: bool = False

    @model_validator(mode="after")
    def check_seed_range(self) -> "ExperimentRequest":
        _check_batch_seeds(self.seed, self.runs)
        return self

    def to_config(self) -> ScenarioConfig:
        return ScenarioConfig(**self.model_dump(exclude={"graph_id"}))


class GammaSweepRequest(BaseModel):
    graph_id: str
    tau_bar: int = Field(default=0, ge=0)
    gammas: List[float]
    samples: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0, lt=SEED_LIMIT)


class DelaySweepRequest(BaseModel):
    graph_id: str
    gamma: float = 0.1
    tau_bars: List[int] = list(range(11))
    samples: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0, lt=SEED_LIMIT)


class HealthResponse(BaseModel):
    status: str
    timestamp: str
    version: str
