"""
Pydantic Models for medboot

Configuration, result and report schemas shared by the library, the CLI
and the simulation runner. Unknown keys are rejected everywhere.
"""

from typing import Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SCHEMA_VERSION = "medboot/1"

METHOD_TAGS = (
    "poc-ab", "poc-b", "poc-sobel",
    "js-ab", "js-b", "js-maxp",
    "joint-ab", "joint-b",
    "glm1-ab", "glm1-b", "glm2-ab", "glm2-b",
)

SINGLE_MEDIATOR_METHODS = ("poc-ab", "poc-b", "poc-sobel", "js-ab", "js-b", "js-maxp")

MIXTURE_PRESETS = {
    "equal": (1 / 3, 1 / 3, 1 / 3),
    "moderate": (0.2, 0.2, 0.6),
    "sparse": (0.05, 0.05, 0.9),
}


class BootstrapConfig(BaseModel):
    """Bootstrap engine settings"""
    model_config = ConfigDict(extra='forbid')

    b: int = Field(500, ge=1, description="Number of bootstrap replicates B")
    seed: int = Field(20240101, ge=0, lt=2 ** 64, description="64-bit master seed")
    scheme: Literal["pairs", "projected"] = Field("pairs", description="Resampling scheme")
    workers: Optional[int] = Field(None, ge=1, description="Advisory thread count")


class AbConfig(BaseModel):
    """Adaptive bootstrap test settings"""
    model_config = ConfigDict(extra='forbid')

    lam: float = Field(2.0, ge=0, description="Tuning constant; lambda_n = lam*sqrt(n)/log(n)")
    lam_alpha: Optional[float] = Field(None, ge=0, description="Override of lam for the alpha indicator")
    lam_beta: Optional[float] = Field(None, ge=0, description="Override of lam for the beta indicator")
    b_alpha: Union[float, List[float]] = Field(0.0, description="Local parameter(s) for alpha")
    b_beta: Union[float, List[float]] = Field(0.0, description="Local parameter(s) for beta")
    bootstrap: BootstrapConfig = Field(default_factory=BootstrapConfig)
    omega_grid: List[float] = Field(default_factory=lambda: [0.01, 0.05, 0.1])

    @field_validator("omega_grid")
    @classmethod
    def check_omega_grid(cls, value: List[float]) -> List[float]:
        if not value:
            raise ValueError("omega_grid must not be empty")
        if any(not 0 < w < 1 for w in value):
            raise ValueError("omega_grid values must lie in (0, 1)")
        return sorted(value)

    def classical(self) -> "AbConfig":
        """Same settings with every threshold at zero (indicators off)"""
        return self.model_copy(update={"lam": 0.0, "lam_alpha": None, "lam_beta": None})

    def with_bootstrap(self, **updates) -> "AbConfig":
        return self.model_copy(update={"bootstrap": self.bootstrap.model_copy(update=updates)})


class NieQuery(BaseModel):
    """Exposure contrast and covariate row for a conditional NIE"""
    model_config = ConfigDict(extra='forbid')

    s: float = Field(1.0, description="Exposure level s")
    s_star: float = Field(0.0, description="Reference exposure level s*")
    x: Optional[List[float]] = Field(
        None, description="Covariate row including the intercept slot; default (1, 0, ..., 0)"
    )

    @model_validator(mode="after")
    def check_contrast(self) -> "NieQuery":
        if self.s == self.s_star:
            raise ValueError("s and s_star must differ")
        return self


class TestResult(BaseModel):
    """Outcome of one mediation test"""
    __test__ = False
    model_config = ConfigDict(extra='forbid')

    method: str
    estimate: float = Field(..., description="Point estimate (e.g. alpha_hat * beta_hat)")
    statistic: float = Field(..., description="Observed statistic compared with the bootstrap draws")
    p_value: float = Field(..., gt=0, le=1)
    n: int
    indicator_rate: Optional[float] = Field(None, ge=0, le=1)
    decisions: Dict[str, bool] = Field(default_factory=dict)
    intervals: Dict[str, Tuple[float, float]] = Field(default_factory=dict)
    target: Optional[str] = None
    config: Optional[AbConfig] = None
    diagnostics: Dict[str, float] = Field(default_factory=dict)

    def to_record(self) -> Dict[str, Any]:
        """Flat row for CSV tables: scalars plus one reject@omega column per decision"""
        record = {
            "method": self.method,
            "target": self.target,
            "n": self.n,
            "estimate": self.estimate,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "indicator_rate": self.indicator_rate,
        }
        record.update({f"reject@{key}": value for key, value in self.decisions.items()})
        return record


class ScreeningInfo(BaseModel):
    """Bookkeeping for the two-step screening pipeline"""
    model_config = ConfigDict(extra='forbid')

    screen_fraction: float
    fdr_q: float
    screened: Dict[str, float] = Field(default_factory=dict, description="Step-1 p-value per mediator")
    retained: List[str] = Field(default_factory=list)
    split_a: Optional[List[int]] = None
    split_b: Optional[List[int]] = None


class Report(BaseModel):
    """JSON report emitted by every CLI command"""
    model_config = ConfigDict(extra='forbid', populate_by_name=True)

    schema_version: str = Field(SCHEMA_VERSION, alias="schema")
    tool_version: str
    command: str
    results: List[TestResult] = Field(default_factory=list)
    q_values: Optional[List[float]] = None
    rejected: Optional[List[bool]] = None
    config: Optional[AbConfig] = None
    screening: Optional[ScreeningInfo] = None
    details: Dict[str, Any] = Field(default_factory=dict)
    wall_time: float = 0.0

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2)


class SimSpec(BaseModel):
    """Monte-Carlo study specification"""
    model_config = ConfigDict(extra='forbid')

    scenario: Literal["linear", "multi", "glm1", "glm2"] = "linear"
    n: int = Field(200, ge=8)
    n_mediators: int = Field(1, ge=1, description="J (multi only)")
    alpha_s: Union[float, List[float]] = 0.0
    beta_m: Union[float, List[float]] = 0.0
    case: Optional[int] = Field(None, ge=1, le=7, description="Multivariate null case preset")

    # Nuisance parameters; None takes the scenario default
    alpha_i: Optional[float] = None
    alpha_x: Optional[List[float]] = None
    beta_i: Optional[float] = None
    beta_x: Optional[List[float]] = None
    tau_s: Optional[float] = None
    sigma_m: Optional[float] = Field(None, ge=0)
    sigma_y: Optional[float] = Field(None, ge=0)
    x1_sd: Optional[float] = Field(None, ge=0)

    null_mode: Literal["fixed", "mixture"] = "fixed"
    mixture_probs: Union[Literal["equal", "moderate", "sparse"], List[float]] = "equal"

    reps: int = Field(500, ge=1)
    methods: List[str] = Field(default_factory=lambda: ["poc-ab", "poc-b", "poc-sobel"])
    ab_config: AbConfig = Field(default_factory=AbConfig)
    method_configs: Dict[str, AbConfig] = Field(default_factory=dict)
    query: NieQuery = Field(default_factory=NieQuery)
    seed: int = Field(20240101, ge=0, lt=2 ** 64)
    workers: Optional[int] = Field(None, ge=1)

    # Power study grids
    signal_grid: Optional[List[float]] = None
    ratio_grid: Optional[List[float]] = None
    product: Optional[float] = None

    @field_validator("methods")
    @classmethod
    def check_methods(cls, value: List[str]) -> List[str]:
        unknown = [m for m in value if m not in METHOD_TAGS]
        if unknown:
            raise ValueError(f"Unknown method tags: {unknown}")
        if not value:
            raise ValueError("methods must not be empty")
        return value

    @field_validator("mixture_probs")
    @classmethod
    def check_mixture_probs(cls, value):
        probs = MIXTURE_PRESETS[value] if isinstance(value, str) else value
        if len(probs) != 3 or any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError("mixture_probs must be three non-negative values summing to 1")
        return value

    @model_validator(mode="after")
    def check_method_configs(self) -> "SimSpec":
        unknown = [m for m in self.method_configs if m not in self.methods]
        if unknown:
            raise ValueError(f"method_configs given for methods not in the study: {unknown}")
        return self

    def mixture_probabilities(self) -> Tuple[float, float, float]:
        if isinstance(self.mixture_probs, str):
            return MIXTURE_PRESETS[self.mixture_probs]
        return tuple(self.mixture_probs)

    def config_for(self, method: str) -> AbConfig:
        return self.method_configs.get(method, self.ab_config)
