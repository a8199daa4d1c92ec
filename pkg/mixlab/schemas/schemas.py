import math
from enum import Enum
from datetime import datetime
from typing import Dict, List, Literal, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

# --- Pydantic Schemas for Linear SEMs ---

class VariableDecl(BaseModel):
  model_config = ConfigDict(frozen=True)

  name: str = Field(min_length=1)
  kind: Literal["observed", "latent"]
  role: Optional[Literal["exposure", "outcome", "confounder", "noise-free"]] = None


class StructuralEdge(BaseModel):
  model_config = ConfigDict(frozen=True, populate_by_name=True)

  source: str = Field(alias="from")
  target: str = Field(alias="to")
  coefficient: float = Field(alias="coef")


class LinearSEM(BaseModel):
  """
  A DAG of observed/latent variables with path coefficients and exogenous noise variances.
  Serialized as {"variables": [...], "edges": [{"from", "to", "coef"}], "noise": {name: variance}}.
  """
  model_config = ConfigDict(frozen=True, populate_by_name=True)

  variables: List[VariableDecl]
  edges: List[StructuralEdge] = []
  noise_variance: Dict[str, float] = Field(alias="noise")
  offset: Dict[str, float] = {}

  # Set by sem_core.validate, together with the contents it was computed for
  _order: Optional[Tuple[str, ...]] = PrivateAttr(default=None)
  _structure: Optional[Tuple] = PrivateAttr(default=None)

  @property
  def names(self) -> List[str]:
    return [v.name for v in self.variables]

  @property
  def observed(self) -> List[str]:
    return [v.name for v in self.variables if v.kind == "observed"]

  def structure(self) -> Tuple:
    return (
      tuple((v.name, v.kind) for v in self.variables),
      tuple((e.source, e.target, e.coefficient) for e in self.edges),
      tuple(sorted(self.noise_variance.items())),
      tuple(sorted(self.offset.items())),
    )

  @property
  def topological_order(self) -> Optional[Tuple[str, ...]]:
    """None until validated, and again on any copy whose contents changed since."""
    if self._order is None or self._structure != self.structure():
      return None
    return self._order

  def parents(self, name: str) -> List[StructuralEdge]:
    return [e for e in self.edges if e.target == name]


class CovarianceInput(BaseModel):
  """JSON form of a covariance matrix: {"names": [...], "matrix": [[...]]}."""
  model_config = ConfigDict(frozen=True)

  names: List[str]
  matrix: List[List[float]]

  @model_validator(mode="after")
  def _square(self):
    p = len(self.names)
    if len(self.matrix) != p or any(len(row) != p for row in self.matrix):
      raise ValueError(f"matrix must be {p}x{p} to match names {self.names}")
    return self


# --- Pydantic Schemas for Scenarios ---

ScenarioKind = Literal["fig1a", "fig1b", "fig2a", "fig2b"]

# Accepted parameter names per scenario; products and their factors are interchangeable
SCENARIO_PARAMS = {
  "fig1a": {"b1", "b2", "rho", "noise_y"},
  "fig1b": {"c1", "c2", "c3", "c2c3", "rho", "noise_y"},
  "fig2a": {"rho", "c1", "c2", "c3", "c4", "c3c4", "c5", "c6", "c5c6", "noise_y"},
  "fig2b": {"c1", "c2", "c1c2", "c3", "c4"},
}


_PRODUCT_FACTORS = {
  ("fig1b", "c2c3"): ("c2", "c3"),
  ("fig2a", "rho"): ("c1", "c2"),
  ("fig2a", "c3c4"): ("c3", "c4"),
  ("fig2a", "c5c6"): ("c5", "c6"),
  ("fig2b", "c1c2"): ("c1", "c2"),
}


def _product(params: Dict[str, float], a: str, b: str, label: str, kind: str) -> float:
  product = a + b
  if product in params:
    if a in params or b in params:
      raise ValueError(f"{kind}: give either {product} or both {a} and {b}, not both forms")
    return params[product]
  if a in params and b in params:
    return params[a] * params[b]
  raise ValueError(f"{kind}: missing {label} (give {product} or both {a} and {b})")


class ScenarioSpec(BaseModel):
  model_config = ConfigDict(frozen=True)

  kind: ScenarioKind
  params: Dict[str, float]
  standardize_outcome: bool = True

  @field_validator("kind", mode="before")
  @classmethod
  def _normalize_kind(cls, value):
    if isinstance(value, str):
      value = value.strip().lower()
      # Fig 1c is Fig 1a with the noise terms drawn explicitly
      if value == "fig1c":
        return "fig1a"
    return value

  @model_validator(mode="after")
  def _check_params(self):
    kind, params = self.kind, self.params
    unknown = set(params) - SCENARIO_PARAMS[kind]
    if unknown:
      raise ValueError(f"{kind}: unknown parameters {sorted(unknown)}")
    for key, value in params.items():
      if not math.isfinite(value):
        raise ValueError(f"{kind}: parameter {key} must be finite, got {value}")

    if kind == "fig1a":
      missing = {"b1", "b2", "rho"} - set(params)
      if missing:
        raise ValueError(f"fig1a: missing parameters {sorted(missing)}")
    elif kind == "fig1b":
      if "c1" not in params or "rho" not in params:
        raise ValueError("fig1b: c1 and rho are required")
      _product(params, "c2", "c3", "c2c3", kind)
    elif kind == "fig2a":
      if "rho" in params and ("c1" in params or "c2" in params):
        raise ValueError("fig2a: give either rho or both c1 and c2, not both forms")
      if "rho" not in params:
        _product(params, "c1", "c2", "rho (=c1c2)", kind)
      _product(params, "c3", "c4", "c3c4", kind)
      _product(params, "c5", "c6", "c5c6", kind)
    elif kind == "fig2b":
      _product(params, "c1", "c2", "c1c2", kind)
      missing = {"c3", "c4"} - set(params)
      if missing:
        raise ValueError(f"fig2b: missing parameters {sorted(missing)}")

    if "noise_y" in params:
      if params["noise_y"] < 0:
        raise ValueError(f"{kind}: noise_y must be >= 0, got {params['noise_y']}")
      if self.standardize_outcome:
        raise ValueError(f"{kind}: noise_y only applies when standardize_outcome is false")

    rho = self.rho
    if not abs(rho) < 1:
      if kind == "fig2b":
        raise ValueError(f"fig2b: |c1c2 + c3*c4| must be < 1, got rho={rho}")
      raise ValueError(f"{kind}: |rho| must be < 1, got rho={rho}")
    return self

  @property
  def rho(self) -> float:
    params = self.params
    if self.kind == "fig2a" and "rho" not in params:
      return params["c1"] * params["c2"]
    if self.kind == "fig2b":
      return _product(params, "c1", "c2", "c1c2", "fig2b") + params["c3"] * params["c4"]
    return params["rho"]

  def with_param(self, name: str, value: float, standardize_outcome: Optional[bool] = None) -> "ScenarioSpec":
    params = dict(self.params)
    # Setting a product replaces its factors
    for factor in _PRODUCT_FACTORS.get((self.kind, name), ()):
      params.pop(factor, None)
    params[name] = value
    if standardize_outcome is None:
      standardize_outcome = self.standardize_outcome
    if standardize_outcome:
      params.pop("noise_y", None)
    return ScenarioSpec(kind=self.kind, params=params, standardize_outcome=standardize_outcome)


class OracleCoefficients(BaseModel):
  model_config = ConfigDict(frozen=True)

  crude_beta1: float
  crude_beta2: float
  adjusted_beta1: float
  adjusted_beta2: float
  rho: float
  # False when the adjusted values have no tabulated closed form (fig2b)
  tabulated: bool = True


class PsiOracle(BaseModel):
  model_config = ConfigDict(frozen=True)

  psi_true: float
  psi_expected: float
  psi_bias: float


# --- Pydantic Schemas for Data Generation ---

class GenMethod(str, Enum):
  METHOD1 = "m1"
  METHOD2 = "m2"
  HYBRID = "hybrid"


_METHOD_ALIASES = {"method1": "m1", "method2": "m2", "1": "m1", "2": "m2"}


def _normalize_method(value):
  if isinstance(value, str):
    value = value.strip().lower()
    return _METHOD_ALIASES.get(value, value)
  return value


class SimulateConfig(BaseModel):
  """
  A dataset request; also the provenance sidecar written next to every dataset.
  Exactly one source is set: a scenario, a raw LinearSEM, or a covariance matrix (method 2).
  """
  model_config = ConfigDict(frozen=True)

  scenario: Optional[ScenarioSpec] = None
  model: Optional[LinearSEM] = None
  covariance: Optional[CovarianceInput] = None
  method: GenMethod = GenMethod.METHOD1
  n: int = Field(default=1000, ge=1)
  seed: int = Field(default=0, ge=0, lt=2**64)
  # Hybrid only: observed variables drawn jointly. Defaults to role tags, then to
  # observed variables without observed ancestors.
  exposures: Optional[List[str]] = None

  @field_validator("method", mode="before")
  @classmethod
  def _method(cls, value):
    return _normalize_method(value)

  @model_validator(mode="after")
  def _one_source(self):
    sources = [s for s in (self.scenario, self.model, self.covariance) if s is not None]
    if len(sources) != 1:
      raise ValueError("give exactly one of scenario, model, covariance")
    if self.covariance is not None and self.method != GenMethod.METHOD2:
      raise ValueError("a covariance matrix can only be sampled with method m2")
    if self.exposures is not None and self.method != GenMethod.HYBRID:
      raise ValueError("exposures only apply to the hybrid method")
    return self


# --- Pydantic Schemas for Estimation ---

class ExposureEstimate(BaseModel):
  model_config = ConfigDict(frozen=True)

  name: str
  crude: float
  adjusted: float


class RegressionResult(BaseModel):
  model_config = ConfigDict(frozen=True)

  outcome: str
  exposures: List[ExposureEstimate]
  residual_variance: float
  n: int
  psi_hat: float
  # e.g. "exposures scored 0..3 by quantile" for quantile fits
  note: Optional[str] = None


# --- Pydantic Schemas for Experiments ---

ESTIMANDS = ("crude_beta1", "crude_beta2", "adjusted_beta1", "adjusted_beta2", "psi")
QUANTILE_ESTIMANDS = ("quantile_psi", "psi_gap")


class ExperimentConfig(BaseModel):
  model_config = ConfigDict(frozen=True)

  scenario: ScenarioSpec
  method: GenMethod = GenMethod.METHOD1
  n: int = Field(default=1000, ge=4)
  replicates: int = Field(default=1000, ge=1)
  seed: int = Field(default=0, ge=0, lt=2**64)
  # estimand -> parameter expression, e.g. {"adjusted_beta1": "b1", "psi": "b1+b2"}
  truth: Dict[str, str] = {}
  quantiles: Optional[int] = Field(default=None, ge=2)
  gate_sigma: float = Field(default=4.0, gt=0)

  @field_validator("method", mode="before")
  @classmethod
  def _method(cls, value):
    return _normalize_method(value)

  @field_validator("truth")
  @classmethod
  def _truth_keys(cls, value):
    unknown = set(value) - set(ESTIMANDS)
    if unknown:
      raise ValueError(f"truth names unknown estimands {sorted(unknown)}; choose from {list(ESTIMANDS)}")
    return value


class EstimandSummary(BaseModel):
  model_config = ConfigDict(frozen=True)

  estimand: str
  mean: float
  sd: Optional[float]
  mcse: Optional[float]
  truth: Optional[float] = None
  truth_source: Optional[str] = None
  bias: Optional[float] = None
  expected: Optional[float] = None
  expected_source: Optional[str] = None
  bias_vs_expected: Optional[float] = None
  gate_passed: Optional[bool] = None


class BiasReport(BaseModel):
  model_config = ConfigDict(frozen=True)

  scenario: ScenarioSpec
  method: GenMethod
  n: int
  replicates: int
  seed: int
  used_replicates: int
  excluded_replicates: int
  excluded_indices: List[int] = []
  sd_defined: bool
  outcome_variance: float
  outcome_noise_variance: float
  estimands: List[EstimandSummary]
  notes: List[str] = []

  def summary(self, estimand: str) -> EstimandSummary:
    for item in self.estimands:
      if item.estimand == estimand:
        return item
    raise KeyError(estimand)

  @property
  def gates_passed(self) -> bool:
    return all(item.gate_passed is not False for item in self.estimands)


# --- Pydantic Schemas for Sweeps ---

class SweepPolicy(str, Enum):
  FIX_CAUSAL = "fix_causal"
  FIX_CRUDE = "fix_crude"


class SweepConfig(BaseModel):
  model_config = ConfigDict(frozen=True)

  scenario: ScenarioSpec
  grid: List[float]
  policy: SweepPolicy = SweepPolicy.FIX_CAUSAL
  # defaults to the scenario's correlation-controlling parameter
  parameter: Optional[str] = None
  acknowledge_reversal: bool = False
  hold: Literal["outcome_variance", "noise_variance"] = "outcome_variance"
  fixed_crude: Optional[Tuple[float, float]] = None
  method: GenMethod = GenMethod.METHOD1
  n: int = Field(default=1000, ge=4)
  replicates: int = Field(default=1000, ge=0)
  seed: int = Field(default=0, ge=0, lt=2**64)
  truth: Dict[str, str] = {}

  @field_validator("method", mode="before")
  @classmethod
  def _method(cls, value):
    return _normalize_method(value)

  @field_validator("policy", mode="before")
  @classmethod
  def _policy(cls, value):
    if isinstance(value, str):
      return value.strip().lower().replace("-", "_").replace("fixcausal", "fix_causal").replace("fixcrude", "fix_crude")
    return value

  @field_validator("grid")
  @classmethod
  def _increasing(cls, value):
    if not value:
      raise ValueError("grid must not be empty")
    if any(b <= a for a, b in zip(value, value[1:])):
      raise ValueError(f"grid must be strictly increasing, got {value}")
    return value


class SweepPoint(BaseModel):
  model_config = ConfigDict(frozen=True)

  value: float
  scenario: ScenarioSpec
  oracle: OracleCoefficients
  outcome_noise_variance: float
  # Causal coefficients implied by holding the crude correlations fixed
  implied_causal: Optional[Dict[str, float]] = None
  report: Optional[BiasReport] = None


class SweepResult(BaseModel):
  model_config = ConfigDict(frozen=True)

  parameter: str
  policy: SweepPolicy
  grid: List[float]
  points: List[SweepPoint]
  monotonicity: Dict[str, str] = {}
  notes: List[str] = []


class CurveConfig(BaseModel):
  """Config for the amplification check and the psi bias curve."""
  model_config = ConfigDict(frozen=True)

  scenario: ScenarioSpec
  grid: List[float]
  method: GenMethod = GenMethod.METHOD1
  n: int = Field(default=1000, ge=4)
  replicates: int = Field(default=1000, ge=0)
  seed: int = Field(default=0, ge=0, lt=2**64)

  @field_validator("method", mode="before")
  @classmethod
  def _method(cls, value):
    return _normalize_method(value)

  @field_validator("grid")
  @classmethod
  def _increasing(cls, value):
    if not value:
      raise ValueError("grid must not be empty")
    if any(b <= a for a, b in zip(value, value[1:])):
      raise ValueError(f"grid must be strictly increasing, got {value}")
    return value


class AmplificationPoint(BaseModel):
  model_config = ConfigDict(frozen=True)

  rho: float
  exact_ratio: float
  empirical_ratio: Optional[float]
  mean_crude_beta1: Optional[float] = None
  mean_adjusted_beta1: Optional[float] = None


class AmplificationReport(BaseModel):
  model_config = ConfigDict(frozen=True)

  scenario: ScenarioSpec
  c1: float
  c2c3: float
  points: List[AmplificationPoint]


class EquivalenceReport(BaseModel):
  model_config = ConfigDict(frozen=True)

  fig1b: ScenarioSpec
  fig1a: ScenarioSpec
  max_population_difference: float
  replicates: int
  identical_datasets: int
  identical_fits: int


class InflationReport(BaseModel):
  """Replicate SD of the adjusted b1 estimate at two correlations."""
  model_config = ConfigDict(frozen=True)

  scenario: ScenarioSpec
  rho_low: float
  rho_high: float
  sd_low: float
  sd_high: float
  empirical_ratio: float
  exact_ratio: float


# --- Pydantic Schemas for the Run Ledger ---

class RunRecordModel(BaseModel):
  model_config = ConfigDict(from_attributes=True)  # read straight from RunRecord rows

  id: int
  command: str
  config_path: Optional[str] = None
  config_json: Optional[str] = None
  output_dir: Optional[str] = None
  exit_code: int
  message: Optional[str] = None
  created_date: datetime


class OracleReport(BaseModel):
  model_config = ConfigDict(frozen=True)

  scenario: ScenarioSpec
  coefficients: OracleCoefficients
  psi: Optional[PsiOracle] = None
  # fig1a <-> fig1b parameters with the same observed covariance
  reparameterized: Optional[Dict[str, float]] = None
  outcome_variance: float
  outcome_noise_variance: float
  notes: List[str] = []
