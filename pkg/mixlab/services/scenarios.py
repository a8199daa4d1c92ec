"""
The four named mixture DAGs, their closed-form regression coefficients, and the
reparameterization between the confounding-by-co-exposure and amplification DAGs.

Every scenario has observed exposures X1, X2 and outcome Y. Exposures are always
standardized; the outcome is standardized unless standardize_outcome is false.
"""
import logging
import math
import re
from typing import Dict, List, NamedTuple, Optional, Tuple

from mixlab.core.exceptions import InvalidConfig, UnsupportedScenario, ZeroRho
from mixlab.schemas.schemas import (
  LinearSEM,
  OracleCoefficients,
  PsiOracle,
  ScenarioSpec,
  StructuralEdge,
  VariableDecl,
)
from mixlab.services import sem_core

logger = logging.getLogger(__name__)

EXPOSURES = ("X1", "X2")
OUTCOME = "Y"
OBSERVED = ("X1", "X2", "Y")

# Parameter that controls the X1-X2 correlation in each scenario
CORRELATION_PARAMETER = {"fig1a": "rho", "fig1b": "rho", "fig2a": "rho", "fig2b": "c1c2"}


class Fig1aParams(NamedTuple):
  b1: float
  b2: float
  rho: float

  def to_spec(self, standardize_outcome: bool = True) -> ScenarioSpec:
    return ScenarioSpec(
      kind="fig1a",
      params={"b1": self.b1, "b2": self.b2, "rho": self.rho},
      standardize_outcome=standardize_outcome,
    )


class Fig1bProducts(NamedTuple):
  c1: float
  c2c3: float
  rho: float

  def to_spec(self, standardize_outcome: bool = True) -> ScenarioSpec:
    return ScenarioSpec(
      kind="fig1b",
      params={"c1": self.c1, "c2c3": self.c2c3, "rho": self.rho},
      standardize_outcome=standardize_outcome,
    )


# --- Parameter resolution ---

def _split(product: float) -> Tuple[float, float]:
  # Only the product is identified; split it as sqrt|p| and sign(p) * sqrt|p|
  root = math.sqrt(abs(product))
  return root, (math.copysign(root, product) if product != 0 else 0.0)


def _pair(params: Dict[str, float], a: str, b: str, product: Optional[str] = None) -> Tuple[float, float]:
  product = product or a + b
  if product in params:
    return _split(params[product])
  return params[a], params[b]


def coefficients(spec: ScenarioSpec) -> Dict[str, float]:
  """
  Every named coefficient of the scenario, factors and products alike.
  fig1a: b1..b4, rho; fig1b: c1..c5, c2c3, rho; fig2a: c1..c6 and products; fig2b: c1..c4, c1c2, rho.
  """
  p = spec.params
  rho = spec.rho
  if spec.kind == "fig1a":
    b3, b4 = _split(rho)
    values = {"b1": p["b1"], "b2": p["b2"], "b3": b3, "b4": b4, "rho": rho}
  elif spec.kind == "fig1b":
    c2, c3 = _pair(p, "c2", "c3")
    c4, c5 = _split(rho)
    values = {"c1": p["c1"], "c2": c2, "c3": c3, "c2c3": c2 * c3, "c4": c4, "c5": c5, "rho": rho}
    if "c2c3" in p:
      values["c2c3"] = p["c2c3"]
  elif spec.kind == "fig2a":
    c1, c2 = _pair(p, "c1", "c2", "rho")
    c3, c4 = _pair(p, "c3", "c4")
    c5, c6 = _pair(p, "c5", "c6")
    values = {
      "c1": c1, "c2": c2, "c3": c3, "c4": c4, "c5": c5, "c6": c6,
      "rho": rho, "c1c2": rho,
      "c3c4": p.get("c3c4", c3 * c4), "c5c6": p.get("c5c6", c5 * c6),
    }
  else:
    c1, c2 = _pair(p, "c1", "c2")
    c1c2 = p.get("c1c2", c1 * c2)
    values = {"c1": c1, "c2": c2, "c3": p["c3"], "c4": p["c4"], "c1c2": c1c2, "rho": rho}
  if "noise_y" in p:
    values["noise_y"] = p["noise_y"]
  return values


_TERM = re.compile(r"\s*([+-]?)\s*([A-Za-z_][A-Za-z0-9_]*|(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)\s*")


def parameter_value(spec: ScenarioSpec, expression: str) -> float:
  """
  Evaluate a truth declaration such as "b1", "b1+b2", "c1" or "0".
  Terms are joined by '+' or '-' and are parameter names or numbers.
  """
  values = coefficients(spec)
  total = 0.0
  position = 0
  while position < len(expression):
    match = _TERM.match(expression, position)
    if match is None or match.end() == position or (position > 0 and not match.group(1)):
      raise InvalidConfig(f"cannot parse truth declaration {expression!r} at position {position}")
    sign, token = match.groups()
    if token[0].isalpha() or token[0] == "_":
      if token not in values:
        raise InvalidConfig(
          f"truth {expression!r} names {token!r}, which is not a {spec.kind} parameter ({sorted(values)})"
        )
      value = values[token]
    else:
      value = float(token)
    total += -value if sign == "-" else value
    position = match.end()
  if position == 0:
    raise InvalidConfig("empty truth declaration")
  return total


# --- Model construction ---

def _variables(latents: List[str]) -> List[VariableDecl]:
  decls = [VariableDecl(name=name, kind="latent", role="confounder") for name in latents]
  decls += [
    VariableDecl(name="X1", kind="observed", role="exposure"),
    VariableDecl(name="X2", kind="observed", role="exposure"),
    VariableDecl(name="Y", kind="observed", role="outcome"),
  ]
  return decls


def _edges(*triples) -> List[StructuralEdge]:
  return [StructuralEdge(source=s, target=t, coefficient=c) for s, t, c in triples]


def build_model(spec: ScenarioSpec) -> LinearSEM:
  """
  Validated, standardized LinearSEM for the scenario. Latent causes have unit variance;
  X1 and X2 get the noise variance that makes them standard normal.
  """
  k = coefficients(spec)
  if spec.kind == "fig1a":
    latents = ["U"]
    edges = _edges(("U", "X1", k["b3"]), ("U", "X2", k["b4"]), ("X1", "Y", k["b1"]), ("X2", "Y", k["b2"]))
  elif spec.kind == "fig1b":
    latents = ["U", "U'"]
    edges = _edges(
      ("U", "X1", k["c4"]), ("U", "X2", k["c5"]),
      ("U'", "X1", k["c2"]), ("U'", "Y", k["c3"]),
      ("X1", "Y", k["c1"]),
    )
  elif spec.kind == "fig2a":
    latents = ["U", "U'", "U''"]
    edges = _edges(
      ("U", "X1", k["c1"]), ("U", "X2", k["c2"]),
      ("U'", "X1", k["c3"]), ("U'", "Y", k["c4"]),
      ("U''", "X2", k["c5"]), ("U''", "Y", k["c6"]),
    )
  else:
    latents = ["U"]
    edges = _edges(("U", "X1", k["c1"]), ("U", "X2", k["c2"]), ("Y", "X1", k["c3"]), ("Y", "X2", k["c4"]))

  noise = {name: 1.0 for name in latents + list(OBSERVED)}
  targets = ["X1", "X2"]
  if spec.kind == "fig2b" or spec.standardize_outcome:
    targets.append("Y")
  else:
    noise["Y"] = k.get("noise_y", 1.0)

  model = sem_core.validate(LinearSEM(variables=_variables(latents), edges=edges, noise_variance=noise))
  return sem_core.solve_standardizing_noise(model, targets)


def outcome_variances(model: LinearSEM) -> Tuple[float, float]:
  """(V(Y), V(eps)) of a built scenario model."""
  cov = sem_core.implied_covariance(model)
  return cov.entry(OUTCOME, OUTCOME), model.noise_variance[OUTCOME]


def observed_covariance(spec: ScenarioSpec) -> sem_core.CovarianceMatrix:
  return sem_core.marginal_covariance(sem_core.implied_covariance(build_model(spec)), list(OBSERVED))


# --- Closed-form regression coefficients ---

def _two_regressor(r1y: float, r2y: float, rho: float) -> Tuple[float, float]:
  denom = 1.0 - rho * rho
  return (r1y - rho * r2y) / denom, (r2y - rho * r1y) / denom


def closed_form(spec: ScenarioSpec) -> OracleCoefficients:
  """Exact population crude and mutually adjusted OLS coefficients of Y on X1, X2."""
  k = coefficients(spec)
  rho = k["rho"]
  denom = 1.0 - rho * rho
  if spec.kind == "fig1a":
    b1, b2 = k["b1"], k["b2"]
    crude = (b1 + rho * b2, b2 + rho * b1)
    adjusted = (b1, b2)
  elif spec.kind == "fig1b":
    c1, c2c3 = k["c1"], k["c2c3"]
    crude = (c1 + c2c3, rho * c1)
    adjusted = (c1 + c2c3 / denom, -c2c3 * rho / denom)
  elif spec.kind == "fig2a":
    c3c4, c5c6 = k["c3c4"], k["c5c6"]
    crude = (c3c4, c5c6)
    adjusted = ((c3c4 - rho * c5c6) / denom, (c5c6 - rho * c3c4) / denom)
  else:
    crude = (k["c3"], k["c4"])
    adjusted = _two_regressor(crude[0], crude[1], rho)
  return OracleCoefficients(
    crude_beta1=crude[0],
    crude_beta2=crude[1],
    adjusted_beta1=adjusted[0],
    adjusted_beta2=adjusted[1],
    rho=rho,
    tabulated=spec.kind != "fig2b",
  )


def psi_oracle(spec: ScenarioSpec) -> PsiOracle:
  """True, expected and bias of the overall mixture effect (sum of adjusted coefficients)."""
  k = coefficients(spec)
  if spec.kind == "fig1a":
    psi = k["b1"] + k["b2"]
    return PsiOracle(psi_true=psi, psi_expected=psi, psi_bias=0.0)
  if spec.kind == "fig1b":
    bias = k["c2c3"] / (1.0 + k["rho"])
    expected = k["c1"] + bias
    return PsiOracle(psi_true=k["c1"], psi_expected=expected, psi_bias=expected - k["c1"])
  raise UnsupportedScenario(f"{spec.kind} has no declared causal value of the overall mixture effect")


# --- Reparameterization between fig1a and fig1b ---

def reparam_1b_to_1a(spec: ScenarioSpec) -> Fig1aParams:
  """fig1a coefficients that reproduce the fig1b observed covariance."""
  if spec.kind != "fig1b":
    raise UnsupportedScenario(f"expected a fig1b scenario, got {spec.kind}")
  k = coefficients(spec)
  rho, c2c3 = k["rho"], k["c2c3"]
  denom = 1.0 - rho * rho
  return Fig1aParams(b1=k["c1"] + c2c3 / denom, b2=-c2c3 * rho / denom, rho=rho)


def reparam_1b_to_1a_spec(spec: ScenarioSpec) -> ScenarioSpec:
  """
  fig1a scenario with the same observed covariance as a fig1b scenario. When Y is not
  standardized, the fig1a outcome noise is chosen so V(Y) matches.
  """
  params = reparam_1b_to_1a(spec)
  if spec.standardize_outcome:
    return params.to_spec()
  v_y = observed_covariance(spec).entry(OUTCOME, OUTCOME)
  explained = params.b1 ** 2 + params.b2 ** 2 + 2.0 * params.rho * params.b1 * params.b2
  return ScenarioSpec(
    kind="fig1a",
    params={"b1": params.b1, "b2": params.b2, "rho": params.rho, "noise_y": v_y - explained},
    standardize_outcome=False,
  )


def reparam_1a_to_1b(b1: float, b2: float, rho: float) -> Fig1bProducts:
  """fig1b (c1, c2c3) from fig1a coefficients; c2 and c3 are not separately identified."""
  if rho == 0:
    raise ZeroRho("fig1a -> fig1b reparameterization divides by rho, which is 0")
  return Fig1bProducts(c1=b1 + b2 / rho, c2c3=-b2 * (1.0 - rho * rho) / rho, rho=rho)


# --- Causal coefficients implied by fixed crude correlations ---

def fig1a_from_crude(r1y: float, r2y: float, rho: float) -> Fig1aParams:
  """Invert r1y = b1 + rho*b2, r2y = b2 + rho*b1."""
  b1, b2 = _two_regressor(r1y, r2y, rho)
  return Fig1aParams(b1=b1, b2=b2, rho=rho)


def fig1b_from_crude(r1y: float, r2y: float, rho: float) -> Fig1bProducts:
  """Invert r1y = c1 + c2c3, r2y = rho*c1."""
  if rho == 0:
    raise ZeroRho("fig1b crude inversion divides by rho, which is 0")
  c1 = r2y / rho
  return Fig1bProducts(c1=c1, c2c3=r1y - c1, rho=rho)
