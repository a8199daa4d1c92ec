import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd
from scipy.linalg import lapack, solve_triangular

from mixlab.core.config import PD_TOL, SYMMETRY_TOL
from mixlab.core.exceptions import (
  CycleError,
  DuplicateEdge,
  DuplicateName,
  InvalidConfig,
  InvalidScenario,
  MissingNoiseVariance,
  NegativeNoiseVariance,
  InfeasibleStandardization,
  NotPositiveDefinite,
  SelfLoop,
  UnknownVariable,
)
from mixlab.schemas.schemas import CovarianceInput, LinearSEM

logger = logging.getLogger(__name__)


# --- Covariance matrices ---

@dataclass(frozen=True)
class CovarianceMatrix:
  """
  Symmetric covariance over named variables. The array is stored read-only.
  Diagonal entries must be nonnegative; positive definiteness is checked only where
  a factorization is needed (sampling, regression).
  """
  names: Tuple[str, ...]
  values: np.ndarray

  def __post_init__(self):
    values = np.array(self.values, dtype=float)
    names = tuple(self.names)
    p = len(names)
    if values.shape != (p, p):
      raise InvalidConfig(f"covariance must be {p}x{p} for names {list(names)}, got shape {values.shape}")
    if len(set(names)) != p:
      raise DuplicateName(f"covariance names are not unique: {list(names)}")
    if not np.all(np.isfinite(values)):
      raise InvalidConfig("covariance contains non-finite entries")
    asymmetry = float(np.max(np.abs(values - values.T))) if p else 0.0
    if asymmetry > SYMMETRY_TOL:
      raise InvalidConfig(f"covariance is not symmetric (max asymmetry {asymmetry:.3g})")
    if np.any(np.diag(values) < 0):
      raise InvalidConfig("covariance has a negative diagonal entry")
    values.setflags(write=False)
    object.__setattr__(self, "names", names)
    object.__setattr__(self, "values", values)

  def index(self, name: str) -> int:
    try:
      return self.names.index(name)
    except ValueError:
      raise UnknownVariable(f"{name!r} is not in covariance over {list(self.names)}")

  def entry(self, a: str, b: str) -> float:
    return float(self.values[self.index(a), self.index(b)])

  def to_frame(self) -> pd.DataFrame:
    return pd.DataFrame(self.values, index=list(self.names), columns=list(self.names))

  def to_input(self) -> CovarianceInput:
    return CovarianceInput(names=list(self.names), matrix=self.values.tolist())

  @classmethod
  def from_input(cls, data: CovarianceInput) -> "CovarianceMatrix":
    return cls(tuple(data.names), np.array(data.matrix, dtype=float))


# --- Model validation ---

def validate(model: LinearSEM) -> LinearSEM:
  """
  Check the model invariants and return a copy carrying its topological order.
  Ties in the order are broken by declaration order.
  """
  names = model.names
  seen = set()
  for name in names:
    if name in seen:
      raise DuplicateName(f"variable {name!r} is declared more than once")
    seen.add(name)
  if not model.observed:
    raise InvalidScenario("a model needs at least one observed variable")

  pairs = set()
  for edge in model.edges:
    for end in (edge.source, edge.target):
      if end not in seen:
        raise UnknownVariable(f"edge {edge.source}->{edge.target} names undeclared variable {end!r}")
    if edge.source == edge.target:
      raise SelfLoop(f"edge {edge.source}->{edge.target} is a self loop")
    if (edge.source, edge.target) in pairs:
      raise DuplicateEdge(f"more than one edge {edge.source}->{edge.target}")
    if not math.isfinite(edge.coefficient):
      raise InvalidScenario(f"edge {edge.source}->{edge.target} has non-finite coefficient")
    pairs.add((edge.source, edge.target))

  for key in list(model.noise_variance) + list(model.offset):
    if key not in seen:
      raise UnknownVariable(f"noise/offset entry {key!r} names an undeclared variable")
  for name in names:
    if name not in model.noise_variance:
      raise MissingNoiseVariance(f"variable {name!r} has no noise variance")
    variance = model.noise_variance[name]
    if math.isnan(variance) or variance < 0:
      raise NegativeNoiseVariance(name, variance)

  graph = nx.DiGraph()
  graph.add_nodes_from(names)
  graph.add_edges_from(pairs)
  if not nx.is_directed_acyclic_graph(graph):
    raise CycleError(nx.find_cycle(graph))

  position = {name: i for i, name in enumerate(names)}
  validated = model.model_copy()
  validated._order = tuple(nx.lexicographical_topological_sort(graph, key=position.__getitem__))
  validated._structure = validated.structure()
  return validated


def ensure_valid(model: LinearSEM) -> LinearSEM:
  return model if model.topological_order is not None else validate(model)


# --- Exact population quantities ---

def coefficient_matrix(model: LinearSEM, order: Sequence[str]) -> np.ndarray:
  """B[i, j] is the coefficient of the edge order[j] -> order[i]."""
  position = {name: i for i, name in enumerate(order)}
  B = np.zeros((len(order), len(order)))
  for edge in model.edges:
    B[position[edge.target], position[edge.source]] = edge.coefficient
  return B


def _total_effects(model: LinearSEM) -> Tuple[List[str], np.ndarray]:
  # (I - B)^-1 in topological order, where I - B is unit lower triangular
  order = list(model.topological_order)
  B = coefficient_matrix(model, order)
  identity = np.eye(len(order))
  A = solve_triangular(identity - B, identity, lower=True, unit_diagonal=True)
  return order, A


def implied_covariance(model: LinearSEM) -> CovarianceMatrix:
  """
  Exact covariance of every variable: Sigma = A Omega A^T with A = (I - B)^-1.
  Rows and columns follow declaration order.
  """
  model = ensure_valid(model)
  order, A = _total_effects(model)
  omega = np.diag([model.noise_variance[name] for name in order])
  sigma = A @ omega @ A.T
  sigma = (sigma + sigma.T) / 2.0

  position = [order.index(name) for name in model.names]
  sigma = sigma[np.ix_(position, position)]
  return CovarianceMatrix(tuple(model.names), sigma)


def implied_mean(model: LinearSEM) -> np.ndarray:
  """Exact means under the constant offsets (all zero unless an offset is declared)."""
  model = ensure_valid(model)
  order, A = _total_effects(model)
  mu = A @ np.array([model.offset.get(name, 0.0) for name in order])
  return mu[[order.index(name) for name in model.names]]


def solve_standardizing_noise(model: LinearSEM, targets: Iterable[str]) -> LinearSEM:
  """
  Set the noise variance of each target so its population variance is exactly 1.
  Targets are handled in topological order, so every target sees its ancestors' final
  noise variances and the solution is unique.
  """
  model = ensure_valid(model)
  targets = set(targets)
  kinds = {v.name: v.kind for v in model.variables}
  for name in targets:
    if name not in kinds:
      raise UnknownVariable(f"standardization target {name!r} is not in the model")
    if kinds[name] != "observed":
      raise InvalidScenario(f"standardization target {name!r} is latent")

  noise = dict(model.noise_variance)
  for name in model.topological_order:
    if name not in targets:
      continue
    noise[name] = 0.0
    explained = implied_covariance(model.model_copy(update={"noise_variance": noise})).entry(name, name)
    required = 1.0 - explained
    if required < -SYMMETRY_TOL:
      raise InfeasibleStandardization(name, required)
    noise[name] = max(required, 0.0)
    logger.debug("noise variance of %s set to %.12g", name, noise[name])
  return model.model_copy(update={"noise_variance": noise})


def marginal_covariance(cov: CovarianceMatrix, keep: Sequence[str]) -> CovarianceMatrix:
  """Submatrix over `keep`, in the order given."""
  keep = list(keep)
  if len(set(keep)) != len(keep):
    raise InvalidConfig(f"duplicate names in {keep}")
  index = [cov.index(name) for name in keep]
  return CovarianceMatrix(tuple(keep), cov.values[np.ix_(index, index)])


def check_positive_definite(cov: CovarianceMatrix) -> np.ndarray:
  """
  Lower Cholesky factor of cov. Raises NotPositiveDefinite with the index of the first
  pivot that is not positive (pivots at or below 1e-10 count as failures).
  """
  if len(cov.names) == 0:
    raise InvalidConfig("empty covariance matrix")
  factor, info = lapack.dpotrf(np.array(cov.values, dtype=float, order="F"), lower=1, clean=1)
  if info > 0:
    raise NotPositiveDefinite(info - 1, cov.names)
  if info < 0:
    raise InvalidConfig(f"cholesky factorization rejected argument {-info}")
  pivots = np.diag(factor) ** 2
  weak = np.flatnonzero(pivots <= PD_TOL)
  if weak.size:
    raise NotPositiveDefinite(int(weak[0]), cov.names)
  return np.tril(factor)


# --- JSON interface ---

def load_model(source: Union[str, Path]) -> LinearSEM:
  """Parse a model from a JSON string or a path to a JSON file, then validate it."""
  text = Path(source).read_text() if isinstance(source, Path) else source
  return validate(LinearSEM.model_validate_json(text))


def dump_model(model: LinearSEM) -> str:
  return model.model_dump_json(by_alias=True, indent=2)
