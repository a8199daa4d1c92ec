"""
Synthetic data from a linear Gaussian SEM.

Random numbers: numpy's Philox4x64 counter-based generator seeded with the 64-bit
dataset seed. Standard normal variates are produced by the inverse normal CDF
(scipy.special.ndtri) applied to 52-bit uniforms u = (k + 0.5) / 2**52, so golden
files do not depend on a library's ziggurat implementation.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, lstsq
from scipy.special import ndtri
from scipy.stats import rankdata

from mixlab.core.config import COVARIANCE_DECIMALS, PD_TOL, SYMMETRY_TOL
from mixlab.core.exceptions import (
  InvalidConfig,
  InvalidScenario,
  NotPositiveDefinite,
  QTooLargeForN,
  UnknownVariable,
)
from mixlab.schemas.schemas import GenMethod, LinearSEM, ScenarioSpec, SimulateConfig
from mixlab.services import sem_core
from mixlab.services.reports import atomic_write_text
from mixlab.services.sem_core import CovarianceMatrix

logger = logging.getLogger(__name__)

_UNIFORM_BITS = 52


@dataclass(frozen=True)
class Dataset:
  """n x p table of observed values with its generation provenance. Values are read-only."""
  names: Tuple[str, ...]
  values: np.ndarray
  provenance: SimulateConfig
  notes: Tuple[str, ...] = field(default=())

  def __post_init__(self):
    values = np.array(self.values, dtype=float)
    names = tuple(self.names)
    if values.ndim != 2 or values.shape[1] != len(names):
      raise InvalidConfig(f"dataset values of shape {values.shape} do not match columns {list(names)}")
    if values.shape[0] < 1:
      raise InvalidConfig("dataset needs at least one row")
    if np.isnan(values).any():
      raise InvalidConfig("dataset has missing values")
    values.setflags(write=False)
    object.__setattr__(self, "names", names)
    object.__setattr__(self, "values", values)

  @property
  def n(self) -> int:
    return self.values.shape[0]

  def column(self, name: str) -> np.ndarray:
    try:
      return self.values[:, self.names.index(name)]
    except ValueError:
      raise UnknownVariable(f"{name!r} is not a dataset column ({list(self.names)})")

  def to_frame(self) -> pd.DataFrame:
    return pd.DataFrame(self.values, columns=list(self.names))


# --- Random numbers ---

def make_generator(seed: int) -> np.random.Generator:
  return np.random.Generator(np.random.Philox(seed))


def standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
  k = rng.integers(0, 2 ** _UNIFORM_BITS, size=shape, dtype=np.uint64)
  u = (k.astype(np.float64) + 0.5) * 2.0 ** -_UNIFORM_BITS
  return ndtri(u)


def _provenance(method: GenMethod, n: int, seed: int, scenario: Optional[ScenarioSpec] = None,
                model: Optional[LinearSEM] = None, cov: Optional[CovarianceMatrix] = None,
                exposures: Optional[Sequence[str]] = None) -> SimulateConfig:
  exposures = list(exposures) if exposures else None
  if scenario is not None:
    return SimulateConfig(scenario=scenario, method=method, n=n, seed=seed, exposures=exposures)
  if model is not None:
    return SimulateConfig(model=model, method=method, n=n, seed=seed, exposures=exposures)
  return SimulateConfig(covariance=cov.to_input(), method=method, n=n, seed=seed)


def _check_n(n: int):
  if n < 1:
    raise InvalidConfig(f"n must be >= 1, got {n}")


# --- Method 1: ancestral sampling ---

def sample_method1(model: LinearSEM, n: int, seed: int, scenario: Optional[ScenarioSpec] = None) -> Dataset:
  """
  Simulate every variable from its structural equation in topological order and
  return the observed columns.
  """
  _check_n(n)
  model = sem_core.ensure_valid(model)
  order = model.topological_order
  noise = standard_normal(make_generator(seed), (n, len(order)))

  values = {}
  for j, name in enumerate(order):
    column = np.full(n, model.offset.get(name, 0.0))
    for edge in model.parents(name):
      column = column + edge.coefficient * values[edge.source]
    variance = model.noise_variance[name]
    if variance > 0:
      column = column + np.sqrt(variance) * noise[:, j]
    values[name] = column

  observed = model.observed
  return Dataset(
    tuple(observed),
    np.column_stack([values[name] for name in observed]),
    _provenance(GenMethod.METHOD1, n, seed, scenario=scenario, model=model),
  )


# --- Method 2: direct multivariate normal ---

def sample_method2(cov: CovarianceMatrix, n: int, seed: int, mean: Optional[Sequence[float]] = None,
                   scenario: Optional[ScenarioSpec] = None) -> Dataset:
  """
  n zero-mean multivariate normal draws, X = Z L^T with L the lower Cholesky factor.
  Entries are rounded to 12 decimals first, so covariances that agree to within
  floating-point noise produce identical datasets.
  """
  _check_n(n)
  snapped = CovarianceMatrix(cov.names, np.round(cov.values, COVARIANCE_DECIMALS))
  L = sem_core.check_positive_definite(snapped)
  z = standard_normal(make_generator(seed), (n, len(cov.names)))
  x = z @ L.T
  if mean is not None:
    x = x + np.asarray(mean, dtype=float)
  return Dataset(cov.names, x, _provenance(GenMethod.METHOD2, n, seed, scenario=scenario, cov=cov))


# --- Hybrid: exposures jointly, the rest structurally ---

def _resolve_exposures(model: LinearSEM, exposures: Optional[Sequence[str]]) -> List[str]:
  """
  Explicit names win, then role tags. An untagged model falls back to its observed
  variables without observed ancestors.
  """
  observed = model.observed
  if exposures:
    exposures = list(exposures)
    for name in exposures:
      if name not in observed:
        raise UnknownVariable(f"exposure {name!r} is not an observed variable ({observed})")
    if len(set(exposures)) != len(exposures):
      raise InvalidConfig(f"duplicate exposures {exposures}")
    return exposures
  tagged = [v.name for v in model.variables if v.kind == "observed" and v.role == "exposure"]
  if tagged:
    return tagged
  graph = nx.DiGraph((e.source, e.target) for e in model.edges)
  graph.add_nodes_from(model.names)
  roots = [name for name in observed if not nx.ancestors(graph, name) & set(observed)]
  logger.debug("hybrid exposures defaulted to %s", roots)
  return roots


def sample_hybrid(model: LinearSEM, n: int, seed: int, scenario: Optional[ScenarioSpec] = None,
                  exposures: Optional[Sequence[str]] = None) -> Dataset:
  """
  Draw the exposures jointly from their implied multivariate normal, then build each
  remaining observed variable in topological order as its linear function of the
  variables already drawn plus independent normal error. For fig1a this is exactly
  Y = b1*X1 + b2*X2 + eps with V(eps) from the model.

  The regression on the drawn block is a minimum-norm least-squares solve, so a
  variable that is an exact linear function of earlier ones gets zero residual.
  """
  _check_n(n)
  model = sem_core.ensure_valid(model)
  exposures = _resolve_exposures(model, exposures)
  rest = [name for name in model.topological_order if name in model.observed and name not in exposures]

  full = sem_core.implied_covariance(model)
  observed_cov = sem_core.marginal_covariance(full, exposures + rest)
  snapped = np.round(observed_cov.values, COVARIANCE_DECIMALS)
  mean = dict(zip(model.names, sem_core.implied_mean(model)))

  rng = make_generator(seed)
  p = len(exposures)
  L = sem_core.check_positive_definite(CovarianceMatrix(tuple(exposures), snapped[:p, :p]))
  columns = standard_normal(rng, (n, p)) @ L.T
  errors = standard_normal(rng, (n, len(rest)))

  centered = [columns[:, i] for i in range(p)]
  for j, name in enumerate(rest):
    k = p + j
    drawn = snapped[:k, :k]
    cross = snapped[:k, k]
    try:
      beta = lstsq(drawn, cross, cond=PD_TOL)[0]
    except LinAlgError:
      raise NotPositiveDefinite(k, observed_cov.names)
    residual = snapped[k, k] - float(cross @ beta)
    if residual < -SYMMETRY_TOL:
      raise InvalidScenario(f"negative conditional variance {residual:.3g} for {name!r}")
    column = np.column_stack(centered) @ beta + np.sqrt(max(residual, 0.0)) * errors[:, j]
    centered.append(column)

  order = exposures + rest
  data = np.column_stack([centered[order.index(name)] + mean[name] for name in model.observed])
  return Dataset(
    tuple(model.observed), data,
    _provenance(GenMethod.HYBRID, n, seed, scenario=scenario, model=model, exposures=exposures),
  )


def sample(method: GenMethod, model: LinearSEM, n: int, seed: int,
           scenario: Optional[ScenarioSpec] = None, observed_cov: Optional[CovarianceMatrix] = None,
           exposures: Optional[Sequence[str]] = None) -> Dataset:
  """Dispatch on the generation method; method 2 uses the observed implied covariance."""
  if method == GenMethod.METHOD1:
    return sample_method1(model, n, seed, scenario=scenario)
  if method == GenMethod.HYBRID:
    return sample_hybrid(model, n, seed, scenario=scenario, exposures=exposures)
  if observed_cov is None:
    observed_cov = sem_core.marginal_covariance(sem_core.implied_covariance(model), model.observed)
  mean = sem_core.implied_mean(model)
  mean = [mean[model.names.index(name)] for name in observed_cov.names]
  return sample_method2(observed_cov, n, seed, mean=mean if any(mean) else None, scenario=scenario)


# --- Quantile scoring ---

def quantile_scores(data: Dataset, q: int, columns: Iterable[str]) -> Dataset:
  """
  Replace each selected column by integer scores 0..q-1 from its empirical quantile bin.
  Tied values share the bin of the first tied value in rank order, so a constant
  column lands in a single bin.
  """
  columns = list(columns)
  if q < 2:
    raise InvalidConfig(f"q must be >= 2, got {q}")
  if q > data.n:
    raise QTooLargeForN(q, data.n)
  values = np.array(data.values)
  for name in columns:
    j = data.names.index(name) if name in data.names else None
    if j is None:
      raise UnknownVariable(f"{name!r} is not a dataset column ({list(data.names)})")
    ranks = rankdata(values[:, j], method="min") - 1
    values[:, j] = np.floor(ranks * q / data.n)
  note = f"quantile scores 0..{q - 1} on {','.join(columns)}"
  return Dataset(data.names, values, data.provenance, data.notes + (note,))


# --- Export ---

def write_dataset(data: Dataset, directory: Path, stem: str = "dataset") -> Tuple[Path, Path]:
  """CSV with 17 significant digits plus a provenance sidecar JSON."""
  directory = Path(directory)
  csv_path = directory / f"{stem}.csv"
  json_path = directory / f"{stem}.provenance.json"
  atomic_write_text(csv_path, data.to_frame().to_csv(index=False, float_format="%.17g", lineterminator="\n"))
  atomic_write_text(json_path, data.provenance.model_dump_json(indent=2, exclude_none=True, by_alias=True) + "\n")
  logger.info("Wrote %d rows to %s", data.n, csv_path)
  return csv_path, json_path


def read_provenance(path: Path) -> SimulateConfig:
  return SimulateConfig.model_validate_json(Path(path).read_text())
