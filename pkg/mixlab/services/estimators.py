import logging
from typing import Dict, List, NamedTuple, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from mixlab.core.config import CONDITION_LIMIT
from mixlab.core.exceptions import InsufficientData, InvalidConfig, SingularDesign
from mixlab.schemas.schemas import ExposureEstimate, RegressionResult
from mixlab.services.datagen import Dataset, quantile_scores
from mixlab.services.sem_core import CovarianceMatrix

logger = logging.getLogger(__name__)


class OLSFit(NamedTuple):
  coefficients: Dict[str, float]
  residual_variance: float
  n: int


def _unique(names: Sequence[str]) -> List[str]:
  seen = []
  for name in names:
    if name not in seen:
      seen.append(name)
  return seen


def _solve_normal_equations(block: np.ndarray, cross: np.ndarray, regressors: Sequence[str]) -> np.ndarray:
  condition = float(np.linalg.cond(block))
  if not np.isfinite(condition) or condition > CONDITION_LIMIT:
    raise SingularDesign(condition, regressors)
  try:
    return cho_solve(cho_factor(block, lower=True), cross)
  except LinAlgError:
    raise SingularDesign(condition, regressors)


def moment_ols(cov: CovarianceMatrix, outcome: str, regressors: Sequence[str]) -> Dict[str, float]:
  """
  OLS coefficients from second moments: (regressor block)^-1 (regressor-outcome covariances).
  With population moments this is the exact large-sample limit of the fit.
  """
  regressors = list(regressors)
  if not regressors:
    raise InvalidConfig("at least one regressor is required")
  if len(set(regressors)) != len(regressors):
    raise InvalidConfig(f"duplicate regressors {regressors}")
  index = [cov.index(name) for name in regressors]
  y = cov.index(outcome)
  block = cov.values[np.ix_(index, index)]
  cross = cov.values[index, y]
  beta = _solve_normal_equations(block, cross, regressors)
  return {name: float(value) for name, value in zip(regressors, beta)}


def sample_covariance(data: Dataset, names: Sequence[str]) -> CovarianceMatrix:
  """Unbiased sample covariance of the given columns (centered at the sample means)."""
  names = _unique(names)
  x = np.column_stack([data.column(name) for name in names])
  centered = x - x.mean(axis=0)
  s = centered.T @ centered / (data.n - 1)
  return CovarianceMatrix(tuple(names), (s + s.T) / 2.0)


def ols(data: Dataset, outcome: str, regressors: Sequence[str]) -> OLSFit:
  """
  Least squares of outcome on regressors with an internal intercept (columns centered).
  Residual variance is RSS / (n - p - 1).
  """
  regressors = list(regressors)
  p = len(regressors)
  if data.n <= p + 1:
    raise InsufficientData(f"need n > {p + 1} rows to fit {p} regressors, got n={data.n}")
  cov = sample_covariance(data, regressors + [outcome])
  coefficients = moment_ols(cov, outcome, regressors)

  y = data.column(outcome)
  fitted = y.mean() + sum(
    coefficients[name] * (data.column(name) - data.column(name).mean()) for name in regressors
  )
  rss = float(np.sum((y - fitted) ** 2))
  return OLSFit(coefficients, rss / (data.n - p - 1), data.n)


def fit(data: Dataset, outcome: str = "Y", exposures: Sequence[str] = ("X1", "X2")) -> RegressionResult:
  """Crude fit per exposure plus the mutually adjusted fit; psi_hat sums the adjusted coefficients."""
  exposures = list(exposures)
  adjusted = ols(data, outcome, exposures)
  estimates = [
    ExposureEstimate(
      name=name,
      crude=ols(data, outcome, [name]).coefficients[name],
      adjusted=adjusted.coefficients[name],
    )
    for name in exposures
  ]
  return RegressionResult(
    outcome=outcome,
    exposures=estimates,
    residual_variance=adjusted.residual_variance,
    n=data.n,
    psi_hat=sum(e.adjusted for e in estimates),
    note="; ".join(data.notes) or None,
  )


def fit_quantiled(data: Dataset, q: int, outcome: str = "Y",
                  exposures: Sequence[str] = ("X1", "X2")) -> RegressionResult:
  """Same fits on exposures replaced by raw quantile scores 0..q-1 (per-quantile coefficients)."""
  return fit(quantile_scores(data, q, exposures), outcome, exposures)


def psi_hat(result: RegressionResult) -> float:
  """Overall mixture effect: the sum of the mutually adjusted coefficients."""
  return sum(e.adjusted for e in result.exposures)
