"""
Replicated Monte Carlo experiments and the sweeps built on them.

Replicate i of an experiment with base seed s draws its dataset with seed
SeedSequence([s, i]).generate_state(1, uint64)[0]. Adding replicates never changes
the earlier ones, and results are merged by replicate index, so reports are
bit-identical for any number of worker threads.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from mixlab.core.config import COVARIANCE_DECIMALS, get_settings
from mixlab.core.exceptions import (
  InvalidConfig,
  InvalidScenario,
  PolicyScenarioMismatch,
  QTooLargeForN,
  SingularDesign,
  UnsupportedScenario,
)
from mixlab.schemas.schemas import (
  ESTIMANDS,
  QUANTILE_ESTIMANDS,
  AmplificationPoint,
  AmplificationReport,
  BiasReport,
  CurveConfig,
  EquivalenceReport,
  EstimandSummary,
  ExperimentConfig,
  GenMethod,
  InflationReport,
  LinearSEM,
  OracleCoefficients,
  ScenarioSpec,
  SweepConfig,
  SweepPoint,
  SweepPolicy,
  SweepResult,
)
from mixlab.services import datagen, estimators, scenarios, sem_core
from mixlab.services.sem_core import CovarianceMatrix

logger = logging.getLogger(__name__)

REVERSAL_WARNING = (
  "holding the crude correlations r1y, r2y fixed while {parameter} changes forces the causal "
  "coefficients of {kind} to move in opposite directions (reversal paradox); "
  "pass acknowledge_reversal to run the sweep and report the implied coefficients"
)

_ORACLE_TOL = 1e-12


def mix_seed(base_seed: int, index: int) -> int:
  """64-bit dataset seed of replicate `index`."""
  return int(np.random.SeedSequence([base_seed, index]).generate_state(1, dtype=np.uint64)[0])


def _map_ordered(function, items: Sequence, threads: int) -> List:
  if threads <= 1 or len(items) <= 1:
    return [function(item) for item in items]
  with ThreadPoolExecutor(max_workers=threads) as pool:
    return list(pool.map(function, items))


# --- Single experiment ---

@dataclass(frozen=True)
class _Plan:
  spec: ScenarioSpec
  model: LinearSEM
  observed_cov: CovarianceMatrix
  method: GenMethod
  n: int
  quantiles: Optional[int]


def _replicate(plan: _Plan, base_seed: int, index: int) -> Optional[Tuple[float, ...]]:
  seed = mix_seed(base_seed, index)
  logger.debug("replicate %d seed %d", index, seed)
  data = datagen.sample(plan.method, plan.model, plan.n, seed, scenario=plan.spec, observed_cov=plan.observed_cov)
  try:
    result = estimators.fit(data, scenarios.OUTCOME, scenarios.EXPOSURES)
    x1, x2 = result.exposures
    row = (x1.crude, x2.crude, x1.adjusted, x2.adjusted, result.psi_hat)
    if plan.quantiles:
      quantiled = estimators.fit_quantiled(data, plan.quantiles, scenarios.OUTCOME, scenarios.EXPOSURES)
      row += (quantiled.psi_hat, quantiled.psi_hat - result.psi_hat)
  except SingularDesign as e:
    logger.warning("replicate %d excluded: %s", index, e)
    return None
  return row


def _expectations(oracle: OracleCoefficients) -> Dict[str, float]:
  return {
    "crude_beta1": oracle.crude_beta1,
    "crude_beta2": oracle.crude_beta2,
    "adjusted_beta1": oracle.adjusted_beta1,
    "adjusted_beta2": oracle.adjusted_beta2,
    "psi": oracle.adjusted_beta1 + oracle.adjusted_beta2,
  }


def _resolve_truth(spec: ScenarioSpec, truth: Dict[str, str]) -> Dict[str, Tuple[float, str]]:
  return {name: (scenarios.parameter_value(spec, expr), expr) for name, expr in truth.items()}


def _prepare(config: ExperimentConfig) -> _Plan:
  spec = config.scenario
  model = scenarios.build_model(spec)
  observed_cov = sem_core.marginal_covariance(sem_core.implied_covariance(model), list(scenarios.OBSERVED))
  # Fail once up front rather than in every replicate
  if config.method == GenMethod.METHOD2:
    snapped = np.round(observed_cov.values, COVARIANCE_DECIMALS)
    sem_core.check_positive_definite(CovarianceMatrix(observed_cov.names, snapped))
  elif config.method == GenMethod.HYBRID:
    sem_core.check_positive_definite(sem_core.marginal_covariance(observed_cov, list(scenarios.EXPOSURES)))
  if config.quantiles and config.quantiles > config.n:
    raise QTooLargeForN(config.quantiles, config.n)
  return _Plan(spec, model, observed_cov, config.method, config.n, config.quantiles)


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> BiasReport:
  """
  Run R replicates of generate -> fit and summarize every estimand against the declared
  causal truth and, separately, against its exact closed-form expectation.
  Replicates whose design is singular are excluded and listed in the report.
  """
  truths = _resolve_truth(config.scenario, config.truth)
  plan = _prepare(config)
  oracle = scenarios.closed_form(config.scenario)
  expected = _expectations(oracle)
  threads = threads or get_settings().threads

  logger.info(
    "experiment %s method=%s n=%d R=%d seed=%d threads=%d",
    config.scenario.kind, config.method.value, config.n, config.replicates, config.seed, threads,
  )
  rows = _map_ordered(partial(_replicate, plan, config.seed), list(range(config.replicates)), threads)

  excluded = [i for i, row in enumerate(rows) if row is None]
  kept = [row for row in rows if row is not None]
  if excluded:
    logger.warning("%d of %d replicates excluded as singular", len(excluded), config.replicates)
  if not kept:
    raise SingularDesign(float("inf"), list(scenarios.EXPOSURES))

  matrix = np.array(kept, dtype=float)
  used = matrix.shape[0]
  means = matrix.mean(axis=0)
  sds = matrix.std(axis=0, ddof=1) if used > 1 else None

  names = list(ESTIMANDS) + (list(QUANTILE_ESTIMANDS) if config.quantiles else [])
  expected_source = "closed form" if oracle.tabulated else "derived from the implied covariance (no tabulated closed form)"
  summaries = []
  for j, name in enumerate(names):
    mean = float(means[j])
    sd = float(sds[j]) if sds is not None else None
    mcse = sd / math.sqrt(used) if sd is not None else None
    item = {"estimand": name, "mean": mean, "sd": sd, "mcse": mcse}
    if name in truths:
      value, expr = truths[name]
      item.update(truth=value, truth_source=f"causal parameter {expr}", bias=mean - value)
    if name in expected:
      item.update(expected=expected[name], expected_source=expected_source, bias_vs_expected=mean - expected[name])
      if mcse is not None:
        gap = abs(mean - expected[name])
        item["gate_passed"] = bool(gap < config.gate_sigma * mcse) if mcse > 0 else gap <= _ORACLE_TOL
    summaries.append(EstimandSummary(**item))

  notes = []
  if used < 2:
    notes.append("single replicate: SD, MCSE and gates are not evaluated")
  if config.quantiles:
    notes.append(f"quantile estimands regress Y on raw scores 0..{config.quantiles - 1}; reported, not gated")
  if not oracle.tabulated:
    notes.append("adjusted expectations solve the two-regressor normal equations from the implied covariance")
  failed = [s.estimand for s in summaries if s.gate_passed is False]
  if failed:
    logger.warning("gates failed for %s", ", ".join(failed))

  v_y, v_eps = scenarios.outcome_variances(plan.model)
  return BiasReport(
    scenario=config.scenario,
    method=config.method,
    n=config.n,
    replicates=config.replicates,
    seed=config.seed,
    used_replicates=used,
    excluded_replicates=len(excluded),
    excluded_indices=excluded,
    sd_defined=used > 1,
    outcome_variance=v_y,
    outcome_noise_variance=v_eps,
    estimands=summaries,
    notes=notes,
  )


# --- Sweeps ---

def _direction(values: Sequence[float], tolerance: float = _ORACLE_TOL) -> str:
  values = np.asarray(values, dtype=float)
  if values.size < 2 or np.all(np.abs(values - values[0]) <= tolerance):
    return "constant"
  steps = np.diff(values)
  if np.all(steps > 0):
    return "increasing"
  if np.all(steps < 0):
    return "decreasing"
  return "mixed"


def _empirical_direction(means: Sequence[float], mcses: Sequence[Optional[float]]) -> str:
  # Constant when every mean is within 3 MCSE of the grid average
  means = np.asarray(means, dtype=float)
  if all(m is not None for m in mcses):
    spread = 3.0 * max(mcses)
    if np.all(np.abs(means - means.mean()) < spread):
      return "constant"
  return _direction(means)


def _held_noise(spec: ScenarioSpec, hold: str) -> Optional[float]:
  if hold != "noise_variance":
    return None
  if spec.kind == "fig2b":
    raise InvalidConfig("fig2b always standardizes Y; hold='noise_variance' is not available")
  return scenarios.build_model(spec).noise_variance[scenarios.OUTCOME]


def _point_spec(config: SweepConfig, parameter: str, value: float,
                crude: Tuple[float, float]) -> Tuple[ScenarioSpec, Optional[Dict[str, float]]]:
  spec = config.scenario
  if config.policy == SweepPolicy.FIX_CRUDE and spec.kind == "fig1a":
    params = scenarios.fig1a_from_crude(crude[0], crude[1], value)
    return params.to_spec(spec.standardize_outcome), {"b1": params.b1, "b2": params.b2}
  if config.policy == SweepPolicy.FIX_CRUDE and spec.kind == "fig1b":
    products = scenarios.fig1b_from_crude(crude[0], crude[1], value)
    return products.to_spec(spec.standardize_outcome), {"c1": products.c1, "c2c3": products.c2c3}
  return spec.with_param(parameter, value), None


def collinearity_sweep(config: SweepConfig, threads: Optional[int] = None) -> SweepResult:
  """
  Sweep the correlation-controlling parameter over the grid.

  fix_causal keeps every other scenario parameter and reports the implied crude values
  per point. fix_crude keeps the crude coefficients: for fig2a/fig2b that is automatic,
  for fig1a/fig1b it requires acknowledge_reversal and reports the causal coefficients
  the inversion implies. With replicates=0 only the exact values are computed.
  """
  spec = config.scenario
  parameter = config.parameter or scenarios.CORRELATION_PARAMETER[spec.kind]
  if parameter not in scenarios.coefficients(spec) and parameter not in ("rho", "noise_y"):
    raise InvalidConfig(f"{spec.kind} has no parameter {parameter!r}")

  notes = []
  crude = None
  if config.policy == SweepPolicy.FIX_CRUDE and spec.kind in ("fig1a", "fig1b"):
    if not config.acknowledge_reversal:
      raise PolicyScenarioMismatch(REVERSAL_WARNING.format(parameter="rho", kind=spec.kind))
    if parameter != "rho":
      raise InvalidConfig(f"fix_crude on {spec.kind} sweeps rho, not {parameter!r}")
    base = scenarios.closed_form(spec)
    crude = tuple(config.fixed_crude) if config.fixed_crude else (base.crude_beta1, base.crude_beta2)
    notes.append(
      f"crude coefficients held at r1y={crude[0]:g}, r2y={crude[1]:g}; "
      "the implied causal coefficients change with rho (reversal paradox)"
    )
  elif config.fixed_crude is not None:
    raise InvalidConfig("fixed_crude applies only to fix_crude sweeps of fig1a/fig1b")

  held_noise = _held_noise(spec, config.hold)
  if held_noise is not None:
    notes.append(f"V(eps) held at {held_noise:.6g}; V(Y) varies across the grid")
  else:
    notes.append("V(Y) held at 1; V(eps) recomputed per grid point")

  points = []
  for value in config.grid:
    point_spec, implied = _point_spec(config, parameter, value, crude)
    if held_noise is not None:
      point_spec = point_spec.with_param("noise_y", held_noise, standardize_outcome=False)
    model = scenarios.build_model(point_spec)
    oracle = scenarios.closed_form(point_spec)
    report = None
    if config.replicates > 0:
      logger.info("sweep %s=%g", parameter, value)
      report = run_experiment(
        ExperimentConfig(
          scenario=point_spec, method=config.method, n=config.n,
          replicates=config.replicates, seed=config.seed, truth=config.truth,
        ),
        threads=threads,
      )
    points.append(SweepPoint(
      value=value,
      scenario=point_spec,
      oracle=oracle,
      outcome_noise_variance=model.noise_variance[scenarios.OUTCOME],
      implied_causal=implied,
      report=report,
    ))

  monotonicity = {}
  for field in ("crude_beta1", "crude_beta2", "adjusted_beta1", "adjusted_beta2"):
    monotonicity[f"exact_{field}"] = _direction([getattr(p.oracle, field) for p in points])
  if crude is not None:
    for name in points[0].implied_causal:
      monotonicity[f"implied_{name}"] = _direction([p.implied_causal[name] for p in points])
  if config.replicates > 0:
    for estimand in ESTIMANDS:
      items = [p.report.summary(estimand) for p in points]
      monotonicity[f"mean_{estimand}"] = _empirical_direction([i.mean for i in items], [i.mcse for i in items])

  return SweepResult(
    parameter=parameter,
    policy=config.policy,
    grid=list(config.grid),
    points=points,
    monotonicity=monotonicity,
    notes=notes,
  )


def _require_fig1b(spec: ScenarioSpec) -> Dict[str, float]:
  if spec.kind != "fig1b":
    raise UnsupportedScenario(f"this check needs a fig1b scenario, got {spec.kind}")
  return scenarios.coefficients(spec)


def amplification_check(config: CurveConfig, threads: Optional[int] = None) -> AmplificationReport:
  """
  Per rho: exact amplification 1/(1 - rho^2) of the uncontrolled confounding bias in the
  adjusted X1 coefficient, next to the empirical (mean adjusted - c1)/(mean crude - c1).
  """
  k = _require_fig1b(config.scenario)
  if k["c2c3"] == 0:
    raise InvalidScenario("amplification is undefined without confounding through U' (c2c3 = 0)")

  points = []
  for rho in config.grid:
    spec = config.scenario.with_param("rho", rho)
    exact = 1.0 / (1.0 - rho * rho)
    if config.replicates == 0:
      points.append(AmplificationPoint(rho=rho, exact_ratio=exact, empirical_ratio=None))
      continue
    report = run_experiment(
      ExperimentConfig(
        scenario=spec, method=config.method, n=config.n, replicates=config.replicates,
        seed=config.seed, truth={"crude_beta1": "c1", "adjusted_beta1": "c1"},
      ),
      threads=threads,
    )
    crude = report.summary("crude_beta1").mean
    adjusted = report.summary("adjusted_beta1").mean
    points.append(AmplificationPoint(
      rho=rho,
      exact_ratio=exact,
      empirical_ratio=(adjusted - k["c1"]) / (crude - k["c1"]),
      mean_crude_beta1=crude,
      mean_adjusted_beta1=adjusted,
    ))
  return AmplificationReport(scenario=config.scenario, c1=k["c1"], c2c3=k["c2c3"], points=points)


def psi_bias_curve(config: CurveConfig, threads: Optional[int] = None) -> SweepResult:
  """Bias of psi_hat against c1 across rho, with the exact c2c3 / (1 + rho) alongside."""
  _require_fig1b(config.scenario)
  points = []
  for rho in config.grid:
    spec = config.scenario.with_param("rho", rho)
    report = None
    if config.replicates > 0:
      logger.info("psi curve rho=%g", rho)
      report = run_experiment(
        ExperimentConfig(
          scenario=spec, method=config.method, n=config.n, replicates=config.replicates,
          seed=config.seed, truth={"psi": "c1"},
        ),
        threads=threads,
      )
    points.append(SweepPoint(
      value=rho,
      scenario=spec,
      oracle=scenarios.closed_form(spec),
      outcome_noise_variance=scenarios.build_model(spec).noise_variance[scenarios.OUTCOME],
      report=report,
    ))

  exact = [abs(scenarios.psi_oracle(p.scenario).psi_bias) for p in points]
  monotonicity = {"exact_abs_psi_bias": _direction(exact)}
  if config.replicates > 0:
    empirical = [abs(p.report.summary("psi").bias) for p in points]
    monotonicity["empirical_abs_psi_bias"] = _direction(empirical)
    nonnegative = [b for p, b in zip(points, empirical) if p.value >= 0]
    monotonicity["empirical_abs_psi_bias_nonnegative_rho"] = _direction(nonnegative)
    if 0.0 in config.grid and config.grid[0] < 0:
      at_zero = empirical[config.grid.index(0.0)]
      monotonicity["empirical_abs_psi_bias_most_negative_vs_zero"] = (
        "larger" if empirical[0] > at_zero else "not larger"
      )

  return SweepResult(
    parameter="rho",
    policy=SweepPolicy.FIX_CAUSAL,
    grid=list(config.grid),
    points=points,
    monotonicity=monotonicity,
    notes=["truth for psi is c1; exact bias is c2c3 / (1 + rho)"],
  )


# --- Reparameterization and variance checks ---

def run_equivalence(spec: ScenarioSpec, n: int = 1000, replicates: int = 10, seed: int = 0) -> EquivalenceReport:
  """
  Method-2 datasets from a fig1b scenario and from its fig1a reparameterization, seed by
  seed. Equal observed covariances give identical data and therefore identical fits.
  """
  fig1a = scenarios.reparam_1b_to_1a_spec(spec)
  cov_b = scenarios.observed_covariance(spec)
  cov_a = scenarios.observed_covariance(fig1a)
  difference = float(np.max(np.abs(cov_b.values - cov_a.values)))

  identical_data = identical_fits = 0
  for index in range(replicates):
    replicate_seed = mix_seed(seed, index)
    data_b = datagen.sample_method2(cov_b, n, replicate_seed, scenario=spec)
    data_a = datagen.sample_method2(cov_a, n, replicate_seed, scenario=fig1a)
    if np.array_equal(data_a.values, data_b.values):
      identical_data += 1
    fit_a = estimators.fit(data_a)
    fit_b = estimators.fit(data_b)
    if fit_a.exposures == fit_b.exposures and fit_a.psi_hat == fit_b.psi_hat:
      identical_fits += 1
  logger.info("equivalence: %d/%d identical datasets", identical_data, replicates)
  return EquivalenceReport(
    fig1b=spec,
    fig1a=fig1a,
    max_population_difference=difference,
    replicates=replicates,
    identical_datasets=identical_data,
    identical_fits=identical_fits,
  )


def variance_inflation(spec: ScenarioSpec, rho_low: float, rho_high: float, n: int = 1000,
                       replicates: int = 1000, seed: int = 0, method: GenMethod = GenMethod.METHOD1,
                       threads: Optional[int] = None) -> InflationReport:
  """
  Replicate SD of the adjusted X1 coefficient at two correlations with V(eps) held fixed.
  The exact SD ratio is sqrt((1 - rho_low^2) / (1 - rho_high^2)).
  """
  if spec.kind != "fig1a":
    raise UnsupportedScenario(f"variance inflation is checked on fig1a, got {spec.kind}")
  if rho_high <= rho_low:
    raise InvalidConfig(f"rho_high must exceed rho_low, got {rho_low} and {rho_high}")
  if replicates < 2:
    raise InvalidConfig("variance inflation needs at least 2 replicates")
  result = collinearity_sweep(
    SweepConfig(
      scenario=spec, grid=[rho_low, rho_high], hold="noise_variance",
      method=method, n=n, replicates=replicates, seed=seed,
    ),
    threads=threads,
  )
  low, high = (p.report.summary("adjusted_beta1").sd for p in result.points)
  return InflationReport(
    scenario=spec,
    rho_low=rho_low,
    rho_high=rho_high,
    sd_low=low,
    sd_high=high,
    empirical_ratio=high / low,
    exact_ratio=math.sqrt((1.0 - rho_low ** 2) / (1.0 - rho_high ** 2)),
  )
