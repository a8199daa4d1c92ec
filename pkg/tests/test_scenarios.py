import math

import numpy as np
import pytest
from pydantic import ValidationError

from mixlab.core.exceptions import (
  InfeasibleStandardization,
  InvalidConfig,
  UnsupportedScenario,
  ZeroRho,
)
from mixlab.schemas.schemas import ScenarioSpec
from mixlab.services import estimators, scenarios, sem_core


def oracle_tuple(oracle):
  return (oracle.crude_beta1, oracle.crude_beta2, oracle.adjusted_beta1, oracle.adjusted_beta2)


def moment_tuple(spec):
  cov = scenarios.observed_covariance(spec)
  adjusted = estimators.moment_ols(cov, "Y", ["X1", "X2"])
  return (
    estimators.moment_ols(cov, "Y", ["X1"])["X1"],
    estimators.moment_ols(cov, "Y", ["X2"])["X2"],
    adjusted["X1"],
    adjusted["X2"],
  )


# --- ScenarioSpec ---

def test_fig1c_is_an_alias_of_fig1a():
  spec = ScenarioSpec(kind="fig1c", params={"b1": 0.4, "b2": 0.2, "rho": 0.5})
  assert spec.kind == "fig1a"


@pytest.mark.parametrize("kind, params", [
  ("fig1a", {"b1": 0.4, "b2": 0.2, "rho": 1.0}),
  ("fig1a", {"b1": 0.4, "rho": 0.5}),
  ("fig1a", {"b1": 0.4, "b2": 0.2, "rho": 0.5, "c1": 0.1}),
  ("fig1b", {"c1": 0.3, "c2c3": 0.2, "c2": 0.4, "rho": 0.5}),
  ("fig2b", {"c1c2": 0.6, "c3": 0.7, "c4": 0.7}),
  ("fig1a", {"b1": 0.4, "b2": 0.2, "rho": 0.5, "noise_y": 1.0}),
])
def test_invalid_scenario_specs_are_rejected(kind, params):
  with pytest.raises(ValidationError):
    ScenarioSpec(kind=kind, params=params)


def test_fig2b_rho_is_the_sum_of_both_paths(fig2b_spec):
  assert fig2b_spec.rho == pytest.approx(0.2 + 0.3 * 0.4)


def test_with_param_replaces_product_factors():
  spec = ScenarioSpec(kind="fig1b", params={"c1": 0.3, "c2": 0.3, "c3": 0.5, "rho": 0.5})
  updated = spec.with_param("c2c3", 0.1)
  assert updated.params == {"c1": 0.3, "c2c3": 0.1, "rho": 0.5}
  assert spec.params["c2"] == 0.3


def test_with_param_can_release_the_outcome(fig1a_spec):
  released = fig1a_spec.with_param("noise_y", 0.5, standardize_outcome=False)
  assert not released.standardize_outcome
  restored = released.with_param("rho", 0.1, standardize_outcome=True)
  assert "noise_y" not in restored.params


# --- parameter_value ---

@pytest.mark.parametrize("expression, expected", [
  ("b1", 0.4),
  ("b1+b2", 0.6),
  ("b1 - b2", 0.2),
  ("-b2", -0.2),
  ("0", 0.0),
  ("rho + 1e-3", 0.501),
  ("b3", math.sqrt(0.5)),
])
def test_parameter_value(fig1a_spec, expression, expected):
  assert scenarios.parameter_value(fig1a_spec, expression) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("expression", ["c1", "b1 b2", "b1*2", "", "b1+"])
def test_parameter_value_rejects_bad_declarations(fig1a_spec, expression):
  with pytest.raises(InvalidConfig):
    scenarios.parameter_value(fig1a_spec, expression)


def test_parameter_value_knows_derived_products(fig1b_spec):
  assert scenarios.parameter_value(fig1b_spec, "c2c3") == pytest.approx(0.2)
  assert scenarios.parameter_value(fig1b_spec, "c2") == pytest.approx(math.sqrt(0.2))


# --- build_model ---

def test_build_model_fig1a_has_exposure_correlation_rho(fig1a_spec):
  cov = scenarios.observed_covariance(fig1a_spec)
  assert cov.entry("X1", "X2") == pytest.approx(0.5, abs=1e-12)
  np.testing.assert_allclose(np.diag(cov.values), 1.0, atol=1e-12)


def test_build_model_fig2b_reverse_causation(fig2b_spec):
  model = scenarios.build_model(fig2b_spec)
  assert {(e.source, e.target) for e in model.edges} >= {("Y", "X1"), ("Y", "X2")}
  cov = scenarios.observed_covariance(fig2b_spec)
  assert cov.entry("X1", "X2") == pytest.approx(0.32, abs=1e-12)


def test_build_model_fig1b_without_open_paths():
  spec = ScenarioSpec(kind="fig1b", params={"c1": 0.0, "c2": 0.0, "c3": 0.5, "rho": 0.3})
  cov = scenarios.observed_covariance(spec)
  assert cov.entry("X1", "Y") == pytest.approx(0.0, abs=1e-15)
  assert cov.entry("X2", "Y") == pytest.approx(0.0, abs=1e-15)


def test_build_model_latents_and_roles(fig2a_spec):
  model = scenarios.build_model(fig2a_spec)
  assert [v.name for v in model.variables if v.kind == "latent"] == ["U", "U'", "U''"]
  assert model.observed == ["X1", "X2", "Y"]
  assert [v.role for v in model.variables if v.kind == "observed"] == ["exposure", "exposure", "outcome"]


def test_build_model_rejects_infeasible_outcome():
  spec = ScenarioSpec(kind="fig1a", params={"b1": 0.9, "b2": 0.9, "rho": 0.99})
  with pytest.raises(InfeasibleStandardization):
    scenarios.build_model(spec)


def test_unstandardized_outcome_keeps_its_noise():
  spec = ScenarioSpec(
    kind="fig1a", params={"b1": 0.9, "b2": 0.9, "rho": 0.99, "noise_y": 0.5}, standardize_outcome=False,
  )
  v_y, v_eps = scenarios.outcome_variances(scenarios.build_model(spec))
  assert v_eps == 0.5
  assert v_y == pytest.approx(0.81 + 0.81 + 2 * 0.99 * 0.81 + 0.5, abs=1e-12)


# --- closed_form ---

def test_closed_form_fig1a(fig1a_spec):
  np.testing.assert_allclose(oracle_tuple(scenarios.closed_form(fig1a_spec)), (0.5, 0.4, 0.4, 0.2), atol=1e-15)


def test_closed_form_fig1a_uncorrelated():
  spec = ScenarioSpec(kind="fig1a", params={"b1": 0.4, "b2": 0.2, "rho": 0.0})
  oracle = scenarios.closed_form(spec)
  assert (oracle.crude_beta1, oracle.crude_beta2) == (oracle.adjusted_beta1, oracle.adjusted_beta2) == (0.4, 0.2)


def test_closed_form_fig1b(fig1b_spec):
  np.testing.assert_allclose(
    oracle_tuple(scenarios.closed_form(fig1b_spec)), (0.5, 0.15, 0.3 + 0.2 / 0.75, -0.1 / 0.75), atol=1e-15,
  )
  assert scenarios.closed_form(fig1b_spec).adjusted_beta1 == pytest.approx(0.56667, abs=1e-5)


def test_closed_form_fig2a(fig2a_spec):
  oracle = scenarios.closed_form(fig2a_spec)
  np.testing.assert_allclose(oracle_tuple(oracle), (0.3, 0.2, 0.2 / 0.75, 0.05 / 0.75), atol=1e-15)
  assert oracle.tabulated


def test_closed_form_fig2b_is_derived(fig2b_spec):
  oracle = scenarios.closed_form(fig2b_spec)
  assert not oracle.tabulated
  np.testing.assert_allclose(oracle_tuple(oracle), moment_tuple(fig2b_spec), atol=1e-12)


def _random_specs(kind, count, seed):
  rng = np.random.default_rng(seed)
  specs = []
  while len(specs) < count:
    if kind == "fig1a":
      params = {"b1": rng.uniform(-0.6, 0.6), "b2": rng.uniform(-0.6, 0.6), "rho": rng.uniform(-0.9, 0.9)}
    elif kind == "fig1b":
      params = {"c1": rng.uniform(-0.5, 0.5), "c2": rng.uniform(-0.6, 0.6), "c3": rng.uniform(-0.6, 0.6),
                "rho": rng.uniform(-0.7, 0.7)}
    elif kind == "fig2a":
      params = {f"c{i}": rng.uniform(-0.7, 0.7) for i in range(1, 7)}
    else:
      params = {f"c{i}": rng.uniform(-0.6, 0.6) for i in range(1, 5)}
    try:
      spec = ScenarioSpec(kind=kind, params=params)
      scenarios.build_model(spec)
    except (ValidationError, InfeasibleStandardization):
      continue
    specs.append(spec)
  return specs


@pytest.mark.parametrize("kind", ["fig1a", "fig1b", "fig2a", "fig2b"])
def test_closed_form_equals_moment_ols_on_implied_covariance(kind):
  for spec in _random_specs(kind, 200, seed=sum(map(ord, kind))):
    np.testing.assert_allclose(oracle_tuple(scenarios.closed_form(spec)), moment_tuple(spec), atol=1e-10, rtol=0)


@pytest.mark.parametrize("rho", [-0.6, -0.2, 0.1, 0.5, 0.7])
@pytest.mark.parametrize("c2c3", [-0.15, 0.05, 0.2])
def test_amplification_law(rho, c2c3):
  spec = ScenarioSpec(kind="fig1b", params={"c1": 0.3, "c2c3": c2c3, "rho": rho})
  oracle = scenarios.closed_form(spec)
  ratio = (oracle.adjusted_beta1 - 0.3) / (oracle.crude_beta1 - 0.3)
  assert ratio == pytest.approx(1.0 / (1.0 - rho ** 2), rel=1e-12)


def test_sign_flip_with_positive_paths():
  spec = ScenarioSpec(kind="fig1b", params={"c1": 0.3, "c2": 0.4, "c3": 0.5, "rho": 0.3})
  oracle = scenarios.closed_form(spec)
  assert oracle.crude_beta2 > 0
  assert oracle.adjusted_beta2 < 0


@pytest.mark.parametrize("kind, params, parameter", [
  ("fig2a", {"rho": 0.0, "c3c4": 0.3, "c5c6": 0.2}, "rho"),
  ("fig2b", {"c1c2": 0.0, "c3": 0.3, "c4": 0.2}, "c1c2"),
])
def test_crude_coefficients_insulated_from_exposure_correlation(kind, params, parameter):
  spec = ScenarioSpec(kind=kind, params=params)
  crude = set()
  for value in (0.0, 0.2, 0.4, 0.6):
    oracle = scenarios.closed_form(spec.with_param(parameter, value))
    cov = scenarios.observed_covariance(spec.with_param(parameter, value))
    crude.add((round(oracle.crude_beta1, 14), round(oracle.crude_beta2, 14)))
    assert cov.entry("X1", "Y") == pytest.approx(oracle.crude_beta1, abs=1e-12)
  assert len(crude) == 1


# --- psi oracle ---

def test_psi_oracle_fig1b(fig1b_spec):
  psi = scenarios.psi_oracle(fig1b_spec)
  assert psi.psi_true == 0.3
  assert psi.psi_expected == pytest.approx(0.3 + 0.2 / 1.5, abs=1e-15)
  assert psi.psi_bias == pytest.approx(0.13333, abs=1e-5)


def test_psi_oracle_fig1b_uncorrelated_keeps_full_confounding():
  psi = scenarios.psi_oracle(ScenarioSpec(kind="fig1b", params={"c1": 0.3, "c2c3": 0.2, "rho": 0.0}))
  assert psi.psi_expected == pytest.approx(0.5)
  assert psi.psi_bias == pytest.approx(0.2)


def test_psi_oracle_fig1a(fig1a_spec):
  psi = scenarios.psi_oracle(fig1a_spec)
  assert psi.psi_true == psi.psi_expected == pytest.approx(0.6)
  assert psi.psi_bias == 0.0


def test_psi_oracle_unsupported(fig2a_spec):
  with pytest.raises(UnsupportedScenario):
    scenarios.psi_oracle(fig2a_spec)


@pytest.mark.parametrize("c2c3", [0.05, 0.2])
def test_psi_bias_shrinks_in_magnitude_as_rho_grows(c2c3):
  grid = np.linspace(-0.9, 0.9, 19)
  biases = [
    abs(scenarios.psi_oracle(ScenarioSpec(kind="fig1b", params={"c1": 0.3, "c2c3": c2c3, "rho": r})).psi_bias)
    for r in grid
  ]
  assert all(b > a for a, b in zip(biases[1:], biases[:-1]))


# --- reparameterization ---

def test_reparam_1b_to_1a(fig1b_spec):
  params = scenarios.reparam_1b_to_1a(fig1b_spec)
  assert params.b1 == pytest.approx(0.56667, abs=1e-5)
  assert params.b2 == pytest.approx(-0.13333, abs=1e-5)
  assert params.rho == 0.5


def test_reparam_1b_to_1a_without_confounding():
  params = scenarios.reparam_1b_to_1a(ScenarioSpec(kind="fig1b", params={"c1": 0.3, "c2c3": 0.0, "rho": 0.5}))
  assert (params.b1, params.b2) == (0.3, 0.0)


def test_reparam_round_trip(fig1b_spec):
  params = scenarios.reparam_1b_to_1a(fig1b_spec)
  products = scenarios.reparam_1a_to_1b(*params)
  assert products.c1 == pytest.approx(0.3, abs=1e-12)
  assert products.c2c3 == pytest.approx(0.2, abs=1e-12)
  assert scenarios.reparam_1a_to_1b(0.5, 0.0, 0.5)[:2] == (0.5, 0.0)


def test_reparam_1a_to_1b_needs_correlation():
  with pytest.raises(ZeroRho):
    scenarios.reparam_1a_to_1b(0.4, 0.2, 0.0)


def test_reparameterized_dags_share_observed_covariance(fig1b_spec):
  fig1a = scenarios.reparam_1b_to_1a_spec(fig1b_spec)
  np.testing.assert_allclose(
    scenarios.observed_covariance(fig1a).values, scenarios.observed_covariance(fig1b_spec).values, atol=1e-12,
  )


def test_reparameterized_dags_match_outcome_variance_when_unstandardized():
  spec = ScenarioSpec(kind="fig1b", params={"c1": 0.3, "c2c3": 0.2, "rho": 0.5, "noise_y": 2.0},
                      standardize_outcome=False)
  fig1a = scenarios.reparam_1b_to_1a_spec(spec)
  np.testing.assert_allclose(
    scenarios.observed_covariance(fig1a).values, scenarios.observed_covariance(spec).values, atol=1e-12,
  )


def test_fixed_crude_inversions():
  params = scenarios.fig1a_from_crude(0.5, 0.4, 0.5)
  assert (params.b1, params.b2) == pytest.approx((0.4, 0.2), abs=1e-15)
  products = scenarios.fig1b_from_crude(0.5, 0.15, 0.5)
  assert (products.c1, products.c2c3) == pytest.approx((0.3, 0.2), abs=1e-15)
  with pytest.raises(ZeroRho):
    scenarios.fig1b_from_crude(0.5, 0.15, 0.0)
