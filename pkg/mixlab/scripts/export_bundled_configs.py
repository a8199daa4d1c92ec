import logging
from pathlib import Path

from pydantic import BaseModel

from mixlab.schemas.schemas import (
  CovarianceInput,
  CurveConfig,
  ExperimentConfig,
  GenMethod,
  ScenarioSpec,
  SimulateConfig,
  SweepConfig,
  SweepPolicy,
)
from mixlab.services.reports import atomic_write_text

logger = logging.getLogger(__name__)

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"
SEED = 20240611

FIG1A = ScenarioSpec(kind="fig1a", params={"b1": 0.4, "b2": 0.2, "rho": 0.5})
FIG1B = ScenarioSpec(kind="fig1b", params={"c1": 0.3, "c2c3": 0.2, "rho": 0.5})
FIG2A = ScenarioSpec(kind="fig2a", params={"rho": 0.3, "c3c4": 0.3, "c5c6": 0.2})
FIG2B = ScenarioSpec(kind="fig2b", params={"c1c2": 0.2, "c3": 0.3, "c4": 0.2})
# Neither exposure causes Y in the fig2 scenarios
NULL_TRUTH = {"adjusted_beta1": "0", "adjusted_beta2": "0", "psi": "0"}

# c2*c3 = 0.2 split so X1 stays standardizable at rho = 0.9
FIG1B_HIGH_RHO = ScenarioSpec(kind="fig1b", params={"c1": 0.3, "c2": 0.3, "c3": 2.0 / 3.0, "rho": 0.0})


def bundled_configs() -> dict:
  """File name -> config for every bundled JSON document."""
  return {
    "fig1a_oracle.json": FIG1A,
    "fig1b_oracle.json": FIG1B,
    "fig1a_simulate.json": SimulateConfig(scenario=FIG1A, method=GenMethod.METHOD2, n=100, seed=7),
    "fig2b_simulate.json": SimulateConfig(scenario=FIG2B, method=GenMethod.METHOD1, n=1000, seed=7),
    "covariance_simulate.json": SimulateConfig(
      covariance=CovarianceInput(
        names=["X1", "X2", "Y"],
        matrix=[[1.0, 0.5, 0.5], [0.5, 1.0, 0.4], [0.5, 0.4, 1.0]],
      ),
      method=GenMethod.METHOD2, n=1000, seed=7,
    ),
    "fig1a_verify.json": ExperimentConfig(
      scenario=FIG1A, n=1000, replicates=1000, seed=SEED,
      truth={"adjusted_beta1": "b1", "adjusted_beta2": "b2", "psi": "b1+b2"},
    ),
    "fig1b_verify.json": ExperimentConfig(
      scenario=FIG1B, n=1000, replicates=1000, seed=SEED,
      truth={"crude_beta1": "c1", "adjusted_beta1": "c1", "adjusted_beta2": "0", "psi": "c1"},
    ),
    "fig2a_verify.json": ExperimentConfig(scenario=FIG2A, n=1000, replicates=1000, seed=SEED, truth=NULL_TRUTH),
    "fig2b_verify.json": ExperimentConfig(
      scenario=FIG2B, method=GenMethod.METHOD2, n=1000, replicates=1000, seed=SEED, truth=NULL_TRUTH,
    ),
    "fig1a_sweep_fix_causal.json": SweepConfig(
      scenario=FIG1A, grid=[0.0, 0.3, 0.6, 0.9], policy=SweepPolicy.FIX_CAUSAL,
      n=1000, replicates=1000, seed=SEED, truth={"adjusted_beta1": "b1", "adjusted_beta2": "b2"},
    ),
    "fig2a_sweep_fix_crude.json": SweepConfig(
      scenario=FIG2A, grid=[0.0, 0.3, 0.6], policy=SweepPolicy.FIX_CRUDE,
      n=1000, replicates=1000, seed=SEED,
    ),
    # Needs --acknowledge-reversal; implied b1 rises and b2 falls across this grid
    "fig1a_sweep_reversal.json": SweepConfig(
      scenario=FIG1A, grid=[0.5, 0.55, 0.6, 0.65, 0.7], policy=SweepPolicy.FIX_CRUDE,
      fixed_crude=(0.5, 0.4), n=1000, replicates=200, seed=SEED, truth={"adjusted_beta1": "b1"},
    ),
    "fig1b_amplify.json": CurveConfig(scenario=FIG1B, grid=[0.0, 0.3, 0.5, 0.6], n=1000, replicates=1000, seed=SEED),
    "fig1b_psi_curve.json": CurveConfig(
      scenario=FIG1B_HIGH_RHO, grid=[-0.5, 0.0, 0.5, 0.9], n=1000, replicates=1000, seed=SEED,
    ),
  }


def export_configs(directory: Path = CONFIG_DIR):
  for name, config in bundled_configs().items():
    text = config.model_dump_json(indent=2, by_alias=True, exclude_none=True) + "\n"
    atomic_write_text(Path(directory) / name, text)
    logger.info("Wrote %s", name)


if __name__ == "__main__":
  logging.basicConfig(level=logging.INFO)
  export_configs()
