import logging
import os
import tempfile
from pathlib import Path
from typing import List, Optional

import pandas as pd
from pydantic import BaseModel

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
  "grid_value", "estimand", "mean", "sd", "mcse", "truth", "bias", "exact_expectation", "exact_bias",
]


def atomic_write_text(path: Path, text: str) -> Path:
  """Write via a temp file in the same directory and rename over the target."""
  path = Path(path)
  path.parent.mkdir(parents=True, exist_ok=True)
  fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
  try:
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
      handle.write(text)
    os.replace(tmp, path)
  except BaseException:
    if os.path.exists(tmp):
      os.unlink(tmp)
    raise
  return path


def to_json(model: BaseModel) -> str:
  # pydantic emits the shortest round-trip representation of floats
  return model.model_dump_json(indent=2, by_alias=True) + "\n"


def frame_to_csv(frame: pd.DataFrame) -> str:
  return frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")


def frame_to_text(frame: pd.DataFrame) -> str:
  """Aligned columns for people; floats to 6 significant digits."""
  return frame.to_string(index=False, float_format=lambda x: f"{x:.6g}", na_rep="-") + "\n"


# --- Bias reports ---

def bias_report_frame(report) -> pd.DataFrame:
  rows = [item.model_dump() for item in report.estimands]
  columns = [
    "estimand", "mean", "sd", "mcse", "truth", "truth_source", "bias",
    "expected", "expected_source", "bias_vs_expected", "gate_passed",
  ]
  return pd.DataFrame(rows, columns=columns)


def bias_report_text(report) -> str:
  spec = report.scenario
  params = ", ".join(f"{k}={v:g}" for k, v in spec.params.items())
  lines = [
    f"scenario {spec.kind} ({params}), method {report.method.value}, n={report.n}, "
    f"R={report.replicates}, seed={report.seed}",
    f"used replicates {report.used_replicates}, excluded {report.excluded_replicates}; "
    f"V(Y)={report.outcome_variance:.6g}, V(eps)={report.outcome_noise_variance:.6g}",
  ]
  if not report.sd_defined:
    lines.append("SD undefined for a single replicate")
  text = "\n".join(lines) + "\n" + frame_to_text(bias_report_frame(report))
  for note in report.notes:
    text += f"note: {note}\n"
  return text


# --- Sweeps ---

def sweep_frame(result) -> pd.DataFrame:
  """One row per (grid value, estimand)."""
  rows = []
  for point in result.points:
    if point.report is None:
      continue
    for item in point.report.estimands:
      exact_bias = None
      if item.expected is not None and item.truth is not None:
        exact_bias = item.expected - item.truth
      rows.append({
        "grid_value": point.value,
        "estimand": item.estimand,
        "mean": item.mean,
        "sd": item.sd,
        "mcse": item.mcse,
        "truth": item.truth,
        "bias": item.bias,
        "exact_expectation": item.expected,
        "exact_bias": exact_bias,
      })
  return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def sweep_oracle_frame(result) -> pd.DataFrame:
  """Per grid point: closed-form coefficients, V(eps) and implied causal coefficients."""
  rows = []
  for point in result.points:
    row = {"grid_value": point.value, "rho": point.oracle.rho}
    row.update({
      "crude_beta1": point.oracle.crude_beta1,
      "crude_beta2": point.oracle.crude_beta2,
      "adjusted_beta1": point.oracle.adjusted_beta1,
      "adjusted_beta2": point.oracle.adjusted_beta2,
      "noise_variance_y": point.outcome_noise_variance,
    })
    for name, value in (point.implied_causal or {}).items():
      row[f"implied_{name}"] = value
    rows.append(row)
  return pd.DataFrame(rows)


def sweep_text(result) -> str:
  text = f"sweep over {result.parameter} ({result.policy.value})\n"
  text += frame_to_text(sweep_oracle_frame(result))
  frame = sweep_frame(result)
  if not frame.empty:
    text += "\n" + frame_to_text(frame)
  for name, direction in result.monotonicity.items():
    text += f"{name}: {direction}\n"
  for note in result.notes:
    text += f"note: {note}\n"
  return text


# --- Amplification ---

def amplification_frame(report) -> pd.DataFrame:
  rows = [
    {
      "grid_value": p.rho,
      "exact_ratio": p.exact_ratio,
      "empirical_ratio": p.empirical_ratio,
      "mean_crude_beta1": p.mean_crude_beta1,
      "mean_adjusted_beta1": p.mean_adjusted_beta1,
    }
    for p in report.points
  ]
  return pd.DataFrame(rows)


def amplification_text(report) -> str:
  header = f"amplification of uncontrolled confounding, c1={report.c1:g}, c2c3={report.c2c3:g}\n"
  return header + frame_to_text(amplification_frame(report))


# --- Psi bias curve ---

def psi_curve_frame(result) -> pd.DataFrame:
  """One row per grid value for the psi estimand; exact columns filled even without replicates."""
  rows = []
  for point in result.points:
    truth = point.scenario.params["c1"]
    exact = point.oracle.adjusted_beta1 + point.oracle.adjusted_beta2
    row = {
      "grid_value": point.value, "estimand": "psi", "mean": None, "sd": None, "mcse": None,
      "truth": truth, "bias": None, "exact_expectation": exact, "exact_bias": exact - truth,
    }
    if point.report is not None:
      item = point.report.summary("psi")
      row.update(mean=item.mean, sd=item.sd, mcse=item.mcse, bias=item.bias)
    rows.append(row)
  return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


# --- Oracle ---

def oracle_frame(oracle) -> pd.DataFrame:
  return pd.DataFrame(
    [
      {"estimate": "crude", "beta1": oracle.crude_beta1, "beta2": oracle.crude_beta2},
      {"estimate": "mutually_adjusted", "beta1": oracle.adjusted_beta1, "beta2": oracle.adjusted_beta2},
    ],
    columns=["estimate", "beta1", "beta2"],
  )


# --- Output bundles ---

def write_bundle(directory: Path, stem: str, model: BaseModel, frame: Optional[pd.DataFrame],
                 text: str) -> List[Path]:
  """Write <stem>.json, <stem>.csv (when a frame is given) and <stem>.txt."""
  directory = Path(directory)
  paths = [atomic_write_text(directory / f"{stem}.json", to_json(model))]
  if frame is not None:
    paths.append(atomic_write_text(directory / f"{stem}.csv", frame_to_csv(frame)))
  paths.append(atomic_write_text(directory / f"{stem}.txt", text))
  for path in paths:
    logger.info("Wrote %s", path)
  return paths


# --- Run ledger ---

def history_frame(records) -> pd.DataFrame:
  columns = ["id", "created_date", "command", "exit_code", "config_path", "output_dir", "message"]
  return pd.DataFrame([r.model_dump() for r in records], columns=columns)
