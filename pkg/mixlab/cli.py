"""
mixlab command line.

  mixlab <command> --config <path> [--seed N] [--n N] [--replicates R] [--out DIR]
                   [--format csv|json|text] [--acknowledge-reversal]

Exit codes: 0 success, 1 a verification gate failed, 2 config or scenario error,
3 numerical failure (covariance not positive definite, singular design).
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import ValidationError

from mixlab.core.config import get_settings
from mixlab.core.exceptions import EXIT_CONFIG, EXIT_GATE_FAILED, EXIT_OK, InvalidConfig, MixlabError, ZeroRho
from mixlab.schemas.schemas import (
  CurveConfig,
  ExperimentConfig,
  OracleReport,
  ScenarioSpec,
  SimulateConfig,
  SweepConfig,
)
from mixlab.services import datagen, harness, ledger, reports, scenarios, sem_core
from mixlab.services.sem_core import CovarianceMatrix

logger = logging.getLogger("mixlab")

COMMANDS = ("simulate", "verify", "sweep", "amplify", "psi-curve", "oracle", "history")


def parse_args(argv=None) -> argparse.Namespace:
  parser = argparse.ArgumentParser(prog="mixlab", description="Mixture exposure SEM simulation lab.")
  parser.add_argument("command", choices=COMMANDS)
  parser.add_argument("--config", help="JSON config file")
  parser.add_argument("--seed", type=int)
  parser.add_argument("--n", type=int)
  parser.add_argument("--replicates", type=int)
  parser.add_argument("--out", help="output directory (default MIXLAB_OUTPUT_DIR)")
  parser.add_argument("--format", choices=("csv", "json", "text"), default="text", help="what to print on stdout")
  parser.add_argument("--acknowledge-reversal", action="store_true",
                      help="allow fix_crude sweeps of fig1a/fig1b and report the implied causal coefficients")
  parser.add_argument("--limit", type=int, default=20, help="history: number of runs to list")
  return parser.parse_args(argv)


def load_config(path: Optional[str]) -> Dict[str, Any]:
  if not path:
    raise InvalidConfig("--config is required for this command")
  config_path = Path(path)
  if not config_path.exists():
    raise InvalidConfig(f"config file not found: {config_path}")
  try:
    data = json.loads(config_path.read_text(encoding="utf-8"))
  except json.JSONDecodeError as e:
    raise InvalidConfig(f"{config_path} is not valid JSON: {e}")
  if not isinstance(data, dict):
    raise InvalidConfig(f"{config_path} must hold a JSON object")
  return data


def apply_cli_overrides(cfg: Dict[str, Any], args: argparse.Namespace, defaults: bool = True) -> Dict[str, Any]:
  """Command line flags win over the file; unset sizes fall back to the environment defaults."""
  out = dict(cfg)
  settings = get_settings()
  if args.seed is not None:
    out["seed"] = args.seed
  if args.n is not None:
    out["n"] = args.n
  elif defaults:
    out.setdefault("n", settings.default_n)
  if args.replicates is not None:
    out["replicates"] = args.replicates
  elif defaults:
    out.setdefault("replicates", settings.default_replicates)
  if args.acknowledge_reversal:
    out["acknowledge_reversal"] = True
  return out


def _emit(args: argparse.Namespace, model, frame, text: str):
  if args.format == "json":
    sys.stdout.write(reports.to_json(model))
  elif args.format == "csv":
    sys.stdout.write(reports.frame_to_csv(frame))
  else:
    sys.stdout.write(text)


# --- Commands ---

def cmd_oracle(args: argparse.Namespace) -> int:
  cfg = load_config(args.config)
  spec = ScenarioSpec.model_validate(cfg.get("scenario", cfg))
  model = scenarios.build_model(spec)
  coefficients = scenarios.closed_form(spec)
  v_y, v_eps = scenarios.outcome_variances(model)

  notes = []
  psi = scenarios.psi_oracle(spec) if spec.kind in ("fig1a", "fig1b") else None
  reparameterized = None
  if spec.kind == "fig1b":
    reparameterized = scenarios.reparam_1b_to_1a(spec)._asdict()
  elif spec.kind == "fig1a":
    try:
      reparameterized = scenarios.reparam_1a_to_1b(spec.params["b1"], spec.params["b2"], spec.rho)._asdict()
    except ZeroRho as e:
      notes.append(str(e))
  if not coefficients.tabulated:
    notes.append("adjusted values solve the two-regressor normal equations; no tabulated closed form")

  report = OracleReport(
    scenario=spec,
    coefficients=coefficients,
    psi=psi,
    reparameterized=reparameterized,
    outcome_variance=v_y,
    outcome_noise_variance=v_eps,
    notes=notes,
  )
  frame = reports.oracle_frame(coefficients)
  text = f"scenario {spec.kind}, rho={coefficients.rho:g}, V(Y)={v_y:.6g}, V(eps)={v_eps:.6g}\n"
  text += reports.frame_to_text(frame)
  if psi is not None:
    text += f"psi: true {psi.psi_true:.6g}, expected {psi.psi_expected:.6g}, bias {psi.psi_bias:.6g}\n"
  if reparameterized:
    target = "fig1a" if spec.kind == "fig1b" else "fig1b"
    text += f"{target} equivalent: " + ", ".join(f"{k}={v:.6g}" for k, v in reparameterized.items()) + "\n"
  for note in notes:
    text += f"note: {note}\n"
  _emit(args, report, frame, text)
  return EXIT_OK


def cmd_simulate(args: argparse.Namespace, out_dir: Path) -> int:
  cfg = apply_cli_overrides(load_config(args.config), args, defaults=False)
  cfg.setdefault("n", get_settings().default_n)
  config = SimulateConfig.model_validate(cfg)

  if config.covariance is not None:
    data = datagen.sample_method2(CovarianceMatrix.from_input(config.covariance), config.n, config.seed)
  elif config.scenario is not None:
    data = datagen.sample(config.method, scenarios.build_model(config.scenario), config.n, config.seed,
                          scenario=config.scenario, exposures=config.exposures)
  else:
    data = datagen.sample(config.method, sem_core.validate(config.model), config.n, config.seed,
                          exposures=config.exposures)

  csv_path, json_path = datagen.write_dataset(data, out_dir)
  text = f"{data.n} rows of {', '.join(data.names)} ({config.method.value}, seed {config.seed})\n"
  text += f"wrote {csv_path} and {json_path}\n"
  _emit(args, data.provenance, data.to_frame(), text)
  return EXIT_OK


def cmd_verify(args: argparse.Namespace, out_dir: Path) -> int:
  config = ExperimentConfig.model_validate(apply_cli_overrides(load_config(args.config), args))
  report = harness.run_experiment(config)
  frame = reports.bias_report_frame(report)
  text = reports.bias_report_text(report)
  reports.write_bundle(out_dir, "bias_report", report, frame, text)
  _emit(args, report, frame, text)
  if not report.gates_passed:
    logger.warning("verification failed: at least one estimand is outside its gate")
    return EXIT_GATE_FAILED
  return EXIT_OK


def cmd_sweep(args: argparse.Namespace, out_dir: Path) -> int:
  config = SweepConfig.model_validate(apply_cli_overrides(load_config(args.config), args))
  result = harness.collinearity_sweep(config)
  frame = reports.sweep_frame(result)
  oracle = reports.sweep_oracle_frame(result)
  text = reports.sweep_text(result)
  reports.write_bundle(out_dir, "sweep", result, frame, text)
  reports.atomic_write_text(out_dir / "sweep_exact.csv", reports.frame_to_csv(oracle))
  _emit(args, result, frame if not frame.empty else oracle, text)
  return EXIT_OK


def cmd_amplify(args: argparse.Namespace, out_dir: Path) -> int:
  config = CurveConfig.model_validate(apply_cli_overrides(load_config(args.config), args))
  report = harness.amplification_check(config)
  frame = reports.amplification_frame(report)
  text = reports.amplification_text(report)
  reports.write_bundle(out_dir, "amplification", report, frame, text)
  _emit(args, report, frame, text)
  return EXIT_OK


def cmd_psi_curve(args: argparse.Namespace, out_dir: Path) -> int:
  config = CurveConfig.model_validate(apply_cli_overrides(load_config(args.config), args))
  result = harness.psi_bias_curve(config)
  frame = reports.psi_curve_frame(result)
  text = reports.sweep_text(result) if config.replicates else ""
  text = "psi bias curve\n" + reports.frame_to_text(frame) + text
  reports.write_bundle(out_dir, "psi_curve", result, frame, text)
  _emit(args, result, frame, text)
  return EXIT_OK


def cmd_history(args: argparse.Namespace) -> int:
  records = ledger.list_runs(limit=args.limit)
  if args.format == "json":
    sys.stdout.write(json.dumps([r.model_dump(mode="json") for r in records], indent=2) + "\n")
    return EXIT_OK
  frame = reports.history_frame(records)
  sys.stdout.write(reports.frame_to_csv(frame) if args.format == "csv" else reports.frame_to_text(frame))
  return EXIT_OK


def run(args: argparse.Namespace) -> int:
  if args.command == "oracle":
    return cmd_oracle(args)
  if args.command == "history":
    return cmd_history(args)
  out_dir = Path(args.out or get_settings().output_dir)
  handlers = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "amplify": cmd_amplify,
    "psi-curve": cmd_psi_curve,
  }
  return handlers[args.command](args, out_dir)


def main(argv=None) -> int:
  args = parse_args(argv)
  try:
    settings = get_settings()
    level = settings.log_level
  except MixlabError as e:
    print(f"error: {e}", file=sys.stderr)
    return e.exit_code
  logging.basicConfig(level=level, stream=sys.stderr, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

  message = None
  try:
    code = run(args)
  except MixlabError as e:
    message = f"{type(e).__name__}: {e}"
    code = e.exit_code
  except ValidationError as e:
    message = f"invalid config: {e}"
    code = EXIT_CONFIG
  if message:
    logger.error(message)
    print(f"error: {message}", file=sys.stderr)

  if args.command != "history":
    config_json = None
    if args.config and Path(args.config).exists():
      config_json = Path(args.config).read_text(encoding="utf-8")
    ledger.record_run(
      command=args.command,
      exit_code=code,
      config_path=args.config,
      config_json=config_json,
      output_dir=args.out or (None if args.command == "oracle" else settings.output_dir),
      message=message,
    )
  return code


if __name__ == "__main__":
  sys.exit(main())
