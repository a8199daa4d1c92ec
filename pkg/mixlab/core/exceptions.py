# --- Error hierarchy ---
# Every error carries the process exit code the CLI reports for it.

EXIT_OK = 0
EXIT_GATE_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class MixlabError(Exception):
  exit_code = EXIT_CONFIG


# --- Config / specification errors (exit 2) ---

class InvalidConfig(MixlabError):
  pass


class InvalidScenario(MixlabError):
  pass


class DuplicateName(MixlabError):
  pass


class UnknownVariable(MixlabError):
  pass


class MissingNoiseVariance(MixlabError):
  pass


class SelfLoop(MixlabError):
  pass


class DuplicateEdge(MixlabError):
  pass


class CycleError(MixlabError):
  def __init__(self, cycle):
    self.cycle = list(cycle)
    path = " -> ".join([src for src, _ in self.cycle] + [self.cycle[0][0]]) if self.cycle else "?"
    super().__init__(f"edge set is not acyclic: {path}")


class NegativeNoiseVariance(MixlabError):
  def __init__(self, variable: str, value: float):
    self.variable = variable
    self.value = value
    super().__init__(f"noise variance of {variable!r} must be >= 0, got {value!r}")


class InfeasibleStandardization(MixlabError):
  def __init__(self, variable: str, required: float):
    self.variable = variable
    self.required = required
    super().__init__(
      f"standardizing {variable!r} to unit variance needs noise variance {required:.6g} < 0"
    )


class ZeroRho(MixlabError):
  pass


class UnsupportedScenario(MixlabError):
  pass


class PolicyScenarioMismatch(MixlabError):
  pass


class QTooLargeForN(MixlabError):
  def __init__(self, q: int, n: int):
    self.q = q
    self.n = n
    super().__init__(f"cannot form q={q} quantile bins from n={n} rows")


class InsufficientData(MixlabError):
  pass


# --- Numerical errors (exit 3) ---

class NotPositiveDefinite(MixlabError):
  exit_code = EXIT_NUMERICAL

  def __init__(self, pivot: int, names=None):
    self.pivot = pivot
    label = f" ({names[pivot]})" if names is not None and pivot < len(names) else ""
    super().__init__(f"covariance matrix is not positive definite: pivot {pivot}{label} is not positive")


class SingularDesign(MixlabError):
  exit_code = EXIT_NUMERICAL

  def __init__(self, condition: float, regressors=None):
    self.condition = condition
    self.regressors = list(regressors or [])
    super().__init__(
      f"regressor covariance of {self.regressors} is singular (condition number {condition:.3g} > 1e12)"
    )
