import itertools

import networkx as nx
import numpy as np
import pytest

from mixlab.core.config import get_settings
from mixlab.schemas.schemas import LinearSEM, ScenarioSpec, StructuralEdge, VariableDecl

# Philox4x64-10 keyed by SeedSequence(7); first eight 64-bit outputs and their 52-bit integers
PHILOX7_KEY = [0xEAD0F7017C326E58, 0x0879C4F0F97E037A]
PHILOX7_RAW = [
  8648156199155761070, 7861003179181181637, 6695830538717239923, 4378406814369071462,
  2559217609339410627, 9444483039059783732, 5584984508507347152, 18187569314606432294,
]
PHILOX7_K52 = [
  2111366259559511, 1919190229292280, 1634724252616513, 1068946976164324,
  624808986655129, 2305781991957955, 1363521608522301, 4440324539698836,
]


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
  monkeypatch.setenv("MIXLAB_THREADS", "2")
  monkeypatch.setenv("MIXLAB_OUTPUT_DIR", str(tmp_path / "results"))
  monkeypatch.delenv("MIXLAB_DATABASE_URL", raising=False)
  monkeypatch.delenv("MIXLAB_DEFAULT_N", raising=False)
  monkeypatch.delenv("MIXLAB_DEFAULT_REPLICATES", raising=False)
  monkeypatch.delenv("MIXLAB_LOG_LEVEL", raising=False)
  get_settings.cache_clear()
  yield
  get_settings.cache_clear()


@pytest.fixture
def fig1a_spec():
  return ScenarioSpec(kind="fig1a", params={"b1": 0.4, "b2": 0.2, "rho": 0.5})


@pytest.fixture
def fig1b_spec():
  return ScenarioSpec(kind="fig1b", params={"c1": 0.3, "c2c3": 0.2, "rho": 0.5})


@pytest.fixture
def fig2a_spec():
  return ScenarioSpec(kind="fig2a", params={"rho": 0.5, "c3c4": 0.3, "c5c6": 0.2})


@pytest.fixture
def fig2b_spec():
  return ScenarioSpec(kind="fig2b", params={"c1c2": 0.2, "c3": 0.3, "c4": 0.4})


def make_model(variables, edges, noise, offset=None) -> LinearSEM:
  """variables: (name, kind) pairs; edges: (from, to, coef) triples."""
  return LinearSEM(
    variables=[VariableDecl(name=name, kind=kind) for name, kind in variables],
    edges=[StructuralEdge(source=s, target=t, coefficient=c) for s, t, c in edges],
    noise_variance=noise,
    offset=offset or {},
  )


def path_traced_covariance(model: LinearSEM) -> np.ndarray:
  """
  Covariance by enumerating directed paths: cov(i, j) = sum_k w_k * T(k, i) * T(k, j),
  where T(k, i) sums coefficient products over every directed path k -> i.
  """
  graph = nx.DiGraph()
  graph.add_nodes_from(model.names)
  weights = {}
  for edge in model.edges:
    graph.add_edge(edge.source, edge.target)
    weights[(edge.source, edge.target)] = edge.coefficient

  def total(source, target):
    if source == target:
      return 1.0
    value = 0.0
    for path in nx.all_simple_paths(graph, source, target):
      value += np.prod([weights[pair] for pair in zip(path, path[1:])])
    return value

  names = model.names
  sigma = np.zeros((len(names), len(names)))
  for (a, i), (b, j) in itertools.product(enumerate(names), repeat=2):
    sigma[a, b] = sum(model.noise_variance[k] * total(k, i) * total(k, j) for k in names)
  return sigma
