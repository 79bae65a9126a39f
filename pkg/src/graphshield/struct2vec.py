"""Graph embedding by iterative neighborhood aggregation.

Per iteration every vertex v aggregates its neighbors' states,
l_v = sum_{u in N(v)} mu_u, and updates mu_v = tanh(W1 x_v + sigma(l_v));
after T iterations the graph embedding is W2 times the vertex mean of mu
(optionally the mean over all iterations). Neighborhoods are the union of
in- and out-neighbors, so directed documents are symmetrized for message
passing. W1/W2 are sampled once per model and frozen; with zero
initialization the whole computation is permutation invariant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._jsonutil import fmt_float_matrix, fmt_str
from .errors import ConfigError, ParseError, RangeError, ShapeError
from .graphir import AdjacencyMatrix

DIM = 64

SIGMAS = ("relu", "identity")
READOUTS = ("last", "mean")


@dataclass(frozen=True)
class S2VParams:
    W1: np.ndarray  # (64, 64)
    W2: np.ndarray  # (64, 64)
    T: int = 4
    sigma: str = "relu"
    readout: str = "last"
    seed: int = 0

    def __post_init__(self):
        for name, mat in (("W1", self.W1), ("W2", self.W2)):
            if mat.shape != (DIM, DIM):
                raise ConfigError(f"{name} must be ({DIM}, {DIM}), got {mat.shape}")
            if not np.all(np.isfinite(mat)):
                raise ConfigError(f"{name} contains non-finite entries")
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if self.sigma not in SIGMAS:
            raise ConfigError(f"sigma must be one of {SIGMAS}, got {self.sigma!r}")
        if self.readout not in READOUTS:
            raise ConfigError(f"readout must be one of {READOUTS}, got {self.readout!r}")


@dataclass(frozen=True)
class PropagationState:
    mu: np.ndarray  # (|V|, 64)
    iteration: int


def sample_params(seed: int, T: int = 4, sigma: str = "relu", readout: str = "last") -> S2VParams:
    """Draw frozen W1/W2 uniform in [-1/sqrt(64), 1/sqrt(64)]."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(DIM)
    return S2VParams(
        W1=rng.uniform(-bound, bound, size=(DIM, DIM)),
        W2=rng.uniform(-bound, bound, size=(DIM, DIM)),
        T=T, sigma=sigma, readout=readout, seed=seed,
    )


def init_state(n_nodes: int, params: S2VParams) -> PropagationState:
    if n_nodes < 1:
        raise RangeError(f"n_nodes must be >= 1, got {n_nodes}")
    return PropagationState(mu=np.zeros((n_nodes, DIM)), iteration=0)


def _neighbor_matrix(adj, n: int) -> np.ndarray:
    dense = adj.to_dense() if isinstance(adj, AdjacencyMatrix) else np.asarray(adj, dtype=np.float64)
    if dense.shape != (n, n):
        raise ShapeError(f"adjacency must be ({n}, {n}), got {dense.shape}")
    return np.where((dense + dense.T) > 0, 1.0, 0.0)


def propagate_step(state: PropagationState, features: np.ndarray, adj,
                   params: S2VParams) -> PropagationState:
    """One aggregation step; the input state is left unmodified."""
    if state.iteration >= params.T:
        raise ConfigError(f"already ran {state.iteration} of {params.T} iterations")
    features = np.asarray(features, dtype=np.float64)
    n = state.mu.shape[0]
    if features.shape != (n, DIM):
        raise ShapeError(f"features must be ({n}, {DIM}), got {features.shape}")
    neighbors = _neighbor_matrix(adj, n)
    agg = neighbors @ state.mu
    if params.sigma == "relu":
        agg = np.maximum(agg, 0.0)
    mu_next = np.tanh(features @ params.W1.T + agg)
    return PropagationState(mu=mu_next, iteration=state.iteration + 1)


def embed_graph(features: np.ndarray, adj, params: S2VParams) -> np.ndarray:
    """Run T propagation steps and read out W2 times the vertex-mean state."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != DIM or features.shape[0] < 1:
        raise ShapeError(f"features must be (|V| >= 1, {DIM}), got {features.shape}")
    state = init_state(features.shape[0], params)
    iteration_means = []
    for _ in range(params.T):
        state = propagate_step(state, features, adj, params)
        iteration_means.append(state.mu.mean(axis=0))
    pooled = iteration_means[-1] if params.readout == "last" else np.mean(iteration_means, axis=0)
    return params.W2 @ pooled


def params_to_json(params: S2VParams) -> bytes:
    return (
        f'{{"T": {params.T}, "sigma": {fmt_str(params.sigma)}, '
        f'"readout": {fmt_str(params.readout)}, '
        f'"W1": {fmt_float_matrix(params.W1)}, '
        f'"W2": {fmt_float_matrix(params.W2)}, '
        f'"seed": {params.seed}}}'
    ).encode("utf-8")


def params_from_json(data: bytes) -> S2VParams:
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"invalid propagation params: {exc}") from exc
    return S2VParams(
        W1=np.asarray(raw["W1"], dtype=np.float64),
        W2=np.asarray(raw["W2"], dtype=np.float64),
        T=int(raw["T"]), sigma=raw["sigma"], readout=raw.get("readout", "last"),
        seed=int(raw.get("seed", 0)),
    )
