import math

import numpy as np
import pytest

from graphshield.errors import ConfigError, RangeError, ShapeError
from graphshield.graphir import build_adjacency, synth_generate
from graphshield.struct2vec import (
    DIM,
    S2VParams,
    embed_graph,
    init_state,
    params_from_json,
    params_to_json,
    propagate_step,
    sample_params,
)


def naive_embed(features, adj_dense, params):
    """Straightforward loop-based reference, no vectorization."""
    n = len(features)
    mu = [[0.0] * DIM for _ in range(n)]
    means = []
    for _ in range(params.T):
        nxt = []
        for v in range(n):
            agg = [0.0] * DIM
            for u in range(n):
                if adj_dense[v][u] > 0 or adj_dense[u][v] > 0:
                    for d in range(DIM):
                        agg[d] += mu[u][d]
            if params.sigma == "relu":
                agg = [max(x, 0.0) for x in agg]
            row = []
            for d in range(DIM):
                s = sum(params.W1[d][k] * features[v][k] for k in range(DIM)) + agg[d]
                row.append(math.tanh(s))
            nxt.append(row)
        mu = nxt
        means.append([sum(mu[v][d] for v in range(n)) / n for d in range(DIM)])
    if params.readout == "last":
        pooled = means[-1]
    else:
        pooled = [sum(m[d] for m in means) / len(means) for d in range(DIM)]
    return np.array([sum(params.W2[d][k] * pooled[k] for k in range(DIM)) for d in range(DIM)])


class TestInitState:
    def test_single_node(self):
        state = init_state(1, sample_params(0))
        assert state.mu.shape == (1, DIM)
        assert not state.mu.any()

    def test_five_nodes(self):
        state = init_state(5, sample_params(0))
        assert state.mu.shape == (5, DIM)
        assert not state.mu.any()
        assert state.iteration == 0

    def test_deterministic(self):
        params = sample_params(3)
        a, b = init_state(7, params), init_state(7, params)
        assert np.array_equal(a.mu, b.mu) and a.iteration == b.iteration

    def test_rejects_zero_nodes(self):
        with pytest.raises(RangeError):
            init_state(0, sample_params(0))


class TestPropagateStep:
    def test_isolated_node(self):
        params = sample_params(1)
        x = np.random.default_rng(2).normal(size=(1, DIM))
        state = propagate_step(init_state(1, params), x, np.zeros((1, 1)), params)
        assert np.allclose(state.mu[0], np.tanh(params.W1 @ x[0]), atol=1e-15)
        assert state.iteration == 1

    def test_zero_w1_stays_zero(self):
        params = S2VParams(W1=np.zeros((DIM, DIM)), W2=np.eye(DIM), T=4)
        x = np.random.default_rng(3).normal(size=(3, DIM))
        adj = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=float)
        state = init_state(3, params)
        for _ in range(params.T):
            state = propagate_step(state, x * 0, adj, params)
            assert not state.mu.any()

    def test_three_node_path_hand_computation(self):
        params = S2VParams(W1=np.eye(DIM), W2=np.eye(DIM), T=2, sigma="identity")
        rng = np.random.default_rng(4)
        x = rng.normal(scale=0.3, size=(3, DIM))
        adj = np.array([[0, 1, 0], [0, 0, 1], [0, 0, 0]], dtype=float)

        s1 = propagate_step(init_state(3, params), x, adj, params)
        assert np.max(np.abs(s1.mu - np.tanh(x))) <= 1e-12

        s2 = propagate_step(s1, x, adj, params)
        t = np.tanh(x)
        expected = np.tanh(np.stack([
            x[0] + t[1],            # neighbors of 0: {1}
            x[1] + t[0] + t[2],     # neighbors of 1: {0, 2}
            x[2] + t[1],            # neighbors of 2: {1}
        ]))
        assert np.max(np.abs(s2.mu - expected)) <= 1e-12

    def test_input_state_unmodified(self):
        params = sample_params(5)
        x = np.random.default_rng(6).normal(size=(2, DIM))
        state = init_state(2, params)
        before = state.mu.copy()
        propagate_step(state, x, np.zeros((2, 2)), params)
        assert np.array_equal(state.mu, before)

    def test_too_many_iterations(self):
        params = S2VParams(W1=np.eye(DIM), W2=np.eye(DIM), T=1)
        x = np.zeros((1, DIM))
        state = propagate_step(init_state(1, params), x, np.zeros((1, 1)), params)
        with pytest.raises(ConfigError):
            propagate_step(state, x, np.zeros((1, 1)), params)

    def test_shape_mismatch(self):
        params = sample_params(0)
        with pytest.raises(ShapeError):
            propagate_step(init_state(2, params), np.zeros((3, DIM)), np.zeros((2, 2)), params)
        with pytest.raises(ShapeError):
            propagate_step(init_state(2, params), np.zeros((2, DIM)), np.zeros((3, 3)), params)


class TestEmbedGraph:
    def test_single_node_zero_w1(self):
        params = S2VParams(W1=np.zeros((DIM, DIM)), W2=np.eye(DIM))
        out = embed_graph(np.ones((1, DIM)), np.zeros((1, 1)), params)
        assert not out.any()

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        params = sample_params(11)
        doc = synth_generate("malware", 18, seed=44)
        adj = build_adjacency(doc).to_dense()
        features = rng.normal(size=(18, DIM))
        base = embed_graph(features, adj, params)
        perm = rng.permutation(18)
        permuted = embed_graph(features[perm], adj[np.ix_(perm, perm)], params)
        assert np.max(np.abs(base - permuted)) <= 1e-9

    def test_four_node_cycle_matches_naive_reference(self):
        rng = np.random.default_rng(12)
        for readout in ("last", "mean"):
            for sigma in ("relu", "identity"):
                params = sample_params(int(rng.integers(0, 1000)), T=2, sigma=sigma, readout=readout)
                features = rng.normal(size=(4, DIM))
                adj = np.array([[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0]], dtype=float)
                fast = embed_graph(features, adj, params)
                slow = naive_embed(features.tolist(), adj.tolist(), params)
                assert np.max(np.abs(fast - slow)) <= 1e-10

    def test_boundedness(self):
        rng = np.random.default_rng(14)
        params = sample_params(21, T=3)
        features = rng.normal(scale=2.0, size=(6, DIM))
        adj = (rng.random((6, 6)) < 0.4).astype(float)
        np.fill_diagonal(adj, 0)
        out = embed_graph(features, adj, params)
        row_sum = np.abs(params.W2).sum(axis=1).max()
        assert np.max(np.abs(out)) <= row_sum

    def test_locality_on_path_graph(self):
        # nodes farther than T hops from a modified node keep their state
        n, t_steps = 12, 3
        params = sample_params(33, T=t_steps)
        rng = np.random.default_rng(15)
        features = rng.normal(size=(n, DIM))
        adj = np.zeros((n, n))
        for i in range(n - 1):
            adj[i, i + 1] = 1.0

        def final_state(feats):
            state = init_state(n, params)
            for _ in range(t_steps):
                state = propagate_step(state, feats, adj, params)
            return state.mu

        modified = features.copy()
        modified[0] += rng.normal(size=DIM)
        base, changed = final_state(features), final_state(modified)
        for v in range(n):
            if v > t_steps:  # graph distance from node 0 exceeds T
                assert np.array_equal(base[v], changed[v])
        assert not np.array_equal(base[0], changed[0])

    def test_deterministic_bitwise(self):
        params = sample_params(3)
        features = np.random.default_rng(1).normal(size=(5, DIM))
        adj = np.zeros((5, 5))
        adj[0, 1] = adj[1, 2] = adj[3, 4] = 1.0
        assert np.array_equal(embed_graph(features, adj, params),
                              embed_graph(features, adj, params))

    def test_accepts_adjacency_matrix_type(self):
        doc = synth_generate("benign", 6, seed=2)
        adj = build_adjacency(doc)
        params = sample_params(9)
        features = np.random.default_rng(0).normal(size=(6, DIM))
        assert np.array_equal(embed_graph(features, adj, params),
                              embed_graph(features, adj.to_dense(), params))


class TestPersistence:
    def test_json_roundtrip(self):
        params = sample_params(77, T=6, sigma="identity", readout="mean")
        restored = params_from_json(params_to_json(params))
        assert restored.T == params.T
        assert restored.sigma == params.sigma
        assert restored.readout == params.readout
        assert np.array_equal(restored.W1, params.W1)
        assert np.array_equal(restored.W2, params.W2)

    def test_validation(self):
        with pytest.raises(ConfigError):
            S2VParams(W1=np.zeros((2, 2)), W2=np.zeros((DIM, DIM)))
        with pytest.raises(ConfigError):
            S2VParams(W1=np.zeros((DIM, DIM)), W2=np.zeros((DIM, DIM)), T=0)
        with pytest.raises(ConfigError):
            S2VParams(W1=np.zeros((DIM, DIM)), W2=np.zeros((DIM, DIM)), sigma="tanh")
