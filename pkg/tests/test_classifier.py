import math

import numpy as np
import pytest

from graphshield.errors import (
    ConfigError,
    DegenerateDatasetError,
    NumericError,
    ShapeError,
)
from graphshield.classifier import (
    INPUT_DIM,
    Metrics,
    MLPParams,
    TrainConfig,
    compute_metrics,
    evaluate,
    forward,
    init_params,
    loss,
    loss_grads,
    metrics_to_json,
    params_from_json,
    params_to_json,
    predict,
    roc_auc,
    train_classifier,
)


def naive_forward(params, x):
    """Loop-based reference evaluation, no numpy."""
    a = list(x)
    n_layers = len(params.weights)
    for l in range(n_layers):
        w, b = params.weights[l], params.biases[l]
        z = [sum(a[i] * w[i][j] for i in range(len(a))) + float(b[j]) for j in range(len(b))]
        if l < n_layers - 1 and params.mode == "default":
            a = [1.0 / (1.0 + math.exp(-v)) for v in z]
        else:
            a = z
    return np.array(a)


def constant_network(benign_logit, malware_logit):
    """Single affine layer with zero weights: output is just the bias."""
    return MLPParams(sizes=(INPUT_DIM, 2),
                     weights=(np.zeros((INPUT_DIM, 2)),),
                     biases=(np.array([benign_logit, malware_logit]),),
                     mode="literal-formula")


def rel_err_ok(analytic, numeric, floor=1e-6, rel=1e-4):
    # below the floor both values sit in finite-difference noise territory
    denom = max(abs(analytic), abs(numeric))
    if denom <= floor:
        return True
    return abs(analytic - numeric) / denom <= rel


def separable_clusters(n_per_class, seed, spread=0.3, gap=0.8):
    rng = np.random.default_rng(seed)
    center = np.zeros(INPUT_DIM)
    center[:8] = gap
    data = []
    for _ in range(n_per_class):
        data.append((center + rng.normal(scale=spread, size=INPUT_DIM), "malware"))
        data.append((-center + rng.normal(scale=spread, size=INPUT_DIM), "benign"))
    return data


class TestForward:
    def test_zero_params_scores_zero(self):
        params = MLPParams(
            sizes=(INPUT_DIM, 32, 2),
            weights=(np.zeros((INPUT_DIM, 32)), np.zeros((32, 2))),
            biases=(np.zeros(32), np.zeros(2)),
        )
        logits, score = forward(params, np.random.default_rng(0).normal(size=INPUT_DIM))
        # hidden units sit at logistic(0) = 0.5; zero final weights leave the bias
        assert np.array_equal(logits, np.zeros(2))
        assert score == 0.0

    def test_zero_params_nonzero_final_bias(self):
        params = MLPParams(
            sizes=(INPUT_DIM, 32, 2),
            weights=(np.zeros((INPUT_DIM, 32)), np.zeros((32, 2))),
            biases=(np.zeros(32), np.array([0.25, -1.5])),
        )
        logits, score = forward(params, np.ones(INPUT_DIM))
        assert np.array_equal(logits, np.array([0.25, -1.5]))
        assert score == -1.75

    def test_literal_formula_identity(self):
        eye = np.eye(INPUT_DIM)
        params = MLPParams(sizes=(INPUT_DIM, INPUT_DIM, INPUT_DIM),
                           weights=(eye.copy(), eye.copy()),
                           biases=(np.zeros(INPUT_DIM), np.zeros(INPUT_DIM)),
                           mode="literal-formula")
        e1 = np.zeros(INPUT_DIM)
        e1[0] = 1.0
        logits, score = forward(params, e1)
        assert np.array_equal(logits, e1)
        assert score is None  # not a 2-class head

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(5)
        for mode in ("default", "literal-formula"):
            for _ in range(10):
                params = init_params((INPUT_DIM, 8, 4, 2), seed=int(rng.integers(1e6)), mode=mode)
                x = rng.normal(size=INPUT_DIM)
                logits, _ = forward(params, x)
                assert np.max(np.abs(logits - naive_forward(params, x))) <= 1e-12

    def test_non_finite_input_rejected(self):
        params = init_params((INPUT_DIM, 4, 2), seed=0)
        bad = np.zeros(INPUT_DIM)
        bad[3] = np.nan
        with pytest.raises(NumericError):
            forward(params, bad)


class TestLoss:
    def test_uniform_logits_ln2(self):
        params = constant_network(1.3, 1.3)
        x = np.zeros(INPUT_DIM)
        assert loss(params, x, "malware", l2_delta=0.0) == pytest.approx(math.log(2), abs=1e-15)
        # the weight penalty adds on top (zero weights here, so pick nonzero)
        params2 = init_params((INPUT_DIM, 2), seed=1, mode="literal-formula")
        penalty = 0.01 * float((params2.weights[0] ** 2).sum())
        assert loss(params2, x, "benign", l2_delta=0.01) == pytest.approx(
            loss(params2, x, "benign", l2_delta=0.0) + penalty, rel=1e-12)

    def test_confident_correct_approaches_zero(self):
        gaps = [loss(constant_network(-g, g), np.zeros(INPUT_DIM), "malware")
                for g in (2.0, 5.0, 10.0, 15.0)]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert 0.0 < gaps[-1] < 1e-12

    def test_gradients_match_finite_differences(self):
        h = 1e-5
        rng = np.random.default_rng(9)
        for case in range(6):
            mode = "default" if case % 2 == 0 else "literal-formula"
            params = init_params((INPUT_DIM, 6, 4, 2), seed=case, mode=mode)
            x = rng.normal(size=INPUT_DIM)
            label = "malware" if case % 2 else "benign"
            delta = 0.003 * case
            _, d_w, d_b, d_x = loss_grads(params, x, label, delta)

            for l, mat in enumerate(params.weights):
                flat = mat.reshape(-1)
                for idx in range(flat.size):
                    orig = flat[idx]
                    flat[idx] = orig + h
                    up = loss(params, x, label, delta)
                    flat[idx] = orig - h
                    dn = loss(params, x, label, delta)
                    flat[idx] = orig
                    assert rel_err_ok(d_w[l].reshape(-1)[idx], (up - dn) / (2 * h))
            for l, vec in enumerate(params.biases):
                for idx in range(vec.size):
                    orig = vec[idx]
                    vec[idx] = orig + h
                    up = loss(params, x, label, delta)
                    vec[idx] = orig - h
                    dn = loss(params, x, label, delta)
                    vec[idx] = orig
                    assert rel_err_ok(d_b[l][idx], (up - dn) / (2 * h))
            for idx in range(INPUT_DIM):
                orig = x[idx]
                x[idx] = orig + h
                up = loss(params, x, label, delta)
                x[idx] = orig - h
                dn = loss(params, x, label, delta)
                x[idx] = orig
                assert rel_err_ok(d_x[idx], (up - dn) / (2 * h))


class TestTrain:
    def test_separable_clusters_fit(self):
        data = separable_clusters(200, seed=7)
        params = train_classifier(data, TrainConfig(seed=11))
        correct = sum(1 for x, y in data if predict(params, x)[0] == y)
        assert correct / len(data) >= 0.99

    def test_zero_epochs_rejected(self):
        with pytest.raises(ConfigError):
            TrainConfig(epochs=0)

    def test_same_seed_identical_params(self):
        data = separable_clusters(20, seed=3)
        cfg = TrainConfig(epochs=3, seed=5)
        a = train_classifier(data, cfg)
        b = train_classifier(data, cfg)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)
        for ba, bb in zip(a.biases, b.biases):
            assert np.array_equal(ba, bb)
        assert params_to_json(a) == params_to_json(b)

    def test_single_class_rejected(self):
        data = [(np.zeros(INPUT_DIM), "malware")] * 4
        with pytest.raises(DegenerateDatasetError):
            train_classifier(data, TrainConfig(epochs=1))

    def test_training_log_recorded(self):
        data = separable_clusters(30, seed=1)
        params = train_classifier(data, TrainConfig(epochs=4, seed=2))
        assert len(params.train_log) == 4
        assert params.train_log[-1] < params.train_log[0]


class TestPredict:
    def test_malware_when_malware_logit_larger(self):
        verdict, score = predict(constant_network(2.0, 5.0), np.zeros(INPUT_DIM))
        assert verdict == "malware"
        assert score == pytest.approx(3.0, abs=1e-15)

    def test_tie_resolves_benign(self):
        verdict, score = predict(constant_network(1.0, 1.0), np.zeros(INPUT_DIM))
        assert verdict == "benign"
        assert score == 0.0

    def test_agrees_with_argmax(self):
        rng = np.random.default_rng(21)
        params = init_params((INPUT_DIM, 16, 8, 2), seed=4)
        for _ in range(100):
            x = rng.normal(size=INPUT_DIM)
            logits, score = forward(params, x)
            verdict, _ = predict(params, x)
            if abs(score) > 0:
                assert verdict == ("malware", "benign")[1 - int(np.argmax(logits))]

    def test_verdict_invariant_under_common_logit_shift(self):
        rng = np.random.default_rng(30)
        base = init_params((INPUT_DIM, 8, 2), seed=8)
        shifted = MLPParams(sizes=base.sizes, weights=base.weights,
                            biases=(base.biases[0], base.biases[1] + 17.5))
        for _ in range(20):
            x = rng.normal(size=INPUT_DIM)
            assert predict(base, x)[0] == predict(shifted, x)[0]


class TestMetrics:
    def test_direct_formula(self):
        preds = ["malware", "malware", "malware", "benign", "benign"]
        labels = ["malware", "malware", "benign", "malware", "benign"]
        m = compute_metrics(preds, labels)
        assert (m.tp, m.fp, m.fn, m.tn) == (2, 1, 1, 1)
        assert m.precision == pytest.approx(2 / 3)
        assert m.recall == pytest.approx(2 / 3)
        assert m.f1 == pytest.approx(2 / 3)
        assert m.accuracy == pytest.approx(3 / 5)

    def test_all_correct(self):
        preds = ["malware", "benign"] * 5
        m = compute_metrics(preds, list(preds))
        assert (m.accuracy, m.precision, m.recall, m.f1) == (1.0, 1.0, 1.0, 1.0)

    def test_matches_bruteforce_recount(self):
        rng = np.random.default_rng(2)
        preds = [("malware" if rng.random() < 0.4 else "benign") for _ in range(1000)]
        labels = [("malware" if rng.random() < 0.5 else "benign") for _ in range(1000)]
        m = compute_metrics(preds, labels)
        tp = sum(1 for p, y in zip(preds, labels) if p == "malware" and y == "malware")
        fp = sum(1 for p, y in zip(preds, labels) if p == "malware" and y == "benign")
        fn = sum(1 for p, y in zip(preds, labels) if p == "benign" and y == "malware")
        tn = sum(1 for p, y in zip(preds, labels) if p == "benign" and y == "benign")
        assert (m.tp, m.fp, m.fn, m.tn) == (tp, fp, fn, tn)
        assert m.accuracy == (tp + tn) / 1000
        assert m.precision == tp / (tp + fp)
        assert m.recall == tp / (tp + fn)

    def test_undefined_ratios_are_none(self):
        m = compute_metrics(["benign", "benign"], ["benign", "benign"])
        assert m.precision is None  # no positive predictions
        assert m.recall is None     # no positive labels
        assert m.f1 is None
        assert m.accuracy == 1.0

    def test_bounds_and_f1_relation(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            size = int(rng.integers(2, 40))
            preds = [("malware" if rng.random() < 0.5 else "benign") for _ in range(size)]
            labels = [("malware" if rng.random() < 0.5 else "benign") for _ in range(size)]
            m = compute_metrics(preds, labels)
            for v in (m.accuracy, m.precision, m.recall, m.f1):
                if v is not None:
                    assert 0.0 <= v <= 1.0
            if m.f1 is not None:
                assert m.f1 <= max(m.precision, m.recall) + 1e-12

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            compute_metrics(["malware"], ["malware", "benign"])


def pairwise_auc(scores, labels):
    """Oracle: P(score_pos > score_neg) + 0.5 P(equal), exact integers."""
    pos = [s for s, y in zip(scores, labels) if y == "malware"]
    neg = [s for s, y in zip(scores, labels) if y == "benign"]
    num = 0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                num += 2
            elif sp == sn:
                num += 1
    return num / (2 * len(pos) * len(neg))


class TestRocAuc:
    def test_perfect_separation(self):
        scores = [3.0, 2.5, 2.0, -1.0, -2.0]
        labels = ["malware", "malware", "malware", "benign", "benign"]
        points, auc = roc_auc(scores, labels)
        assert auc == 1.0
        assert points[0] == (0.0, 0.0) and points[-1] == (1.0, 1.0)

    def test_all_tied_scores_single_diagonal_step(self):
        scores = [0.5] * 6
        labels = ["malware", "benign"] * 3
        points, auc = roc_auc(scores, labels)
        assert auc == 0.5
        assert points == ((0.0, 0.0), (1.0, 1.0))

    def test_matches_pairwise_oracle_with_ties(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            scores = [float(rng.integers(0, 12)) / 4 for _ in range(200)]
            labels = [("malware" if rng.random() < 0.5 else "benign") for _ in range(200)]
            if len(set(labels)) < 2:
                continue
            _, auc = roc_auc(scores, labels)
            assert abs(auc - pairwise_auc(scores, labels)) <= 1e-12

    def test_points_monotone(self):
        rng = np.random.default_rng(8)
        scores = list(rng.normal(size=100))
        labels = [("malware" if rng.random() < 0.3 else "benign") for _ in range(100)]
        points, _ = roc_auc(scores, labels)
        for (f0, t0), (f1, t1) in zip(points, points[1:]):
            assert f1 >= f0 and t1 >= t0

    def test_single_class_rejected(self):
        with pytest.raises(DegenerateDatasetError):
            roc_auc([1.0, 2.0], ["malware", "malware"])


class TestEvaluateAndPersistence:
    def test_evaluate_fills_all_fields(self):
        data = separable_clusters(60, seed=13)
        params = train_classifier(data, TrainConfig(epochs=30, seed=3))
        held_out = separable_clusters(20, seed=99)
        metrics = evaluate(params, held_out)
        assert metrics.auc is not None and metrics.auc > 0.9
        assert metrics.roc_points[0] == (0.0, 0.0)
        raw = metrics_to_json(metrics)
        assert b'"accuracy"' in raw and b'"roc_points"' in raw

    def test_params_json_roundtrip(self):
        params = init_params((INPUT_DIM, 32, 16, 2), seed=17)
        restored = params_from_json(params_to_json(params))
        assert restored.sizes == params.sizes
        assert restored.mode == params.mode
        for a, b in zip(restored.weights, params.weights):
            assert np.array_equal(a, b)
        for a, b in zip(restored.biases, params.biases):
            assert np.array_equal(a, b)
