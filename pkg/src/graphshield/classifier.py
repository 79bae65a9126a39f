"""Per-layer verdict network: a small MLP, its trainer, and evaluation metrics.

The default network is 64 -> 32 -> 16 -> 2 with logistic hidden units and
a linear output; an application is called malicious when the malware
logit exceeds the benign logit. A `literal-formula` mode with no hidden
activation, Y = (X W1 + B1) W2 + B2, is kept for formula-level tests and
for the attack module. Training is plain SGD with batch size 1 and a
seeded per-epoch shuffle. The softmax cross-entropy loss carries an
optional weight penalty l2_delta * sum ||W||_F^2 (biases excluded).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._jsonutil import fmt_float, fmt_float_list, fmt_float_matrix, fmt_str
from .errors import (
    ConfigError,
    DegenerateDatasetError,
    NumericError,
    ParseError,
    ShapeError,
)

INPUT_DIM = 64
BENIGN, MALWARE = 0, 1
CLASS_NAMES = ("benign", "malware")

MODES = ("default", "literal-formula")


@dataclass(frozen=True)
class MLPParams:
    """Affine layers; ``weights[l]`` has shape (fan_in, fan_out)."""

    sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str = "logistic"
    mode: str = "default"
    train_log: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise ConfigError("need at least one affine layer")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.activation != "logistic":
            raise ConfigError(f"hidden activation is logistic, got {self.activation!r}")
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.sizes) - 1:
            raise ConfigError("one weight matrix and bias vector per layer required")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[l], self.sizes[l + 1]) or b.shape != (self.sizes[l + 1],):
                raise ConfigError(f"layer {l} shapes {w.shape}/{b.shape} do not match sizes {self.sizes}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ConfigError(f"layer {l} has non-finite parameters")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 1
    split: float = 0.70
    learning_rate: float = 0.01
    l2_delta: float = 0.0
    seed: int = 0
    hidden: tuple[int, ...] = (32, 16)
    mode: str = "default"

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size != 1:
            raise ConfigError(f"training runs one sample per step, got batch_size {self.batch_size}")
        if not 0.0 < self.split < 1.0:
            raise ConfigError(f"split must be in (0, 1), got {self.split}")
        if self.l2_delta < 0:
            raise ConfigError(f"l2_delta must be >= 0, got {self.l2_delta}")


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: float | None
    recall: float | None
    f1: float | None
    tp: int
    fp: int
    tn: int
    fn: int
    roc_points: tuple[tuple[float, float], ...] | None = None
    auc: float | None = None


def init_params(sizes: tuple[int, ...], seed: int, mode: str = "default") -> MLPParams:
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for l in range(len(sizes) - 1):
        bound = 1.0 / np.sqrt(sizes[l])
        weights.append(rng.uniform(-bound, bound, size=(sizes[l], sizes[l + 1])))
        biases.append(np.zeros(sizes[l + 1]))
    return MLPParams(sizes=tuple(sizes), weights=tuple(weights), biases=tuple(biases), mode=mode)


def _logistic(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def _forward_trace(params: MLPParams, x: np.ndarray):
    """All layer activations; hidden logistic unless literal-formula mode."""
    acts = [x]
    n_layers = len(params.weights)
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = acts[-1] @ w + b
        hidden = l < n_layers - 1 and params.mode == "default"
        acts.append(_logistic(z) if hidden else z)
    return acts


def forward(params: MLPParams, x: np.ndarray) -> tuple[np.ndarray, float | None]:
    """Logits and the malware-minus-benign score (None unless 2 outputs)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.sizes[0],):
        raise ShapeError(f"input must be ({params.sizes[0]},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise NumericError("input contains non-finite entries")
    logits = _forward_trace(params, x)[-1]
    score = float(logits[MALWARE] - logits[BENIGN]) if len(logits) == 2 else None
    return logits, score


def _label_index(label) -> int:
    if label in (BENIGN, MALWARE):
        return int(label)
    if label in CLASS_NAMES:
        return CLASS_NAMES.index(label)
    raise ConfigError(f"label must be 'malware' or 'benign', got {label!r}")


def _softmax(logits):
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def loss(params: MLPParams, x: np.ndarray, label, l2_delta: float = 0.0) -> float:
    """Softmax cross-entropy plus l2_delta times squared Frobenius weight norms."""
    y = _label_index(label)
    logits, _ = forward(params, x)
    shifted = logits - logits.max()
    ce = float(np.log(np.exp(shifted).sum()) - shifted[y])
    penalty = l2_delta * sum(float((w ** 2).sum()) for w in params.weights)
    return ce + penalty


def _backprop(weights, biases, mode, x, y, l2_delta):
    acts = [x]
    n_layers = len(weights)
    for l in range(n_layers):
        z = acts[-1] @ weights[l] + biases[l]
        hidden = l < n_layers - 1 and mode == "default"
        acts.append(_logistic(z) if hidden else z)
    logits = acts[-1]
    shifted = logits - logits.max()
    ce = float(np.log(np.exp(shifted).sum()) - shifted[y])
    penalty = l2_delta * sum(float((w ** 2).sum()) for w in weights)

    delta = _softmax(logits)
    delta[y] -= 1.0
    d_weights = [None] * n_layers
    d_biases = [None] * n_layers
    for l in range(n_layers - 1, -1, -1):
        d_weights[l] = np.outer(acts[l], delta) + 2.0 * l2_delta * weights[l]
        d_biases[l] = delta.copy()
        delta = weights[l] @ delta
        if l > 0 and mode == "default":
            delta *= acts[l] * (1.0 - acts[l])  # logistic derivative
    return ce + penalty, d_weights, d_biases, delta


def loss_grads(params: MLPParams, x: np.ndarray, label, l2_delta: float = 0.0):
    """(loss, d_weights, d_biases, d_input): exact analytic backprop."""
    y = _label_index(label)
    x = np.asarray(x, dtype=np.float64)
    return _backprop(params.weights, params.biases, params.mode, x, y, l2_delta)


def train_classifier(dataset: list[tuple[np.ndarray, object]], cfg: TrainConfig) -> MLPParams:
    """SGD, one sample per step, seeded per-epoch shuffle; deterministic.

    Inputs are standardized per coordinate for the optimization and the
    affine transform is folded back into the first layer afterwards, so
    the returned parameters operate on raw embeddings.
    """
    if not dataset:
        raise DegenerateDatasetError("dataset is empty")
    labels = [_label_index(lbl) for _, lbl in dataset]
    if len(set(labels)) < 2:
        raise DegenerateDatasetError("training requires at least one sample per class")
    xs = np.asarray([np.asarray(x, dtype=np.float64) for x, _ in dataset])
    if xs.shape[1] != INPUT_DIM:
        raise ShapeError(f"embeddings must be {INPUT_DIM}-dim, got {xs.shape[1]}")

    mean = xs.mean(axis=0)
    std = xs.std(axis=0)
    std = np.where(std < 1e-8, 1.0, std)  # constant coordinates carry no signal
    xs = (xs - mean) / std

    sizes = (INPUT_DIM, *cfg.hidden, 2)
    params = init_params(sizes, cfg.seed, mode=cfg.mode)
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    rng = np.random.default_rng(cfg.seed)

    epoch_losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(dataset))
        total = 0.0
        for i in order:
            value, d_w, d_b, _ = _backprop(weights, biases, cfg.mode, xs[i], labels[i], cfg.l2_delta)
            total += value
            for l in range(len(weights)):
                weights[l] -= cfg.learning_rate * d_w[l]
                biases[l] -= cfg.learning_rate * d_b[l]
        epoch_losses.append(total / len(dataset))

    # fold standardization into the first affine layer:
    # ((x - mean) / std) W + b  ==  x (W / std) + (b - (mean / std) W)
    biases[0] = biases[0] - (mean / std) @ weights[0]
    weights[0] = weights[0] / std[:, None]

    return MLPParams(sizes=sizes, weights=tuple(weights), biases=tuple(biases),
                     mode=cfg.mode, train_log=tuple(epoch_losses))


def predict(params: MLPParams, x: np.ndarray) -> tuple[str, float]:
    """Malware iff score > 0; a tied score resolves to benign."""
    _, score = forward(params, x)
    return ("malware" if score > 0 else "benign"), score


def compute_metrics(preds: list[str], labels: list[str]) -> Metrics:
    """Confusion counts with malware as the positive class.

    Ratios with zero denominators are reported as None rather than 0.
    """
    if len(preds) != len(labels):
        raise ShapeError(f"{len(preds)} predictions vs {len(labels)} labels")
    if not preds:
        raise ShapeError("need at least one prediction")
    tp = fp = tn = fn = 0
    for p, y in zip(preds, labels):
        if y == "malware":
            tp, fn = (tp + 1, fn) if p == "malware" else (tp, fn + 1)
        else:
            fp, tn = (fp + 1, tn) if p == "malware" else (fp, tn + 1)
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    if precision is None or recall is None:
        f1 = None
    elif precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    accuracy = (tp + tn) / len(preds)
    return Metrics(accuracy=accuracy, precision=precision, recall=recall, f1=f1,
                   tp=tp, fp=fp, tn=tn, fn=fn)


def roc_auc(scores: list[float], labels: list[str]) -> tuple[tuple[tuple[float, float], ...], float]:
    """ROC points over grouped unique thresholds and trapezoid AUC.

    Equal scores collapse into one step, which makes the trapezoid area
    equal the pairwise statistic P(pos > neg) + 0.5 P(pos = neg).
    """
    if len(scores) != len(labels):
        raise ShapeError(f"{len(scores)} scores vs {len(labels)} labels")
    n_pos = sum(1 for y in labels if y == "malware")
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateDatasetError("ROC needs both classes present")

    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    points = [(0.0, 0.0)]
    area2 = 0  # twice the unnormalized area, exact in integers
    tp = fp = 0
    i = 0
    while i < len(order):
        j = i
        tp_delta = fp_delta = 0
        while j < len(order) and scores[order[j]] == scores[order[i]]:
            if labels[order[j]] == "malware":
                tp_delta += 1
            else:
                fp_delta += 1
            j += 1
        area2 += fp_delta * (2 * tp + tp_delta)
        tp += tp_delta
        fp += fp_delta
        points.append((fp / n_neg, tp / n_pos))
        i = j
    return tuple(points), area2 / (2 * n_pos * n_neg)


def evaluate(params: MLPParams, testset: list[tuple[np.ndarray, str]]) -> Metrics:
    """Predictions, confusion metrics, and ROC/AUC over a held-out set."""
    preds, scores, labels = [], [], []
    for x, y in testset:
        verdict, score = predict(params, x)
        preds.append(verdict)
        scores.append(score)
        labels.append(y)
    metrics = compute_metrics(preds, labels)
    try:
        points, auc = roc_auc(scores, labels)
    except DegenerateDatasetError:
        points, auc = None, None
    return Metrics(accuracy=metrics.accuracy, precision=metrics.precision,
                   recall=metrics.recall, f1=metrics.f1, tp=metrics.tp, fp=metrics.fp,
                   tn=metrics.tn, fn=metrics.fn, roc_points=points, auc=auc)


def params_to_json(params: MLPParams) -> bytes:
    return (
        f'{{"sizes": [{", ".join(str(s) for s in params.sizes)}], '
        f'"weights": [{", ".join(fmt_float_matrix(w) for w in params.weights)}], '
        f'"biases": [{", ".join(fmt_float_list(b) for b in params.biases)}], '
        f'"activation": {fmt_str(params.activation)}, '
        f'"mode": {fmt_str(params.mode)}}}'
    ).encode("utf-8")


def params_from_json(data: bytes) -> MLPParams:
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"invalid model file: {exc}") from exc
    return MLPParams(
        sizes=tuple(int(s) for s in raw["sizes"]),
        weights=tuple(np.asarray(w, dtype=np.float64) for w in raw["weights"]),
        biases=tuple(np.asarray(b, dtype=np.float64) for b in raw["biases"]),
        activation=raw.get("activation", "logistic"),
        mode=raw.get("mode", "default"),
    )


def metrics_to_json(metrics: Metrics) -> bytes:
    def opt(v):
        return "null" if v is None else fmt_float(v)

    parts = [
        f'{{"accuracy": {fmt_float(metrics.accuracy)}, ',
        f'"precision": {opt(metrics.precision)}, ',
        f'"recall": {opt(metrics.recall)}, ',
        f'"f1": {opt(metrics.f1)}, ',
        f'"tp": {metrics.tp}, "fp": {metrics.fp}, "tn": {metrics.tn}, "fn": {metrics.fn}, ',
        f'"auc": {opt(metrics.auc)}, ',
    ]
    if metrics.roc_points is None:
        parts.append('"roc_points": null}')
    else:
        pts = ", ".join(f"[{fmt_float(a)}, {fmt_float(b)}]" for a, b in metrics.roc_points)
        parts.append(f'"roc_points": [{pts}]}}')
    return "".join(parts).encode("utf-8")


def roc_to_csv(points) -> str:
    lines = ["fpr,tpr"]
    lines.extend(f"{fmt_float(fpr)},{fmt_float(tpr)}" for fpr, tpr in points)
    return "\n".join(lines) + "\n"
