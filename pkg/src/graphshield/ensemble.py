"""Second-layer fusion of the bytecode and native verdicts.

Default rule is the hard logic gate: an application with native code is
benign only when the bytecode verdict and every native verdict are
benign; applications without native code keep the bytecode verdict. A
trained alternative combines the two scores with logistic-regression
weights; apps without native code bypass it and use the logic rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._jsonutil import fmt_float, fmt_float_list, fmt_str
from .errors import DegenerateDatasetError, NotTrainedError

MODES = ("logic_gate", "weighted")


@dataclass(frozen=True)
class AppRecord:
    app_id: str
    bytecode_embedding: np.ndarray            # (64,)
    native_embeddings: tuple[np.ndarray, ...] = ()
    true_label: str | None = None


@dataclass(frozen=True)
class EnsembleVerdict:
    app_id: str
    final: str
    bytecode_score: float
    native_scores: tuple[float, ...]
    mode: str


@dataclass(frozen=True)
class EnsembleWeights:
    w_b: float = 0.0
    w_n: float = 0.0
    bias: float = 0.0
    trained: bool = False
    seed: int = 0


def combine_logic(bytecode_verdict: str, native_verdicts: list[str]) -> str:
    """Benign only if the bytecode verdict and all native verdicts are benign."""
    if not native_verdicts:
        return bytecode_verdict
    if bytecode_verdict == "benign" and all(v == "benign" for v in native_verdicts):
        return "benign"
    return "malware"


def combine_weighted(bytecode_score: float, native_score: float,
                     weights: EnsembleWeights) -> tuple[float, str]:
    """w_b * s_b + w_n * s_n + bias; malware iff the fused score is positive."""
    if not weights.trained:
        raise NotTrainedError("ensemble weights have not been trained")
    score = weights.w_b * bytecode_score + weights.w_n * native_score + weights.bias
    return score, ("malware" if score > 0 else "benign")


def train_weights(training_scores: list[tuple[float, float, str]], seed: int = 0,
                  iterations: int = 2000, learning_rate: float = 0.1) -> EnsembleWeights:
    """Logistic regression on (s_b, s_n) pairs via full-batch gradient descent.

    The procedure is deterministic (zero initialization, fixed iteration
    count); the seed is recorded on the returned weights.
    """
    if not training_scores:
        raise DegenerateDatasetError("no training scores")
    labels = np.array([1.0 if lbl == "malware" else 0.0 for _, _, lbl in training_scores])
    if labels.min() == labels.max():
        raise DegenerateDatasetError("training requires both classes")
    feats = np.array([[sb, sn] for sb, sn, _ in training_scores])

    w = np.zeros(2)
    b = 0.0
    n = len(labels)
    for _ in range(iterations):
        z = feats @ w + b
        prob = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                        np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
        err = prob - labels
        w -= learning_rate * (feats.T @ err) / n
        b -= learning_rate * float(err.sum()) / n
    return EnsembleWeights(w_b=float(w[0]), w_n=float(w[1]), bias=float(b),
                           trained=True, seed=seed)


def aggregate_native_score(native_scores) -> float:
    """An app's native score is the max over its libraries: one malicious
    library is enough to taint the application."""
    return max(native_scores)


def fuse_app(app_id: str, bytecode_score: float, native_scores: list[float],
             mode: str = "logic_gate", weights: EnsembleWeights | None = None) -> EnsembleVerdict:
    """Fuse one application's layer scores into a final verdict."""
    bytecode_verdict = "malware" if bytecode_score > 0 else "benign"
    if mode == "logic_gate" or not native_scores:
        native_verdicts = ["malware" if s > 0 else "benign" for s in native_scores]
        final = combine_logic(bytecode_verdict, native_verdicts)
    elif mode == "weighted":
        _, final = combine_weighted(bytecode_score, aggregate_native_score(native_scores),
                                    weights if weights is not None else EnsembleWeights())
    else:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return EnsembleVerdict(app_id=app_id, final=final, bytecode_score=float(bytecode_score),
                           native_scores=tuple(float(s) for s in native_scores), mode=mode)


def verdict_to_json_line(v: EnsembleVerdict) -> str:
    return (
        f'{{"app_id": {fmt_str(v.app_id)}, "final": {fmt_str(v.final)}, '
        f'"bytecode_score": {fmt_float(v.bytecode_score)}, '
        f'"native_scores": {fmt_float_list(v.native_scores)}, '
        f'"mode": {fmt_str(v.mode)}}}'
    )


def weights_to_json(w: EnsembleWeights) -> bytes:
    return (
        f'{{"w_b": {fmt_float(w.w_b)}, "w_n": {fmt_float(w.w_n)}, '
        f'"bias": {fmt_float(w.bias)}, "trained": {"true" if w.trained else "false"}, '
        f'"seed": {w.seed}}}'
    ).encode("utf-8")


def weights_from_json(data: bytes) -> EnsembleWeights:
    import json

    raw = json.loads(data.decode("utf-8"))
    return EnsembleWeights(w_b=float(raw["w_b"]), w_n=float(raw["w_n"]),
                           bias=float(raw["bias"]), trained=bool(raw["trained"]),
                           seed=int(raw.get("seed", 0)))
