"""Gradient-sign crafting against the bytecode classifier in embedding space.

The attack loss is the squared error between the network output and the
one-hot label encoding, f(X) = ||net(X) - Y||^2. Its exact gradient with
respect to the input embedding gives the perturbation direction: each
coordinate moves by epsilon * sign(grad), and the crafted embedding is
the original plus that perturbation, so the infinity norm of the change
never exceeds epsilon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._jsonutil import fmt_float
from .classifier import MLPParams, _forward_trace, _label_index, _logistic, predict
from .errors import ConfigError, DegenerateDatasetError

DEFAULT_SUBSET_SIZES = (100, 500, 1000, 2000)


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 0.05
    subset_sizes: tuple[int, ...] = DEFAULT_SUBSET_SIZES

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigError(f"epsilon must be >= 0, got {self.epsilon}")
        if any(s < 1 for s in self.subset_sizes):
            raise ConfigError("subset sizes must be positive")


@dataclass(frozen=True)
class AdversarialSample:
    original: np.ndarray
    perturbation: np.ndarray
    crafted: np.ndarray
    clean_verdict: str | None = None
    adv_verdict: str | None = None


@dataclass(frozen=True)
class RobustnessReport:
    epsilon: float
    clean_accuracy: float
    adversarial_accuracy: float
    per_size_curve: tuple[tuple[int, float, float], ...]  # (n, clean, adv)


def _one_hot(label, width: int) -> np.ndarray:
    y = np.zeros(width)
    y[_label_index(label)] = 1.0
    return y


def attack_loss(params: MLPParams, x: np.ndarray, label) -> float:
    """Squared error between the network output and the label encoding."""
    x = np.asarray(x, dtype=np.float64)
    logits = _forward_trace(params, x)[-1]
    diff = logits - _one_hot(label, len(logits))
    return float(diff @ diff)


def input_gradient(params: MLPParams, x: np.ndarray, label) -> np.ndarray:
    """Exact analytic gradient of the attack loss w.r.t. the input embedding."""
    x = np.asarray(x, dtype=np.float64)
    acts = _forward_trace(params, x)
    delta = 2.0 * (acts[-1] - _one_hot(label, len(acts[-1])))
    for l in range(len(params.weights) - 1, -1, -1):
        delta = params.weights[l] @ delta
        if l > 0 and params.mode == "default":
            delta *= acts[l] * (1.0 - acts[l])  # logistic derivative
    return delta


def craft(x: np.ndarray, grad: np.ndarray, cfg: AttackConfig) -> AdversarialSample:
    """Perturbation = epsilon * sign(grad), with sign(0) = 0."""
    x = np.asarray(x, dtype=np.float64)
    perturbation = cfg.epsilon * np.sign(np.asarray(grad, dtype=np.float64))
    return AdversarialSample(original=x, perturbation=perturbation, crafted=x + perturbation)


def craft_sample(params: MLPParams, x: np.ndarray, label, cfg: AttackConfig) -> AdversarialSample:
    """Craft against the sample's own label and record both verdicts."""
    base = craft(x, input_gradient(params, x, label), cfg)
    return AdversarialSample(
        original=base.original, perturbation=base.perturbation, crafted=base.crafted,
        clean_verdict=predict(params, base.original)[0],
        adv_verdict=predict(params, base.crafted)[0],
    )


def robustness_eval(params: MLPParams, testset: list[tuple[np.ndarray, str]],
                    cfg: AttackConfig) -> RobustnessReport:
    """Clean vs adversarial accuracy, overall and on prefix subsets.

    Curve points are emitted for each configured subset size that the
    test set can supply.
    """
    if not testset:
        raise DegenerateDatasetError("robustness evaluation needs a nonempty test set")
    clean_hits, adv_hits = [], []
    for x, label in testset:
        sample = craft_sample(params, x, label, cfg)
        clean_hits.append(1 if sample.clean_verdict == label else 0)
        adv_hits.append(1 if sample.adv_verdict == label else 0)

    total = len(testset)
    curve = []
    for size in cfg.subset_sizes:
        if size <= total:
            curve.append((size, sum(clean_hits[:size]) / size, sum(adv_hits[:size]) / size))
    return RobustnessReport(
        epsilon=cfg.epsilon,
        clean_accuracy=sum(clean_hits) / total,
        adversarial_accuracy=sum(adv_hits) / total,
        per_size_curve=tuple(curve),
    )


def report_to_json(report: RobustnessReport) -> bytes:
    curve = ", ".join(
        f'{{"n": {n}, "clean": {fmt_float(c)}, "adv": {fmt_float(a)}}}'
        for n, c, a in report.per_size_curve
    )
    return (
        f'{{"epsilon": {fmt_float(report.epsilon)}, '
        f'"clean": {fmt_float(report.clean_accuracy)}, '
        f'"adversarial": {fmt_float(report.adversarial_accuracy)}, '
        f'"curve": [{curve}]}}'
    ).encode("utf-8")
