"""Function embeddings: frequency-weighted averaging with first-principal-direction removal.

Each function is first embedded as

    v_f = (1/|f|) * sum_i  alpha / (alpha + p(i)) * v_i

where p(i) is the corpus-level relative frequency of instruction i, then
the projection of every v_f onto the dominant left singular direction of
the stacked embedding matrix is removed: v_f <- v_f - u (u.v_f).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._jsonutil import fmt_float, fmt_float_list, fmt_str
from .errors import (
    ConfigError,
    DegenerateMatrixError,
    EmptyFunctionError,
    ParseError,
    ShapeError,
)

DIM = 64

_POWER_TOL = 1e-10
_POWER_MAX_ITERS = 1000


@dataclass(frozen=True)
class InstructionFrequencyTable:
    """Relative frequency p(i) of each instruction token in the corpus."""

    p: dict[str, float]
    total_count: int

    def __post_init__(self):
        for tok, val in self.p.items():
            if not 0.0 <= val <= 1.0:
                raise ConfigError(f"p({tok!r}) = {val} outside [0, 1]")

    def frequency(self, token: str) -> float:
        """p(token); unseen tokens get 0 and hence maximal SIF weight."""
        return self.p.get(token, 0.0)


@dataclass(frozen=True)
class SIFConfig:
    alpha: float = 1e-3

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be > 0, got {self.alpha}")


@dataclass(frozen=True)
class FunctionEmbedding:
    function_id: str
    vector: np.ndarray  # (64,)


def build_frequency_table(corpus: list[list[str]]) -> InstructionFrequencyTable:
    counts: dict[str, int] = {}
    total = 0
    for seq in corpus:
        for tok in seq:
            counts[tok] = counts.get(tok, 0) + 1
            total += 1
    p = {tok: c / total for tok, c in counts.items()} if total else {}
    return InstructionFrequencyTable(p=p, total_count=total)


def weighted_average(vectors: np.ndarray, tokens: list[str],
                     freq: InstructionFrequencyTable, cfg: SIFConfig) -> np.ndarray:
    """(1/n) * sum_i [alpha / (alpha + p(token_i))] * vectors[i]."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != DIM:
        raise ShapeError(f"vectors must be (n, {DIM}), got {vectors.shape}")
    if len(vectors) == 0:
        raise EmptyFunctionError("cannot embed a function with no instructions")
    if len(vectors) != len(tokens):
        raise ShapeError(f"{len(vectors)} vectors but {len(tokens)} tokens")
    weights = np.array([cfg.alpha / (cfg.alpha + freq.frequency(t)) for t in tokens])
    return (weights[:, None] * vectors).sum(axis=0) / len(vectors)


def principal_direction(matrix: np.ndarray) -> np.ndarray:
    """First left singular vector of ``matrix`` (columns = function vectors).

    Power iteration on the 64x64 Gram matrix X X^T from a fixed all-ones
    start, to tolerance 1e-10 or 1000 iterations; sign fixed so the
    largest-magnitude component is positive.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != DIM:
        raise ShapeError(f"matrix must be ({DIM}, m), got {matrix.shape}")
    if matrix.shape[1] < 1 or not np.any(matrix):
        raise DegenerateMatrixError("all-zero matrix has no principal direction")

    gram = matrix @ matrix.T
    b = np.ones(DIM) / np.sqrt(DIM)
    if not np.any(gram @ b):
        # the all-ones start is orthogonal to the range; fall back to the
        # first basis vector with a nonzero image (exists since gram != 0)
        for i in range(DIM):
            if np.any(gram[:, i]):
                b = np.zeros(DIM)
                b[i] = 1.0
                break
    for _ in range(_POWER_MAX_ITERS):
        nxt = gram @ b
        nxt /= np.linalg.norm(nxt)
        if np.linalg.norm(nxt - b) <= _POWER_TOL:  # gram is PSD: no sign flip
            b = nxt
            break
        b = nxt
    if b[np.argmax(np.abs(b))] < 0:
        b = -b
    return b


def remove_projection(vectors: np.ndarray, u: np.ndarray) -> np.ndarray:
    """v - u (u.v) for each row of ``vectors``."""
    vectors = np.asarray(vectors, dtype=np.float64)
    return vectors - np.outer(vectors @ u, u)


def sif_embed(functions: list[tuple[str, list[str], np.ndarray]],
              freq: InstructionFrequencyTable, cfg: SIFConfig) -> list[FunctionEmbedding]:
    """Weighted averages, then first-principal-direction removal, input order kept.

    A corpus whose weighted averages are all zero skips the projection and
    returns zero vectors; a single-function corpus projects to exactly zero.
    """
    if not functions:
        raise EmptyFunctionError("need at least one function")
    ids = [f[0] for f in functions]
    averaged = np.stack([weighted_average(vecs, toks, freq, cfg) for _, toks, vecs in functions])
    if not np.any(averaged) or len(functions) == 1:
        # one function: u is proportional to it and the projection removes
        # everything, so the zero vector is returned without float residue
        return [FunctionEmbedding(fid, np.zeros(DIM)) for fid in ids]
    u = principal_direction(averaged.T)
    projected = remove_projection(averaged, u)
    return [FunctionEmbedding(fid, projected[i]) for i, fid in enumerate(ids)]


@dataclass(frozen=True)
class SIFModel:
    """Frozen inference artifact: frequencies, alpha, and the training-corpus u."""

    freq: InstructionFrequencyTable
    cfg: SIFConfig
    u: np.ndarray  # (64,)

    def transform(self, tokens: list[str], vectors: np.ndarray) -> np.ndarray:
        v = weighted_average(vectors, tokens, self.freq, self.cfg)
        return v - self.u * (self.u @ v)


def fit_sif_model(functions: list[tuple[str, list[str], np.ndarray]],
                  freq: InstructionFrequencyTable, cfg: SIFConfig) -> SIFModel:
    """Fit u on the training corpus; degenerate all-zero corpora get u = 0."""
    if not functions:
        raise EmptyFunctionError("need at least one function")
    averaged = np.stack([weighted_average(vecs, toks, freq, cfg) for _, toks, vecs in functions])
    u = principal_direction(averaged.T) if np.any(averaged) else np.zeros(DIM)
    return SIFModel(freq=freq, cfg=cfg, u=u)


def sif_model_to_json(model: SIFModel) -> bytes:
    p_items = ", ".join(f"{fmt_str(t)}: {fmt_float(model.freq.p[t])}" for t in sorted(model.freq.p))
    return (
        f'{{"alpha": {fmt_float(model.cfg.alpha)}, '
        f'"total": {model.freq.total_count}, '
        f'"p": {{{p_items}}}, '
        f'"u": {fmt_float_list(model.u)}}}'
    ).encode("utf-8")


def sif_model_from_json(data: bytes) -> SIFModel:
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"invalid SIF model: {exc}") from exc
    return SIFModel(
        freq=InstructionFrequencyTable(p={t: float(v) for t, v in raw["p"].items()},
                                       total_count=int(raw["total"])),
        cfg=SIFConfig(alpha=float(raw["alpha"])),
        u=np.asarray(raw["u"], dtype=np.float64),
    )


def frequency_table_to_json(freq: InstructionFrequencyTable) -> bytes:
    p_items = ", ".join(f"{fmt_str(t)}: {fmt_float(freq.p[t])}" for t in sorted(freq.p))
    return f'{{"total": {freq.total_count}, "p": {{{p_items}}}}}'.encode("utf-8")


def frequency_table_from_json(data: bytes) -> InstructionFrequencyTable:
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"invalid frequency table: {exc}") from exc
    return InstructionFrequencyTable(p={t: float(v) for t, v in raw["p"].items()},
                                     total_count=int(raw["total"]))
