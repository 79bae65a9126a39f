"""Opcode vocabulary and 64-dim skip-gram instruction embeddings.

Training uses window length 1 (only the immediate neighbors of each
position form context pairs) and a negative-sampling objective

    L = -log sigmoid(u_ctx . v_c) - sum_neg log sigmoid(-u_neg . v_c)

with negatives drawn from the unigram^0.75 noise distribution. Basic
blocks are embedded as the arithmetic mean of their instruction vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._jsonutil import fmt_float_matrix, fmt_str
from .errors import ConfigError, EmptyBlockError, EmptyCorpusError, ParseError

EMBED_DIM = 64
OOV_TOKEN = "<oov>"

# Linear learning-rate decay bottoms out at this fraction of the initial rate.
_LR_FLOOR_FRACTION = 1e-4


@dataclass(frozen=True)
class Vocabulary:
    """Bijective token/index mapping with the OOV token reserved at index 0."""

    tokens: tuple[str, ...]
    counts: dict[str, int]

    def __post_init__(self):
        if self.tokens[0] != OOV_TOKEN:
            raise ConfigError(f"index 0 is reserved for {OOV_TOKEN!r}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ConfigError("tokens must be unique")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def index_of(self, token: str) -> int:
        """Index of ``token``, or the OOV index for unknown tokens."""
        return self._index.get(token, 0)


@dataclass(frozen=True)
class SkipGramConfig:
    window: int = 1
    negatives_k: int = 5
    learning_rate: float = 0.025
    epochs: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.window != 1:
            raise ConfigError(f"window is fixed to 1, got {self.window}")
        if self.negatives_k < 1:
            raise ConfigError(f"negatives_k must be >= 1, got {self.negatives_k}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")


@dataclass(frozen=True)
class EmbeddingTable:
    """Input (word) and output (context) vectors, one row per vocab entry."""

    vocab: Vocabulary
    input_vectors: np.ndarray   # (|V|, 64)
    output_vectors: np.ndarray  # (|V|, 64)
    train_log: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        for name, mat in (("input_vectors", self.input_vectors), ("output_vectors", self.output_vectors)):
            if mat.shape != (len(self.vocab), EMBED_DIM):
                raise ConfigError(f"{name} must be ({len(self.vocab)}, {EMBED_DIM}), got {mat.shape}")
            if not np.all(np.isfinite(mat)):
                raise ConfigError(f"{name} contains non-finite entries")

    @property
    def dim(self) -> int:
        return EMBED_DIM


@dataclass(frozen=True)
class SkipGramGrads:
    """Analytic partials w.r.t. the rows touched by one training pair."""

    d_center: np.ndarray      # w.r.t. input_vectors[center]
    d_context: np.ndarray     # w.r.t. output_vectors[context]
    d_negatives: np.ndarray   # (k, 64), w.r.t. output_vectors[negatives[i]]


def build_vocab(corpus: list[list[str]]) -> Vocabulary:
    """Count tokens and assign indices by (count desc, token asc); OOV at 0."""
    if not corpus:
        raise EmptyCorpusError("corpus must contain at least one sequence")
    counts: dict[str, int] = {}
    for seq in corpus:
        for tok in seq:
            counts[tok] = counts.get(tok, 0) + 1
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocabulary(tokens=(OOV_TOKEN, *ordered), counts=counts)


def _sigmoid(x):
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def _log_sigmoid(x):
    # -log(1+exp(-x)) computed without overflow on either tail
    return np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))


def skipgram_loss_grad(table: EmbeddingTable, center: int, context: int,
                       negatives: list[int]) -> tuple[float, SkipGramGrads]:
    """Negative-sampling loss and exact gradients for one (center, context) pair."""
    size = len(table.vocab)
    for idx in (center, context, *negatives):
        if not 0 <= idx < size:
            raise IndexError(f"index {idx} outside vocabulary of size {size}")
    if context in negatives:
        raise ValueError("negatives must exclude the context index")

    v_c = table.input_vectors[center]
    u_ctx = table.output_vectors[context]
    u_neg = table.output_vectors[list(negatives)]  # (k, 64)

    pos_score = float(u_ctx @ v_c)
    neg_scores = u_neg @ v_c  # (k,)
    loss = float(-_log_sigmoid(pos_score) - np.sum(_log_sigmoid(-neg_scores)))

    # d loss / d pos_score = sigmoid(pos) - 1;  d loss / d neg_score = sigmoid(neg)
    g_pos = _sigmoid(pos_score) - 1.0
    g_neg = _sigmoid(neg_scores)  # (k,)

    d_center = g_pos * u_ctx + g_neg @ u_neg
    d_context = g_pos * v_c
    d_negatives = np.outer(g_neg, v_c)
    return loss, SkipGramGrads(d_center=d_center, d_context=d_context, d_negatives=d_negatives)


def extract_pairs(sequence: list[int]) -> list[tuple[int, int]]:
    """Window-1 training pairs: (t_i, t_{i-1}) and (t_i, t_{i+1}) per position."""
    pairs = []
    for i in range(len(sequence)):
        if i > 0:
            pairs.append((sequence[i], sequence[i - 1]))
        if i + 1 < len(sequence):
            pairs.append((sequence[i], sequence[i + 1]))
    return pairs


def _noise_distribution(vocab: Vocabulary) -> np.ndarray:
    weights = np.zeros(len(vocab))
    for tok, count in vocab.counts.items():
        weights[vocab.index_of(tok)] = count ** 0.75
    return weights / weights.sum()


def train_skipgram(corpus: list[list[str]], config: SkipGramConfig) -> EmbeddingTable:
    """Train a skip-gram table over the corpus; deterministic per seed.

    Input vectors start uniform in [-0.5/64, 0.5/64]; context vectors start
    at zero. The learning rate decays linearly over all updates. Per-epoch
    mean pair loss is recorded on the returned table's ``train_log``.
    """
    vocab = build_vocab(corpus)
    rng = np.random.default_rng(config.seed)
    input_vectors = rng.uniform(-0.5 / EMBED_DIM, 0.5 / EMBED_DIM, size=(len(vocab), EMBED_DIM))
    output_vectors = np.zeros((len(vocab), EMBED_DIM))
    table_view = EmbeddingTable(vocab=vocab, input_vectors=input_vectors, output_vectors=output_vectors)

    pairs = []
    for seq in corpus:
        pairs.extend(extract_pairs([vocab.index_of(t) for t in seq]))
    if not pairs:
        return table_view  # nothing adjacent to learn from; initialization stands

    noise = _noise_distribution(vocab)
    centers = np.array([p[0] for p in pairs])
    contexts = np.array([p[1] for p in pairs])
    total_updates = len(pairs) * config.epochs
    lr0 = config.learning_rate
    lr_floor = lr0 * _LR_FLOOR_FRACTION

    epoch_losses = []
    step = 0
    for _ in range(config.epochs):
        negatives = rng.choice(len(vocab), size=(len(pairs), config.negatives_k), p=noise)
        epoch_loss = 0.0
        for i in range(len(pairs)):
            ctx = int(contexts[i])
            negs = negatives[i]
            while np.any(negs == ctx):
                bad = negs == ctx
                if noise[ctx] >= 1.0 - 1e-12:  # no other token has noise mass
                    others = np.setdiff1d(np.arange(len(vocab)), [ctx])
                    negs[bad] = rng.choice(others, size=int(bad.sum()))
                else:
                    negs[bad] = rng.choice(len(vocab), size=int(bad.sum()), p=noise)
            lr = max(lr0 * (1.0 - step / total_updates), lr_floor)
            loss, grads = skipgram_loss_grad(table_view, int(centers[i]), ctx, list(negs))
            epoch_loss += loss
            input_vectors[centers[i]] -= lr * grads.d_center
            output_vectors[ctx] -= lr * grads.d_context
            np.add.at(output_vectors, negs, -lr * grads.d_negatives)
            step += 1
        epoch_losses.append(epoch_loss / len(pairs))

    return EmbeddingTable(vocab=vocab, input_vectors=input_vectors,
                          output_vectors=output_vectors, train_log=tuple(epoch_losses))


def block_embedding(table: EmbeddingTable, opcodes: list[str]) -> np.ndarray:
    """Arithmetic mean of the instruction vectors; OOV rows for unknown tokens."""
    if not opcodes:
        raise EmptyBlockError("cannot embed a block with no opcodes")
    rows = [table.vocab.index_of(t) for t in opcodes]
    return table.input_vectors[rows].mean(axis=0)


def table_to_json(table: EmbeddingTable) -> bytes:
    parts = [
        f'{{"dim": {EMBED_DIM}, ',
        f'"tokens": [{", ".join(fmt_str(t) for t in table.vocab.tokens)}], ',
        f'"counts": {{{", ".join(f"{fmt_str(t)}: {table.vocab.counts[t]}" for t in table.vocab.tokens[1:])}}}, ',
        f'"input": {fmt_float_matrix(table.input_vectors)}, ',
        f'"output": {fmt_float_matrix(table.output_vectors)}}}',
    ]
    return "".join(parts).encode("utf-8")


def table_from_json(data: bytes) -> EmbeddingTable:
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"invalid embedding table: {exc}") from exc
    if raw.get("dim") != EMBED_DIM:
        raise ParseError(f"embedding dim must be {EMBED_DIM}, got {raw.get('dim')}")
    vocab = Vocabulary(tokens=tuple(raw["tokens"]), counts={t: int(c) for t, c in raw["counts"].items()})
    return EmbeddingTable(
        vocab=vocab,
        input_vectors=np.asarray(raw["input"], dtype=np.float64),
        output_vectors=np.asarray(raw["output"], dtype=np.float64),
    )


def corpus_from_text(text: str) -> list[list[str]]:
    """One opcode sequence per line, tokens space-separated."""
    return [line.split() for line in text.splitlines() if line.strip()]


def corpus_to_text(corpus: list[list[str]]) -> str:
    return "\n".join(" ".join(seq) for seq in corpus) + "\n"
