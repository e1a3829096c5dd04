"""Domain-specific word embeddings: CBOW training with negative sampling,
cosine neighbor probes, and the plain-text vector format.

The trainer predicts each center word from the average of its context
vectors, contrasting the observed center against noise words drawn from a
unigram^0.75 distribution. Training is single-threaded and fully
deterministic for a given seed.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .textprep import PAD_INDEX, PAD_TOKEN, UNK_INDEX, UNK_TOKEN

log = logging.getLogger(__name__)


@dataclass
class Vocabulary:
    """Token <-> index bijection with frequency counts.

    Indices 0 and 1 are reserved for PAD and UNK; real tokens occupy
    2..V-1 ordered by (frequency desc, token asc).
    """

    tokens: list
    counts: list

    def __post_init__(self):
        if self.tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must reserve index 0 for PAD and 1 for UNK")
        if len(self.tokens) != len(self.counts):
            raise ValueError("tokens and counts length mismatch")
        self.index = {token: i for i, token in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token) -> bool:
        i = self.index.get(token)
        return i is not None and i >= 2

    def index_of(self, token) -> int:
        """Index of a token, UNK_INDEX when out of vocabulary."""
        i = self.index.get(token, UNK_INDEX)
        return i if i >= 2 else UNK_INDEX


def build_vocab(corpus, min_count: int = 1) -> Vocabulary:
    """Count tokens over a corpus of token sequences and keep the frequent ones.

    Tokens below min_count are dropped. Index assignment is deterministic:
    higher frequency first, ties broken lexicographically.
    """
    counter = Counter()
    n_sentences = 0
    for sentence in corpus:
        n_sentences += 1
        counter.update(sentence)
    if n_sentences == 0 or not counter:
        raise ValueError("empty corpus")
    kept = sorted(
        (t for t, c in counter.items() if c >= min_count),
        key=lambda t: (-counter[t], t),
    )
    if not kept:
        raise ValueError(f"no token reaches min_count={min_count}")
    tokens = [PAD_TOKEN, UNK_TOKEN, *kept]
    counts = [0, 0, *(counter[t] for t in kept)]
    return Vocabulary(tokens, counts)


@dataclass(frozen=True)
class CbowConfig:
    window: int = 5
    dim: int = 300
    negative: int = 5
    epochs: int = 5
    initial_lr: float = 0.025
    min_lr: float = 1e-4
    min_count: int = 5
    subsample: float = 1e-3  # 0 disables frequent-word subsampling
    dynamic_window: bool = True  # radius drawn uniform in 1..window per center
    seed: int = 0

    def __post_init__(self):
        if self.window < 1 or self.dim < 1 or self.negative < 1 or self.epochs < 1:
            raise ValueError("window, dim, negative, epochs must all be >= 1")
        if self.min_lr <= 0 or self.initial_lr < self.min_lr:
            raise ValueError("need initial_lr >= min_lr > 0")
        if self.subsample < 0:
            raise ValueError("subsample threshold must be >= 0")

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "dim": self.dim,
            "negative": self.negative,
            "epochs": self.epochs,
            "initial_lr": self.initial_lr,
            "min_lr": self.min_lr,
            "min_count": self.min_count,
            "subsample": self.subsample,
            "dynamic_window": self.dynamic_window,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CbowConfig":
        return cls(**data)


@dataclass
class EmbeddingMatrix:
    """V x dim table of word vectors tied to its Vocabulary."""

    vectors: np.ndarray
    vocab: Vocabulary

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.vocab):
            raise ValueError(
                f"vector table shape {self.vectors.shape} does not match "
                f"vocabulary of size {len(self.vocab)}"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding matrix contains non-finite values")
        if np.any(self.vectors[PAD_INDEX] != 0.0):
            raise ValueError("PAD row must be the zero vector")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def vector(self, token) -> np.ndarray:
        if token not in self.vocab:
            raise KeyError(f"token {token!r} not in vocabulary")
        return self.vectors[self.vocab.index[token]]

    def save_text(self, path) -> None:
        """Write the standard text format: "V dim" header, then one token
        per line followed by its components."""
        with open(path, "w", encoding="utf-8") as handle:
            v, dim = self.vectors.shape
            handle.write(f"{v} {dim}\n")
            for token, row in zip(self.vocab.tokens, self.vectors):
                handle.write(token + " " + " ".join(f"{x:.8f}" for x in row) + "\n")

    @classmethod
    def load_text(cls, path) -> "EmbeddingMatrix":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"embedding file not found: {path}")
        with open(path, encoding="utf-8") as handle:
            header = handle.readline().split()
            if len(header) != 2:
                raise ValueError(f"malformed header in {path}: expected 'V dim'")
            try:
                v, dim = int(header[0]), int(header[1])
            except ValueError:
                raise ValueError(f"malformed header in {path}: expected two integers") from None
            tokens, rows = [], []
            for line_number, line in enumerate(handle, start=2):
                fields = line.rstrip("\n").split(" ")
                if len(fields) != dim + 1:
                    raise ValueError(
                        f"{path}:{line_number}: expected 1 token + {dim} values, "
                        f"got {len(fields)} fields"
                    )
                tokens.append(fields[0])
                rows.append([float(x) for x in fields[1:]])
        if len(tokens) != v:
            raise ValueError(f"{path}: header claims {v} rows but file has {len(tokens)}")
        if len(set(tokens)) != len(tokens):
            raise ValueError(f"{path}: duplicate token in vector file")
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            # Third-party vector files have no reserved rows; add them.
            tokens = [PAD_TOKEN, UNK_TOKEN, *tokens]
            rows = [[0.0] * dim, [0.0] * dim, *rows]
        vocab = Vocabulary(tokens, [0] * len(tokens))
        return cls(np.asarray(rows, dtype=np.float64), vocab)


def cosine(u, v) -> float:
    """Cosine similarity in [-1, 1]; 0 (with a warning) if a vector is zero."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise ValueError("cosine requires finite vectors")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        log.warning("cosine of a zero vector is defined as 0")
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def nearest(word, k: int, matrix: EmbeddingMatrix) -> list:
    """Top-k neighbors by cosine, excluding the query, PAD, and UNK.

    Ranked by similarity descending, ties broken lexicographically.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if word not in matrix.vocab:
        raise KeyError(f"token {word!r} not in vocabulary")
    query_index = matrix.vocab.index[word]
    query = matrix.vectors[query_index]
    norms = np.linalg.norm(matrix.vectors, axis=1)
    query_norm = norms[query_index]
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = matrix.vectors @ query / np.where(norms * query_norm == 0, 1.0, norms * query_norm)
    sims = np.where((norms == 0) | (query_norm == 0), 0.0, sims)
    candidates = [
        (matrix.vocab.tokens[i], float(np.clip(sims[i], -1.0, 1.0)))
        for i in range(2, len(matrix.vocab))
        if i != query_index
    ]
    candidates.sort(key=lambda pair: (-pair[1], pair[0]))
    return candidates[:k]


def _pair_loss(input_vectors, output_vectors, context, center, negatives) -> float:
    """Negative-sampling loss for one center position (lower is better)."""
    h = input_vectors[context].mean(axis=0)
    s_pos = float(output_vectors[center] @ h)
    s_neg = output_vectors[negatives] @ h
    return float(np.logaddexp(0.0, -s_pos) + np.logaddexp(0.0, s_neg).sum())


def _pair_grads(input_vectors, output_vectors, context, center, negatives):
    """Loss and analytic gradients of _pair_loss for the rows it touches.

    Returns (loss, d_context_row, d_target_rows, targets): every context
    row receives d_context_row; output row targets[i] receives
    d_target_rows[i]. Duplicate indices accumulate.
    """
    h = input_vectors[context].mean(axis=0)
    targets = np.concatenate(([center], negatives))
    scores = output_vectors[targets] @ h
    loss = float(np.logaddexp(0.0, -scores[0]) + np.logaddexp(0.0, scores[1:]).sum())
    z = np.exp(-np.abs(scores))  # overflow-free sigmoid
    grad_scores = np.where(scores >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    grad_scores[0] -= 1.0
    d_target_rows = grad_scores[:, None] * h[None, :]
    dh = grad_scores @ output_vectors[targets]
    d_context_row = dh / len(context)
    return loss, d_context_row, d_target_rows, targets


def _draw_negatives(rng, cumulative, count, center):
    negatives = np.searchsorted(cumulative, rng.random(count), side="right")
    while True:
        clash = negatives == center
        if not clash.any():
            return negatives
        negatives[clash] = np.searchsorted(cumulative, rng.random(int(clash.sum())), side="right")


def train_cbow(corpus, config: CbowConfig, vocab: Vocabulary | None = None):
    """Train CBOW input vectors over a tokenized corpus.

    Per center position a context radius is drawn uniformly in 1..window,
    the context vectors are averaged, and one observed target plus
    `negative` noise words are updated through the sigmoid objective.
    Returns (EmbeddingMatrix, per-epoch mean objective). Only the input
    vectors are kept; the output table is discarded.
    """
    sentences = [list(s) for s in corpus]
    if vocab is None:
        vocab = build_vocab(sentences, config.min_count)
    v = len(vocab)
    encoded = []
    for sentence in sentences:
        ids = [vocab.index[t] for t in sentence if t in vocab]
        if ids:
            encoded.append(np.asarray(ids, dtype=np.int64))
    if not any(len(ids) >= 2 for ids in encoded):
        raise ValueError("no trainable (center, context) pair in the corpus")
    if v < 4:
        raise ValueError("vocabulary too small to draw negative samples")

    rng = np.random.default_rng(config.seed)
    input_vectors = np.zeros((v, config.dim))
    input_vectors[2:] = (rng.random((v - 2, config.dim)) - 0.5) / config.dim
    output_vectors = np.zeros((v, config.dim))

    counts = np.asarray(vocab.counts, dtype=np.float64)
    total_tokens = counts.sum()
    subsample = config.subsample
    if subsample > 0 and total_tokens == 0:
        # vocabularies loaded from vector files carry no counts
        log.warning("vocabulary has no frequency counts; subsampling disabled")
        subsample = 0.0
    keep_prob = np.ones(v)
    if subsample > 0:
        with np.errstate(divide="ignore", invalid="ignore"):
            frequency = counts / total_tokens
            keep_prob = np.sqrt(subsample / frequency) + subsample / frequency
        keep_prob = np.where(counts > 0, np.minimum(keep_prob, 1.0), 0.0)
    noise = counts**0.75
    if noise.sum() == 0:
        noise = np.ones(v)  # uniform over real tokens when counts are unknown
        noise[:2] = 0.0
    cumulative = np.cumsum(noise / noise.sum())

    total_words = sum(len(ids) for ids in encoded) * config.epochs
    processed = 0
    history = []
    for _epoch in range(config.epochs):
        loss_sum = 0.0
        n_updates = 0
        for sentence in encoded:
            lr = max(config.min_lr, config.initial_lr * (1.0 - processed / total_words))
            processed += len(sentence)
            if subsample > 0:
                sentence = sentence[rng.random(len(sentence)) < keep_prob[sentence]]
            if len(sentence) < 2:
                continue
            for position in range(len(sentence)):
                if config.dynamic_window:
                    radius = int(rng.integers(1, config.window + 1))
                else:
                    radius = config.window
                lo = max(0, position - radius)
                context = np.concatenate(
                    (sentence[lo:position], sentence[position + 1 : position + 1 + radius])
                )
                if context.size == 0:
                    continue
                center = int(sentence[position])
                negatives = _draw_negatives(rng, cumulative, config.negative, center)
                loss, d_context, d_targets, targets = _pair_grads(
                    input_vectors, output_vectors, context, center, negatives
                )
                loss_sum += loss
                np.subtract.at(output_vectors, targets, lr * d_targets)
                np.subtract.at(
                    input_vectors, context, lr * np.broadcast_to(d_context, (len(context), config.dim))
                )
                n_updates += 1
        history.append(loss_sum / max(1, n_updates))
        log.info("cbow epoch %d mean objective %.6f", _epoch, history[-1])
    return EmbeddingMatrix(input_vectors, vocab), history


def write_training_log(history, path) -> None:
    """Line-oriented "epoch,mean_objective" records."""
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("epoch,mean_objective\n")
        for epoch, value in enumerate(history):
            handle.write(f"{epoch},{value!r}\n")
