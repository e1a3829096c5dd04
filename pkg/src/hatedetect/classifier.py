"""Three-layer deep classifier over pretrained embeddings: a BiLSTM, a
dense layer (identity activation by default), and a single sigmoid unit.

Training is mini-batch Adam on binary cross-entropy with seeded shuffling;
the checkpoint with the lowest validation loss is retained. Given the same
seed, initialization, training, and the saved checkpoint are all
bit-for-bit reproducible.
"""

from __future__ import annotations

import json
import logging
import zipfile
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import neural
from .corpus import HATE, NON_HATE
from .embed import EmbeddingMatrix, Vocabulary
from .metrics import WEIGHTED, prf
from .neural import AdamState, DenseParams, LstmCellParams, NumericError, adam_step
from .textprep import PipelineConfig, encode, preprocess

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = "1.0"

PARAM_NAMES = (
    "embedding",
    "fwd_w_in",
    "fwd_w_rec",
    "fwd_bias",
    "bwd_w_in",
    "bwd_w_rec",
    "bwd_bias",
    "dense1_weights",
    "dense1_bias",
    "dense2_weights",
    "dense2_bias",
)

SEQUENCE_REPRS = ("final", "flatten")


@dataclass(frozen=True)
class ModelConfig:
    embedding_dim: int = 300
    max_len: int = 50
    hidden_size: int = 128
    dense1_size: int = 64
    dense1_activation: str = "identity"
    sequence_repr: str = "final"
    embeddings_trainable: bool = False
    batch_size: int = 256
    epochs: int = 10
    learning_rate: float = 1e-3
    threshold: float = 0.5
    seed: int = 0
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)

    def __post_init__(self):
        for name in ("embedding_dim", "max_len", "hidden_size", "dense1_size", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.dense1_activation not in neural.DENSE_ACTIVATIONS:
            raise ValueError(f"unknown dense1 activation {self.dense1_activation!r}")
        if self.sequence_repr not in SEQUENCE_REPRS:
            raise ValueError(f"unknown sequence representation {self.sequence_repr!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")

    @property
    def feature_size(self) -> int:
        width = 2 * self.hidden_size
        return width * self.max_len if self.sequence_repr == "flatten" else width

    def to_dict(self) -> dict:
        data = {
            name: getattr(self, name)
            for name in (
                "embedding_dim",
                "max_len",
                "hidden_size",
                "dense1_size",
                "dense1_activation",
                "sequence_repr",
                "embeddings_trainable",
                "batch_size",
                "epochs",
                "learning_rate",
                "threshold",
                "seed",
            )
        }
        data["pipeline"] = self.pipeline.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        data = dict(data)
        data["pipeline"] = PipelineConfig.from_dict(data["pipeline"])
        return cls(**data)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    validation_loss: float
    validation_weighted_f1: float


@dataclass(frozen=True)
class TrainHistory:
    records: tuple
    selected_epoch: int

    def to_dict(self) -> dict:
        return {
            "records": [
                {
                    "epoch": r.epoch,
                    "train_loss": r.train_loss,
                    "validation_loss": r.validation_loss,
                    "validation_weighted_f1": r.validation_weighted_f1,
                }
                for r in self.records
            ],
            "selected_epoch": self.selected_epoch,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainHistory":
        records = tuple(
            EpochRecord(
                epoch=r["epoch"],
                train_loss=r["train_loss"],
                validation_loss=r["validation_loss"],
                validation_weighted_f1=r["validation_weighted_f1"],
            )
            for r in data["records"]
        )
        return cls(records, data["selected_epoch"])


def _expected_shapes(config: ModelConfig, vocab_size: int) -> dict:
    d, h = config.embedding_dim, config.hidden_size
    shapes = {"embedding": (vocab_size, d)}
    for direction in ("fwd", "bwd"):
        shapes[f"{direction}_w_in"] = (4 * h, d)
        shapes[f"{direction}_w_rec"] = (4 * h, h)
        shapes[f"{direction}_bias"] = (4 * h,)
    shapes["dense1_weights"] = (config.dense1_size, config.feature_size)
    shapes["dense1_bias"] = (config.dense1_size,)
    shapes["dense2_weights"] = (1, config.dense1_size)
    shapes["dense2_bias"] = (1,)
    return shapes


def init_params(config: ModelConfig, embedding_table: np.ndarray, dtype=np.float32) -> dict:
    """Seeded parameter dict; the embedding table is copied, everything else
    drawn uniform +-1/sqrt(fan) with zero biases."""
    rng = np.random.default_rng(config.seed)
    h = config.hidden_size
    params = {"embedding": np.array(embedding_table, dtype=dtype, order="C")}
    fwd = neural.init_lstm_params(config.embedding_dim, h, rng, dtype)
    bwd = neural.init_lstm_params(config.embedding_dim, h, rng, dtype)
    params.update(fwd_w_in=fwd.w_in, fwd_w_rec=fwd.w_rec, fwd_bias=fwd.bias)
    params.update(bwd_w_in=bwd.w_in, bwd_w_rec=bwd.w_rec, bwd_bias=bwd.bias)
    dense1 = neural.init_dense_params(config.feature_size, config.dense1_size, rng, dtype=dtype)
    dense2 = neural.init_dense_params(config.dense1_size, 1, rng, dtype=dtype)
    params.update(dense1_weights=dense1.weights, dense1_bias=dense1.bias)
    params.update(dense2_weights=dense2.weights, dense2_bias=dense2.bias)
    return params


def _forward_parts(params: dict, token_ids: np.ndarray, config: ModelConfig):
    emb_input = params["embedding"][token_ids]
    fwd = LstmCellParams(params["fwd_w_in"], params["fwd_w_rec"], params["fwd_bias"])
    bwd = LstmCellParams(params["bwd_w_in"], params["bwd_w_rec"], params["bwd_bias"])
    features, caches = neural.bilstm_batch_forward(emb_input, fwd, bwd, config.sequence_repr)
    dense1 = DenseParams(params["dense1_weights"], params["dense1_bias"], config.dense1_activation)
    hidden, dense1_cache = neural.dense_forward(features, dense1)
    logits = hidden @ params["dense2_weights"].T + params["dense2_bias"]
    probs = neural.sigmoid(logits[:, 0])
    return probs, (emb_input, fwd, bwd, caches, dense1, dense1_cache, hidden)


def forward_probs(params: dict, token_ids: np.ndarray, config: ModelConfig) -> np.ndarray:
    return _forward_parts(params, token_ids, config)[0]


def batch_loss(params: dict, token_ids: np.ndarray, labels, config: ModelConfig) -> float:
    """Mean BCE of the full model on one batch (forward only)."""
    return neural.bce(forward_probs(params, token_ids, config), labels)


def loss_and_grads(params: dict, token_ids: np.ndarray, labels, config: ModelConfig):
    """Loss plus analytic gradients for every trainable tensor.

    The embedding gradient is only produced when config.embeddings_trainable
    is set; all other gradients are always returned.
    """
    probs, parts = _forward_parts(params, token_ids, config)
    emb_input, fwd, bwd, caches, dense1, dense1_cache, hidden = parts
    loss = neural.bce(probs, labels)
    labels_arr = np.asarray(labels, dtype=probs.dtype)
    batch = len(labels_arr)
    # Exact gradient of the clamped BCE through the output sigmoid: zero
    # where the clamp is active, (p - y)/B elsewhere.
    active = (probs > neural.PROB_EPS) & (probs < 1.0 - neural.PROB_EPS)
    dz2 = np.where(active, (probs - labels_arr) / batch, 0.0).astype(probs.dtype)[:, None]
    grads = {
        "dense2_weights": dz2.T @ hidden,
        "dense2_bias": dz2.sum(axis=0),
    }
    d_hidden = dz2 @ params["dense2_weights"]
    d_features, d_w1, d_b1 = neural.dense_backward(d_hidden, dense1_cache, dense1)
    grads["dense1_weights"] = d_w1
    grads["dense1_bias"] = d_b1
    d_inputs, grads_fwd, grads_bwd = neural.bilstm_batch_backward(
        d_features, caches, fwd, bwd, config.sequence_repr
    )
    for direction, direction_grads in (("fwd", grads_fwd), ("bwd", grads_bwd)):
        grads[f"{direction}_w_in"] = direction_grads["w_in"]
        grads[f"{direction}_w_rec"] = direction_grads["w_rec"]
        grads[f"{direction}_bias"] = direction_grads["bias"]
    if config.embeddings_trainable:
        d_embedding = np.zeros_like(params["embedding"])
        np.add.at(
            d_embedding,
            token_ids.reshape(-1),
            d_inputs.reshape(-1, d_inputs.shape[-1]),
        )
        grads["embedding"] = d_embedding
    return loss, grads


class HateClassifier:
    """A built or loaded model: predicts hate probabilities for raw texts."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary, params: dict, history=None):
        expected = _expected_shapes(config, len(vocab))
        for name in PARAM_NAMES:
            if name not in params:
                raise ValueError(f"missing parameter tensor {name!r}")
            if tuple(params[name].shape) != expected[name]:
                raise ValueError(
                    f"checkpoint inconsistency: {name} has shape {params[name].shape}, "
                    f"expected {expected[name]}"
                )
        self.config = config
        self.vocab = vocab
        self.params = params
        self.history = history

    @classmethod
    def build(cls, config: ModelConfig, embeddings: EmbeddingMatrix) -> "HateClassifier":
        """Wire the three layers over a pretrained embedding matrix."""
        if embeddings.dim != config.embedding_dim:
            raise ValueError(
                f"embeddings have dimension {embeddings.dim} but the model "
                f"expects {config.embedding_dim}"
            )
        params = init_params(config, embeddings.vectors)
        return cls(config, embeddings.vocab, params)

    def encode_texts(self, texts) -> np.ndarray:
        rows = [
            encode(preprocess(text, self.config.pipeline), self.vocab, self.config.max_len)
            for text in texts
        ]
        if not rows:
            return np.zeros((0, self.config.max_len), dtype=np.int64)
        return np.stack(rows)

    def predict(self, texts) -> np.ndarray:
        """Hate probabilities in (0, 1), order-preserving, batch-size independent."""
        token_ids = self.encode_texts(texts)
        return self.predict_encoded(token_ids)

    def predict_encoded(self, token_ids: np.ndarray) -> np.ndarray:
        if token_ids.shape[0] == 0:
            return np.zeros(0, dtype=self.params["embedding"].dtype)
        chunks = []
        for start in range(0, token_ids.shape[0], self.config.batch_size):
            chunk = token_ids[start : start + self.config.batch_size]
            chunks.append(forward_probs(self.params, chunk, self.config))
        probs = np.concatenate(chunks)
        eps = probs.dtype.type(neural.PROB_EPS)
        return np.clip(probs, eps, 1.0 - eps)

    def classify(self, texts, threshold: float | None = None) -> list:
        """Hate iff probability >= threshold."""
        if threshold is None:
            threshold = self.config.threshold
        if not 0.0 < threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
        return [HATE if p >= threshold else NON_HATE for p in self.predict(texts)]

    def save(self, path) -> None:
        """Versioned archive: JSON manifest + raw little-endian float32 tensors."""
        manifest = {
            "format_version": CHECKPOINT_VERSION,
            "model_config": self.config.to_dict(),
            "vocabulary": list(self.vocab.tokens),
            "vocabulary_counts": list(self.vocab.counts),
            "history": self.history.to_dict() if self.history else None,
            "tensors": [
                {"name": name, "shape": list(self.params[name].shape)} for name in PARAM_NAMES
            ],
        }
        blob = b"".join(
            np.ascontiguousarray(self.params[name], dtype="<f4").tobytes() for name in PARAM_NAMES
        )
        stamp = (1980, 1, 1, 0, 0, 0)  # fixed so equal models give equal bytes
        with zipfile.ZipFile(path, "w") as archive:
            for name, data in (("manifest.json", json.dumps(manifest, indent=2)), ("params.bin", blob)):
                info = zipfile.ZipInfo(name, date_time=stamp)
                info.compress_type = zipfile.ZIP_DEFLATED
                archive.writestr(info, data)

    @classmethod
    def load(cls, path) -> "HateClassifier":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"checkpoint not found: {path}")
        try:
            with zipfile.ZipFile(path) as archive:
                manifest = json.loads(archive.read("manifest.json"))
                blob = archive.read("params.bin")
        except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, EOFError, zlib.error) as exc:
            raise ValueError(f"corrupt checkpoint file {path}: {exc}") from exc
        version = str(manifest.get("format_version", ""))
        major = version.split(".")[0]
        supported = int(CHECKPOINT_VERSION.split(".")[0])
        if not major.isdigit():
            raise ValueError(f"corrupt checkpoint file {path}: bad format version {version!r}")
        if int(major) > supported:
            raise ValueError(
                f"checkpoint format version {version} is newer than supported {CHECKPOINT_VERSION}"
            )
        config = ModelConfig.from_dict(manifest["model_config"])
        vocab = Vocabulary(manifest["vocabulary"], manifest["vocabulary_counts"])
        params = {}
        offset = 0
        for entry in manifest["tensors"]:
            shape = tuple(entry["shape"])
            nbytes = 4 * int(np.prod(shape))
            chunk = blob[offset : offset + nbytes]
            if len(chunk) < nbytes:
                raise ValueError(f"corrupt checkpoint file {path}: parameter blob truncated")
            params[entry["name"]] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
            offset += nbytes
        if offset != len(blob):
            raise ValueError(f"corrupt checkpoint file {path}: trailing bytes in parameter blob")
        history = TrainHistory.from_dict(manifest["history"]) if manifest.get("history") else None
        return cls(config, vocab, params, history)


def _encode_split(model: HateClassifier, part, part_name: str):
    if not part:
        raise ValueError(f"empty {part_name} split")
    labels = np.zeros(len(part), dtype=np.float32)
    for i, example in enumerate(part):
        if example.binary_label is None:
            raise ValueError(f"example {example.id} has no binary label; collapse first")
        labels[i] = 1.0 if example.binary_label == HATE else 0.0
    token_ids = model.encode_texts([example.text for example in part])
    return token_ids, labels


def train(model: HateClassifier, splits) -> tuple:
    """Mini-batch Adam training over a SplitBundle.

    Each epoch records train loss, validation loss, and validation weighted
    F1; the returned checkpoint carries the parameters of the epoch with
    the lowest validation loss (earliest on ties).
    """
    config = model.config
    train_ids, train_labels = _encode_split(model, splits.train, "training")
    val_ids, val_labels = _encode_split(model, splits.validation, "validation")
    val_actual = [example.binary_label for example in splits.validation]
    rng = np.random.default_rng([config.seed, 1])
    state = AdamState(learning_rate=config.learning_rate)
    trainable = [n for n in PARAM_NAMES if n != "embedding" or config.embeddings_trainable]
    records = []
    best_loss = None
    best_params = None
    selected_epoch = 0
    n = len(train_labels)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = loss_and_grads(model.params, train_ids[batch], train_labels[batch], config)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite training loss {loss!r} at epoch {epoch}, "
                    f"batch starting at {start}"
                )
            adam_step(model.params, {name: grads[name] for name in trainable}, state)
            loss_sum += loss * len(batch)
        train_loss = loss_sum / n
        val_probs = model.predict_encoded(val_ids)
        val_loss = neural.bce(val_probs, val_labels)
        val_predicted = [HATE if p >= config.threshold else NON_HATE for p in val_probs]
        val_f1 = prf((val_predicted, val_actual), WEIGHTED).f1
        records.append(EpochRecord(epoch, float(train_loss), float(val_loss), float(val_f1)))
        log.info(
            "epoch %d train_loss %.4f val_loss %.4f val_weighted_f1 %.4f",
            epoch, train_loss, val_loss, val_f1,
        )
        if best_loss is None or val_loss < best_loss:
            best_loss = val_loss
            best_params = {name: tensor.copy() for name, tensor in model.params.items()}
            selected_epoch = epoch
    history = TrainHistory(tuple(records), selected_epoch)
    model.history = history
    best = HateClassifier(config, model.vocab, best_params, history)
    return history, best


def sweep_dense1_activation(config: ModelConfig, embeddings: EmbeddingMatrix, splits):
    """Train once per dense1 activation; returns {activation: TrainHistory}."""
    results = {}
    for activation in neural.DENSE_ACTIVATIONS:
        variant = replace(config, dense1_activation=activation)
        model = HateClassifier.build(variant, embeddings)
        history, _best = train(model, splits)
        results[activation] = history
    return results
