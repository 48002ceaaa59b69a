"""Document embeddings: hashed-token base encoder plus a trainable linear head.

The base encoder maps each token type to a fixed pseudo-random unit vector
(derived from a keyed hash, so it is identical across runs and machines),
mean-pools the token vectors of title + abstract, and L2-normalizes the
result.  A linear projection on top is trained with a triplet margin loss:
anchors should sit closer to important citations than to unimportant or
uncited documents.  Gradients are analytic and checked against central finite
differences in the test suite.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import random
import re
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Corpus, Document
from .errors import ValidationError
from .sampler import Triplet

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
_NORM_EPS = 1e-12


@dataclass(frozen=True)
class BaseEncoderConfig:
    dim_base: int = 256
    hash_seed: int = 0
    max_tokens: int = 512

    def __post_init__(self):
        if self.dim_base < 2:
            raise ValidationError("dim_base must be >= 2")
        if self.max_tokens < 1:
            raise ValidationError("max_tokens must be >= 1")


def tokenize(text: str) -> list[str]:
    """Lowercased runs of unicode alphanumerics."""
    return _TOKEN_RE.findall(text.lower())


_token_cache: dict[tuple[int, int, str], np.ndarray] = {}


def _token_vector(token: str, cfg: BaseEncoderConfig) -> np.ndarray:
    key = (cfg.hash_seed, cfg.dim_base, token)
    v = _token_cache.get(key)
    if v is None:
        digest = hashlib.blake2b(f"{cfg.hash_seed}|{token}".encode("utf-8"), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        v = rng.standard_normal(cfg.dim_base)
        v /= np.linalg.norm(v)
        v.flags.writeable = False
        _token_cache[key] = v
    return v


def base_embed(doc: Document, cfg: BaseEncoderConfig = BaseEncoderConfig()) -> np.ndarray:
    """Mean of token vectors over title + abstract, L2-normalized.

    An empty abstract degrades gracefully to title-only text; a document with
    no tokens at all is an error.
    """
    tokens = tokenize(doc.title + " " + doc.abstract)[: cfg.max_tokens]
    if not tokens:
        raise ValidationError(f"document {doc.id!r} has no tokens to encode")
    acc = np.zeros(cfg.dim_base)
    for tok in tokens:
        acc += _token_vector(tok, cfg)
    acc /= len(tokens)
    norm = np.linalg.norm(acc)
    if norm < _NORM_EPS:
        raise ValidationError(f"document {doc.id!r} produced a zero base vector")
    return acc / norm


@dataclass
class EmbeddingModel:
    """Base encoder configuration plus the trainable projection matrix."""

    base: BaseEncoderConfig
    projection: np.ndarray  # shape (dim_out, dim_base)

    @property
    def dim_out(self) -> int:
        return self.projection.shape[0]

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(base=self.base, projection=self.projection.copy())


def init_model(base: BaseEncoderConfig = BaseEncoderConfig(), dim_out: int = 64, seed: int = 0) -> EmbeddingModel:
    if dim_out < 1:
        raise ValidationError("dim_out must be >= 1")
    rng = np.random.default_rng(seed)
    projection = rng.standard_normal((dim_out, base.dim_base)) / math.sqrt(base.dim_base)
    return EmbeddingModel(base=base, projection=projection)


def project(model: EmbeddingModel, vector: np.ndarray) -> np.ndarray:
    v = np.asarray(vector, dtype=float)
    if v.shape != (model.base.dim_base,):
        raise ValidationError(f"expected base vector of dim {model.base.dim_base}, got shape {v.shape}")
    return model.projection @ v


def triplet_loss(v_anchor: np.ndarray, v_positive: np.ndarray, v_negative: np.ndarray, margin: float = 1.0) -> float:
    """Hinge on the distance gap: max(||a-p|| - ||a-n|| + margin, 0)."""
    d_pos = float(np.linalg.norm(np.asarray(v_anchor) - np.asarray(v_positive)))
    d_neg = float(np.linalg.norm(np.asarray(v_anchor) - np.asarray(v_negative)))
    return max(d_pos - d_neg + margin, 0.0)


def loss_gradients(
    model: EmbeddingModel,
    x_anchor: np.ndarray,
    x_positive: np.ndarray,
    x_negative: np.ndarray,
    margin: float = 1.0,
) -> np.ndarray:
    """d(loss)/d(projection) for one triplet of base vectors.

    Returns the zero matrix whenever the hinge is inactive (including exactly
    at the boundary).  Distance norms are guarded with a small epsilon.
    """
    w = model.projection
    va, vp, vn = w @ x_anchor, w @ x_positive, w @ x_negative
    dp = float(np.linalg.norm(va - vp))
    dn = float(np.linalg.norm(va - vn))
    if dp - dn + margin <= 0.0:
        return np.zeros_like(w)
    u_pos = (va - vp) / (dp + _NORM_EPS)
    u_neg = (va - vn) / (dn + _NORM_EPS)
    d_va = u_pos - u_neg
    grad = np.outer(d_va, x_anchor)
    grad -= np.outer(u_pos, x_positive)
    grad += np.outer(u_neg, x_negative)
    return grad


def finite_difference_check(
    model: EmbeddingModel,
    x_anchor: np.ndarray,
    x_positive: np.ndarray,
    x_negative: np.ndarray,
    margin: float = 1.0,
    h: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients."""
    analytic = loss_gradients(model, x_anchor, x_positive, x_negative, margin)
    w = model.projection
    worst = 0.0
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            orig = w[i, j]
            w[i, j] = orig + h
            up = _loss_for(w, x_anchor, x_positive, x_negative, margin)
            w[i, j] = orig - h
            dn = _loss_for(w, x_anchor, x_positive, x_negative, margin)
            w[i, j] = orig
            numeric = (up - dn) / (2.0 * h)
            denom = max(abs(analytic[i, j]), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic[i, j] - numeric) / denom)
    return worst


def _loss_for(w: np.ndarray, xa: np.ndarray, xp: np.ndarray, xn: np.ndarray, margin: float) -> float:
    return triplet_loss(w @ xa, w @ xp, w @ xn, margin)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    margin: float = 1.0
    learning_rate: float = 1e-2
    batch_size: int = 8
    grad_accumulation: int = 4
    epochs: int = 2
    warmup_fraction: float = 0.1
    optimizer: str = "adamw"  # "adamw" or "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.margin < 0:
            raise ValidationError("margin must be nonnegative")
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be nonnegative")
        if self.batch_size < 1 or self.grad_accumulation < 1:
            raise ValidationError("batch_size and grad_accumulation must be >= 1")
        if self.epochs < 0:
            raise ValidationError("epochs must be nonnegative")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ValidationError("warmup_fraction must lie in [0, 1]")
        if self.optimizer not in ("adamw", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainingHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)


def _base_matrix_for(ids: Sequence[str], corpus: Corpus, cfg: BaseEncoderConfig) -> dict[str, np.ndarray]:
    return {doc_id: base_embed(corpus.get(doc_id), cfg) for doc_id in ids}


def _batch_loss_and_grad(
    w: np.ndarray, xa: np.ndarray, xp: np.ndarray, xn: np.ndarray, margin: float
) -> tuple[float, np.ndarray]:
    """Summed loss and gradient over a batch of base-vector triplets."""
    va, vp, vn = xa @ w.T, xp @ w.T, xn @ w.T
    dp = np.linalg.norm(va - vp, axis=1)
    dn = np.linalg.norm(va - vn, axis=1)
    losses = dp - dn + margin
    active = losses > 0.0
    total_loss = float(losses[active].sum())
    if not active.any():
        return total_loss, np.zeros_like(w)
    u_pos = (va - vp) / (dp + _NORM_EPS)[:, None]
    u_neg = (va - vn) / (dn + _NORM_EPS)[:, None]
    u_pos[~active] = 0.0
    u_neg[~active] = 0.0
    grad = (u_pos - u_neg).T @ xa - u_pos.T @ xp + u_neg.T @ xn
    return total_loss, grad


def _mean_loss(w: np.ndarray, xa: np.ndarray, xp: np.ndarray, xn: np.ndarray, margin: float) -> float:
    va, vp, vn = xa @ w.T, xp @ w.T, xn @ w.T
    dp = np.linalg.norm(va - vp, axis=1)
    dn = np.linalg.norm(va - vn, axis=1)
    return float(np.maximum(dp - dn + margin, 0.0).mean())


def _triplet_arrays(
    triplets: Sequence[Triplet], base: dict[str, np.ndarray], dim: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xa = np.empty((len(triplets), dim))
    xp = np.empty((len(triplets), dim))
    xn = np.empty((len(triplets), dim))
    for i, t in enumerate(triplets):
        xa[i] = base[t.anchor_id]
        xp[i] = base[t.positive_id]
        xn[i] = base[t.negative_id]
    return xa, xp, xn


def learning_rate_at(step: int, total_steps: int, cfg: TrainConfig) -> float:
    """Linear warmup over the first ``warmup_fraction`` of updates, then linear decay to 0."""
    warmup = int(cfg.warmup_fraction * total_steps)
    if step < warmup:
        return cfg.learning_rate * (step + 1) / warmup
    remaining = max(total_steps - warmup, 1)
    return cfg.learning_rate * (total_steps - step) / remaining


def train(
    model: EmbeddingModel,
    triplets: Sequence[Triplet],
    corpus: Corpus,
    cfg: TrainConfig = TrainConfig(),
    val_triplets: Sequence[Triplet] | None = None,
) -> tuple[EmbeddingModel, TrainingHistory]:
    """Train the projection head with mini-batch updates and gradient accumulation.

    Each optimizer update averages gradients over ``grad_accumulation``
    consecutive batches.  Training is deterministic for a fixed seed; zero
    epochs or a zero learning rate leave the projection untouched.
    """
    if not triplets:
        raise ValidationError("no training triplets supplied")
    history = TrainingHistory()
    out = model.copy()
    if cfg.epochs == 0:
        return out, history

    ids = {t.anchor_id for t in triplets} | {t.positive_id for t in triplets} | {t.negative_id for t in triplets}
    if val_triplets:
        for t in val_triplets:
            ids |= {t.anchor_id, t.positive_id, t.negative_id}
    base = _base_matrix_for(sorted(ids), corpus, out.base)
    xa, xp, xn = _triplet_arrays(triplets, base, out.base.dim_base)
    if val_triplets:
        va_, vp_, vn_ = _triplet_arrays(val_triplets, base, out.base.dim_base)

    n = len(triplets)
    batches_per_epoch = math.ceil(n / cfg.batch_size)
    updates_per_epoch = math.ceil(batches_per_epoch / cfg.grad_accumulation)
    total_updates = updates_per_epoch * cfg.epochs

    w = out.projection
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    step = 0
    adam_t = 0

    for epoch in range(cfg.epochs):
        order = list(range(n))
        random.Random(f"{cfg.seed}:{epoch}").shuffle(order)
        epoch_loss = 0.0
        acc = np.zeros_like(w)
        acc_batches = 0
        for b in range(batches_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            loss_sum, grad_sum = _batch_loss_and_grad(w, xa[idx], xp[idx], xn[idx], cfg.margin)
            epoch_loss += loss_sum
            acc += grad_sum / len(idx)
            acc_batches += 1
            if acc_batches == cfg.grad_accumulation or b == batches_per_epoch - 1:
                g = acc / acc_batches
                lr = learning_rate_at(step, total_updates, cfg)
                if cfg.optimizer == "sgd":
                    w -= lr * g
                else:
                    adam_t += 1
                    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
                    v = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
                    m_hat = m / (1.0 - cfg.beta1**adam_t)
                    v_hat = v / (1.0 - cfg.beta2**adam_t)
                    w -= lr * (m_hat / (np.sqrt(v_hat) + cfg.adam_eps) + cfg.weight_decay * w)
                step += 1
                acc = np.zeros_like(w)
                acc_batches = 0
        history.train_loss.append(epoch_loss / n)
        if val_triplets:
            history.val_loss.append(_mean_loss(w, va_, vp_, vn_, cfg.margin))
    return out, history


def triplet_satisfaction(model: EmbeddingModel, triplets: Sequence[Triplet], corpus: Corpus) -> float:
    """Fraction of triplets whose anchor is strictly closer to the positive."""
    if not triplets:
        raise ValidationError("no triplets to evaluate")
    ids = sorted({i for t in triplets for i in (t.anchor_id, t.positive_id, t.negative_id)})
    base = _base_matrix_for(ids, corpus, model.base)
    xa, xp, xn = _triplet_arrays(triplets, base, model.base.dim_base)
    w = model.projection
    va, vp, vn = xa @ w.T, xp @ w.T, xn @ w.T
    dp = np.linalg.norm(va - vp, axis=1)
    dn = np.linalg.norm(va - vn, axis=1)
    return float((dp < dn).mean())


# ---------------------------------------------------------------------------
# Embedding matrices
# ---------------------------------------------------------------------------


@dataclass
class EmbeddingMatrix:
    """Document ids paired row-for-row with embedding vectors."""

    ids: list[str]
    vectors: np.ndarray  # shape (n, dim)

    def __post_init__(self):
        if len(self.ids) != self.vectors.shape[0]:
            raise ValidationError("id count and vector row count differ")
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("duplicate ids in embedding matrix")
        self._pos = {doc_id: i for i, doc_id in enumerate(self.ids)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._pos

    def row(self, doc_id: str) -> np.ndarray:
        if doc_id not in self._pos:
            raise ValidationError(f"unknown document id: {doc_id!r}")
        return self.vectors[self._pos[doc_id]]

    __getitem__ = row


def embed_corpus(corpus: Corpus, model: EmbeddingModel) -> EmbeddingMatrix:
    """Project every document, rows in corpus order."""
    if len(corpus) == 0:
        raise ValidationError("cannot embed an empty corpus")
    vectors = np.empty((len(corpus), model.dim_out))
    ids = []
    for i, doc in enumerate(corpus):
        vectors[i] = model.projection @ base_embed(doc, model.base)
        ids.append(doc.id)
    return EmbeddingMatrix(ids=ids, vectors=vectors)


def nearest_documents(matrix: EmbeddingMatrix, query_id: str, n: int = 10, metric: str = "cosine") -> list[str]:
    """The ``n`` most cosine-similar documents to the query, ties by ascending id."""
    if metric != "cosine":
        raise ValidationError(f"unknown metric {metric!r}")
    if n < 1:
        raise ValidationError("n must be >= 1")
    q = matrix.row(query_id)
    qn = np.linalg.norm(q)
    norms = np.linalg.norm(matrix.vectors, axis=1)
    denom = np.where(norms * qn > 0.0, norms * qn, 1.0)
    sims = (matrix.vectors @ q) / denom
    ranked = sorted(
        (doc_id for doc_id in matrix.ids if doc_id != query_id),
        key=lambda d: (-sims[matrix._pos[d]], d),
    )
    return ranked[:n]


# ---------------------------------------------------------------------------
# Embedding file formats
# ---------------------------------------------------------------------------

_MAGIC = b"CMEM"
_BINARY_VERSION = 1


def write_embeddings_text(matrix: EmbeddingMatrix, path: str, meta_lines: Sequence[str] = ()) -> None:
    """Text format: '#dim=<d>' header then one id + <d> values per line (32-bit precision)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in meta_lines:
            fh.write(f"# {line}\n")
        fh.write(f"#dim={matrix.dim}\n")
        for i, doc_id in enumerate(matrix.ids):
            vals = "\t".join(f"{v:.9g}" for v in matrix.vectors[i].astype(np.float32))
            fh.write(f"{doc_id}\t{vals}\n")


def read_embeddings_text(path: str) -> EmbeddingMatrix:
    dim: int | None = None
    ids: list[str] = []
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                if line.startswith("#dim="):
                    dim = int(line[len("#dim=") :])
                continue
            parts = line.split("\t")
            if dim is None:
                raise ValidationError(f"{path}: missing '#dim=' header before data")
            if len(parts) != dim + 1:
                raise ValidationError(f"{path}: line {line_no}: expected {dim + 1} fields, got {len(parts)}")
            ids.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    if dim is None:
        raise ValidationError(f"{path}: missing '#dim=' header")
    vectors = np.asarray(rows, dtype=np.float32).astype(float).reshape(len(ids), dim)
    return EmbeddingMatrix(ids=ids, vectors=vectors)


def write_embeddings_binary(matrix: EmbeddingMatrix, path: str) -> None:
    """Binary format: magic 'CMEM', u32 version, u32 dim, u64 rows, then
    per row a u32 length-prefixed UTF-8 id and dim little-endian float32 values."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _BINARY_VERSION, matrix.dim))
        fh.write(struct.pack("<Q", len(matrix.ids)))
        for i, doc_id in enumerate(matrix.ids):
            raw = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(matrix.vectors[i].astype("<f4").tobytes())


def read_embeddings_binary(path: str) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValidationError(f"{path}: bad magic {magic!r}")
        version, dim = struct.unpack("<II", fh.read(8))
        if version != _BINARY_VERSION:
            raise ValidationError(f"{path}: unsupported version {version}")
        (count,) = struct.unpack("<Q", fh.read(8))
        ids = []
        vectors = np.empty((count, dim))
        for i in range(count):
            (id_len,) = struct.unpack("<I", fh.read(4))
            ids.append(fh.read(id_len).decode("utf-8"))
            vectors[i] = np.frombuffer(fh.read(4 * dim), dtype="<f4").astype(float)
    return EmbeddingMatrix(ids=ids, vectors=vectors)


def write_model(model: EmbeddingModel, path: str, meta: dict | None = None) -> None:
    obj = {
        "base": {
            "dim_base": model.base.dim_base,
            "hash_seed": model.base.hash_seed,
            "max_tokens": model.base.max_tokens,
        },
        "dim_out": model.dim_out,
        "projection_shape": list(model.projection.shape),
        "projection_b64": base64.b64encode(np.ascontiguousarray(model.projection, dtype="<f8").tobytes()).decode(
            "ascii"
        ),
    }
    if meta:
        obj["_meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_model(path: str) -> EmbeddingModel:
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        base = BaseEncoderConfig(**obj["base"])
        shape = tuple(obj["projection_shape"])
        raw = base64.b64decode(obj["projection_b64"])
        projection = np.frombuffer(raw, dtype="<f8").astype(float).reshape(shape)
    except (KeyError, TypeError, struct.error) as exc:
        raise ValidationError(f"{path}: malformed model file: {exc}") from None
    return EmbeddingModel(base=base, projection=projection)
