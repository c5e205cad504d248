"""Document encoders and task heads: AWE, sentence-averaging BiLSTM, and the
hierarchical attention network (tagged input turns HAN into HAN-ST)."""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import (
    CheckpointMismatchError,
    ConfigurationError,
    DegenerateInputError,
    ShapeMismatchError,
)
from .textprep import PAD_ID, TaggedDocument

MODEL_KINDS = ("awe", "sent_avg_bilstm", "han")
HEAD_KINDS = ("classify-2", "regress-1")

CHECKPOINT_MAGIC = b"HANSTCKPT1\n"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    model_kind: str
    head_kind: str
    vocab_size: int
    embedding_dim: int = 50
    bilstm_hidden: int = 256
    dropout_p: float = 0.5
    tagset: str = "none"

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ConfigurationError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if self.head_kind not in HEAD_KINDS:
            raise ConfigurationError(f"head_kind must be one of {HEAD_KINDS}, got {self.head_kind!r}")
        if self.vocab_size < 2:
            raise ConfigurationError(f"vocab_size must include the specials, got {self.vocab_size}")
        if self.embedding_dim < 1 or self.bilstm_hidden < 1:
            raise ConfigurationError("embedding_dim and bilstm_hidden must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigurationError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.tagset not in ("full", "reduced", "none"):
            raise ConfigurationError(f"unknown tagset {self.tagset!r}")

    @property
    def n_outputs(self) -> int:
        return 2 if self.head_kind == "classify-2" else 1


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

@dataclass
class Batch:
    """Right-padded id tensors with float masks (1 = real, 0 = padding)."""

    ids: np.ndarray          # [B, S, T] int64
    token_mask: np.ndarray   # [B, S, T]
    sent_mask: np.ndarray    # [B, S]
    doc_ids: list[str] = field(default_factory=list)
    labels: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.ids.shape[0]


def pad_batch(docs: list[TaggedDocument], labels=None) -> Batch:
    if not docs:
        raise DegenerateInputError("cannot batch zero documents")
    b = len(docs)
    s = max(len(d.sentences) for d in docs)
    t = max(len(sent) for d in docs for sent in d.sentences)
    ids = np.full((b, s, t), PAD_ID, dtype=np.int64)
    token_mask = np.zeros((b, s, t))
    sent_mask = np.zeros((b, s))
    for i, doc in enumerate(docs):
        for j, sent in enumerate(doc.sentences):
            ids[i, j, : len(sent)] = sent
            token_mask[i, j, : len(sent)] = 1.0
        sent_mask[i, : len(doc.sentences)] = 1.0
    return Batch(ids=ids, token_mask=token_mask, sent_mask=sent_mask,
                 doc_ids=[d.id for d in docs],
                 labels=None if labels is None else np.asarray(labels))


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

class LstmCell:
    """Single-direction LSTM cell with input and hidden biases.

    Weights are stored transposed ([input, 4h] / [hidden, 4h]) so the step is
    x @ w. Gate order along the 4h axis: input, forget, cell, output.
    """

    def __init__(self, prefix: str, input_dim: int, hidden: int,
                 params: dict[str, ad.Parameter], rng: np.random.Generator):
        self.hidden = hidden
        self.w_ih = _add(params, f"{prefix}.w_ih", ad.xavier_init((input_dim, 4 * hidden), "normal", rng))
        self.w_hh = _add(params, f"{prefix}.w_hh", ad.xavier_init((hidden, 4 * hidden), "normal", rng))
        self.b_ih = _add(params, f"{prefix}.b_ih", ad.zeros_init(4 * hidden))
        self.b_hh = _add(params, f"{prefix}.b_hh", ad.zeros_init(4 * hidden))

    def step(self, x: ad.Tensor, h: ad.Tensor, c: ad.Tensor, m: np.ndarray):
        """One update, gated by mask column m [B,1]: masked rows keep state."""
        gates = ad.add(ad.add(ad.matmul(x, self.w_ih), self.b_ih),
                       ad.add(ad.matmul(h, self.w_hh), self.b_hh))
        n = self.hidden
        i = ad.sigmoid(ad.slice_last(gates, 0, n))
        f = ad.sigmoid(ad.slice_last(gates, n, 2 * n))
        g = ad.tanh(ad.slice_last(gates, 2 * n, 3 * n))
        o = ad.sigmoid(ad.slice_last(gates, 3 * n, 4 * n))
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        c_out = ad.add(ad.mul_const(c_new, m), ad.mul_const(c, 1.0 - m))
        h_out = ad.add(ad.mul_const(h_new, m), ad.mul_const(h, 1.0 - m))
        return h_out, c_out


class BiLstmLayer:
    """Forward and backward cells over a [B, T, dim] sequence."""

    def __init__(self, prefix: str, input_dim: int, hidden: int,
                 params: dict[str, ad.Parameter], rng: np.random.Generator):
        self.hidden = hidden
        self.fw = LstmCell(f"{prefix}.fw", input_dim, hidden, params, rng)
        self.bw = LstmCell(f"{prefix}.bw", input_dim, hidden, params, rng)

    def run(self, xs: ad.Tensor, mask: np.ndarray):
        """Return (per-position states [B,T,2h], final forward, final backward).

        Mask gating carries state through padded positions, so outputs match
        a run over the unpadded sequence.
        """
        b, t, _ = xs.shape
        steps = [ad.index_axis(xs, i, axis=1) for i in range(t)]
        cols = [mask[:, i: i + 1] for i in range(t)]

        h = c = ad.Tensor(np.zeros((b, self.hidden)))
        fw_states = []
        for i in range(t):
            h, c = self.fw.step(steps[i], h, c, cols[i])
            fw_states.append(h)
        final_fw = h

        h = c = ad.Tensor(np.zeros((b, self.hidden)))
        bw_states = [None] * t
        for i in reversed(range(t)):
            h, c = self.bw.step(steps[i], h, c, cols[i])
            bw_states[i] = h
        final_bw = h

        per_pos = [ad.concat([fw_states[i], bw_states[i]], axis=1) for i in range(t)]
        return ad.stack(per_pos, axis=1), final_fw, final_bw


class AttentionPool:
    """tanh-projected states scored against a learned context vector."""

    def __init__(self, prefix: str, dim: int, params: dict[str, ad.Parameter],
                 rng: np.random.Generator):
        self.dim = dim
        self.w = _add(params, f"{prefix}.w", ad.xavier_init((dim, dim), "uniform", rng))
        self.b = _add(params, f"{prefix}.b", ad.zeros_init(dim))
        self.u = _add(params, f"{prefix}.u", ad.xavier_init((dim, 1), "uniform", rng))

    def run(self, states: ad.Tensor, mask: np.ndarray):
        """Pool [B,T,D] into [B,D]; returns (pooled, weights [B,T])."""
        b, t, d = states.shape
        flat = ad.reshape(states, (b * t, d))
        proj = ad.tanh(ad.add(ad.matmul(flat, self.w), self.b))
        scores = ad.reshape(ad.matmul(proj, self.u), (b, t))
        alpha = ad.softmax(scores, mask=mask.astype(bool))
        return ad.weighted_sum(states, alpha), alpha


def _add(params: dict[str, ad.Parameter], name: str, values: np.ndarray) -> ad.Parameter:
    if name in params:
        raise ConfigurationError(f"duplicate parameter name {name!r}")
    p = ad.Parameter(values, name=name)
    params[name] = p
    return p


def _masked_mean_rows(emb: ad.Tensor, ids: np.ndarray, mask: np.ndarray) -> ad.Tensor:
    """Mean embedding of unmasked ids per row: [N, T] -> [N, d].

    Rows with no unmasked ids come out zero.
    """
    gathered = ad.rows(emb, ids)
    counts = np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
    return ad.weighted_sum(gathered, ad.Tensor(mask / counts))


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

@dataclass
class ForwardResult:
    output: ad.Tensor                     # [B, n_outputs]
    doc_vectors: ad.Tensor                # [B, doc_dim]
    word_attention: np.ndarray | None = None   # [B, S, T]
    sent_attention: np.ndarray | None = None   # [B, S]


class Model:
    """Shared head, dropout, and parameter registry."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator,
                 embeddings: np.ndarray | None = None):
        self.config = config
        self.params: dict[str, ad.Parameter] = {}
        if embeddings is None:
            embeddings = ad.xavier_init((config.vocab_size, config.embedding_dim), "uniform", rng)
            embeddings[PAD_ID] = 0.0
        elif embeddings.shape != (config.vocab_size, config.embedding_dim):
            raise ShapeMismatchError(
                f"embeddings {embeddings.shape} vs configured {(config.vocab_size, config.embedding_dim)}")
        self.embedding = _add(self.params, "embedding", np.array(embeddings, dtype=np.float64))
        self._build(rng)
        self.head_w = _add(self.params, "head.w",
                           ad.xavier_init((self.doc_dim(), config.n_outputs), "uniform", rng))
        self.head_b = _add(self.params, "head.b", ad.zeros_init(config.n_outputs))

    def _build(self, rng):
        raise NotImplementedError

    def doc_dim(self) -> int:
        raise NotImplementedError

    def encode(self, batch: Batch):
        raise NotImplementedError

    def forward(self, batch: Batch, training: bool = False,
                rng: np.random.Generator | None = None) -> ForwardResult:
        doc, word_alpha, sent_alpha = self.encode(batch)
        dropped = ad.dropout(doc, self.config.dropout_p, training=training, rng=rng)
        output = ad.add(ad.matmul(dropped, self.head_w), self.head_b)
        return ForwardResult(output=output, doc_vectors=doc,
                             word_attention=word_alpha, sent_attention=sent_alpha)


class AweModel(Model):
    """Mean embedding of every non-padding token in the document."""

    def _build(self, rng):
        pass

    def doc_dim(self) -> int:
        return self.config.embedding_dim

    def encode(self, batch: Batch):
        b, s, t = batch.ids.shape
        ids = batch.ids.reshape(b, s * t)
        mask = batch.token_mask.reshape(b, s * t)
        if (mask.sum(axis=1) == 0).any():
            raise DegenerateInputError("document with no unmasked tokens")
        doc = _masked_mean_rows(self.embedding, ids, mask)
        return doc, None, None


class SentAvgBilstmModel(Model):
    """Mean word embedding per sentence, document BiLSTM, final-state concat."""

    def _build(self, rng):
        self.sent_bilstm = BiLstmLayer("sent_bilstm", self.config.embedding_dim,
                                       self.config.bilstm_hidden, self.params, rng)

    def doc_dim(self) -> int:
        return 2 * self.config.bilstm_hidden

    def encode(self, batch: Batch):
        b, s, t = batch.ids.shape
        sent_vecs = _masked_mean_rows(self.embedding, batch.ids.reshape(b * s, t),
                                      batch.token_mask.reshape(b * s, t))
        sent_vecs = ad.reshape(sent_vecs, (b, s, self.config.embedding_dim))
        _, final_fw, final_bw = self.sent_bilstm.run(sent_vecs, batch.sent_mask)
        return ad.concat([final_fw, final_bw], axis=1), None, None


class HanModel(Model):
    """Word BiLSTM + attention per sentence, then sentence BiLSTM + attention.

    Structure-tagged input uses this exact architecture; only the token
    sequences differ.
    """

    def _build(self, rng):
        h = self.config.bilstm_hidden
        self.word_bilstm = BiLstmLayer("word_bilstm", self.config.embedding_dim, h, self.params, rng)
        self.word_attn = AttentionPool("word_attn", 2 * h, self.params, rng)
        self.sent_bilstm = BiLstmLayer("sent_bilstm", 2 * h, h, self.params, rng)
        self.sent_attn = AttentionPool("sent_attn", 2 * h, self.params, rng)

    def doc_dim(self) -> int:
        return 2 * self.config.bilstm_hidden

    def encode(self, batch: Batch):
        b, s, t = batch.ids.shape
        ids = batch.ids.reshape(b * s, t)
        token_mask = batch.token_mask.reshape(b * s, t)
        # padding sentences get a dummy all-ones mask so the word softmax is
        # defined; their vectors are discarded by the sentence-level mask
        empty = token_mask.sum(axis=1) == 0
        if empty.any():
            token_mask = np.where(empty[:, None], 1.0, token_mask)
        words = ad.rows(self.embedding, ids)
        word_states, _, _ = self.word_bilstm.run(words, token_mask)
        sent_vecs, word_alpha = self.word_attn.run(word_states, token_mask)
        sent_seq = ad.reshape(sent_vecs, (b, s, 2 * self.config.bilstm_hidden))
        sent_states, _, _ = self.sent_bilstm.run(sent_seq, batch.sent_mask)
        doc, sent_alpha = self.sent_attn.run(sent_states, batch.sent_mask)
        word_maps = word_alpha.values.reshape(b, s, t) * batch.sent_mask[:, :, None]
        return doc, word_maps, sent_alpha.values


_MODEL_CLASSES = {"awe": AweModel, "sent_avg_bilstm": SentAvgBilstmModel, "han": HanModel}

# per-task defaults: (embedding_dim, bilstm_hidden, dropout_p, head_kind)
TASK_DEFAULTS = {
    "classify": (50, 256, 0.5, "classify-2"),
    "regress": (300, 100, 0.2, "regress-1"),
}


def default_model_config(model_kind: str, task: str, vocab_size: int,
                         tagset: str = "none") -> ModelConfig:
    if task not in TASK_DEFAULTS:
        raise ConfigurationError(f"task must be one of {sorted(TASK_DEFAULTS)}, got {task!r}")
    dim, hidden, p, head = TASK_DEFAULTS[task]
    return ModelConfig(model_kind=model_kind, head_kind=head, vocab_size=vocab_size,
                       embedding_dim=dim, bilstm_hidden=hidden, dropout_p=p, tagset=tagset)


def build_model(config: ModelConfig, rng: np.random.Generator,
                embeddings: np.ndarray | None = None) -> Model:
    return _MODEL_CLASSES[config.model_kind](config, rng, embeddings)


def count_parameters(model: Model) -> int:
    return sum(p.size for p in model.params.values())


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: Model, vocab_sha256: str, path) -> None:
    """Versioned binary container: magic, JSON header, float64 payloads."""
    names = sorted(model.params)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": asdict(model.config),
        "vocab_sha256": vocab_sha256,
        "params": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params[n].values, dtype="<f8").tobytes())


def _read_header(fh, path) -> dict:
    magic = fh.read(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointMismatchError(f"{path}: not a model checkpoint")
    (length,) = struct.unpack("<Q", fh.read(8))
    return json.loads(fh.read(length).decode("utf-8"))


def read_checkpoint_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh, path)


def load_checkpoint(path, expected_vocab_sha256: str | None = None,
                    expected_config: ModelConfig | None = None) -> tuple[Model, str]:
    """Rebuild a model from a checkpoint, verifying config and vocab hash."""
    with open(path, "rb") as fh:
        header = _read_header(fh, path)
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointMismatchError(f"unsupported checkpoint version {header.get('format_version')!r}")
        config = ModelConfig(**header["model_config"])
        if expected_config is not None and config != expected_config:
            raise CheckpointMismatchError(f"checkpoint config {config} != session config {expected_config}")
        if expected_vocab_sha256 is not None and header["vocab_sha256"] != expected_vocab_sha256:
            raise CheckpointMismatchError(
                f"checkpoint vocabulary hash {header['vocab_sha256'][:12]}... does not match "
                f"session vocabulary {expected_vocab_sha256[:12]}...")
        model = build_model(config, np.random.default_rng(0))
        for entry in header["params"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in model.params:
                raise CheckpointMismatchError(f"checkpoint has unknown parameter {name!r}")
            param = model.params[name]
            if param.shape != shape:
                raise CheckpointMismatchError(
                    f"parameter {name!r}: checkpoint shape {shape} != model shape {param.shape}")
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8", count=count)
            param.values = data.reshape(shape).astype(np.float64)
    return model, header["vocab_sha256"]
