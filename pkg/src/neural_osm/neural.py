"""Feed-forward (m+n)-gram model over stream pairs, trained with NCE.

Architecture: one shared lookup table over the joint input vocabulary,
the concatenated context embeddings go through one rectified hidden layer,
and a softmax over the output (target-stream) vocabulary.

Input ids: target-stream tokens occupy ``[0, |V_t|)`` and source-stream
tokens are offset by ``|V_t|``, so the same string on the two sides gets
two different embeddings.

Training uses noise-contrastive estimation with the normaliser fixed to 1;
all scoring (``softmax_prob``, ``score_stream``, ``perplexity``) uses the
exact softmax.  An NCE score is therefore not a probability.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import Vocabulary, build_vocabulary
from .streams import StreamPair, is_reordering_symbol, make_instances

MAGIC = b"NOSMNN\x00\x01"
FORMAT_VERSION = 1
PARAM_NAMES = ("L", "W_h", "b_h", "W_o", "b_o")


class NeuralError(ValueError):
    pass


class ModelFormatError(NeuralError):
    pass


class ConfigMismatchError(NeuralError):
    pass


class DivergenceError(ArithmeticError):
    pass


@dataclass
class ModelConfig:
    n: int = 7                   # target order: n-1 target context tokens
    m: int = 7                   # source window
    input_vocab_cap: int = 20000
    output_vocab_cap: int = 40000
    embedding_dim: int = 150
    hidden_dim: int = 750        # also the output embedding width
    noise_samples: int = 100
    batch_size: int = 1000
    epochs: int = 25
    learning_rate: float = 1.0
    lr_decay: float = 0.5
    init_range: float = 0.05
    seed: int = 1
    variant: str = "osm"

    def __post_init__(self):
        for name in ("n", "input_vocab_cap", "output_vocab_cap", "embedding_dim",
                     "hidden_dim", "noise_samples", "batch_size"):
            if getattr(self, name) < 1:
                raise NeuralError("%s must be >= 1" % name)
        if self.m < 0 or self.epochs < 0:
            raise NeuralError("m and epochs must be >= 0")

    @property
    def context_width(self):
        return self.n - 1 + self.m


@dataclass
class StreamVocabularies:
    target: Vocabulary
    source: Vocabulary

    @property
    def input_size(self):
        return len(self.target) + len(self.source)

    @property
    def output_size(self):
        return len(self.target)

    def encode_context(self, context, n):
        ids = [self.target.lookup(t) for t in context[:n - 1]]
        off = len(self.target)
        ids += [off + self.source.lookup(t) for t in context[n - 1:]]
        return ids

    def encode(self, instances, n):
        ctx = np.array([self.encode_context(i.context, n) for i in instances],
                       dtype=np.int64).reshape(len(instances), -1)
        labels = np.array([self.target.lookup(i.label) for i in instances], dtype=np.int64)
        return ctx, labels


def build_stream_vocabularies(stream_pairs, input_cap, output_cap):
    """Target-stream vocabulary (inputs and outputs) and source-stream vocabulary.

    Reordering symbols seen in the data are reserved on both sides.
    """
    stream_pairs = list(stream_pairs)
    symbols = set()
    for sp in stream_pairs:
        symbols.update(t for t in sp.source if is_reordering_symbol(t))
        symbols.update(t for t in sp.target if is_reordering_symbol(t))
    tgt = build_vocabulary((t for sp in stream_pairs for t in sp.target), output_cap, symbols)
    src = build_vocabulary((t for sp in stream_pairs for t in sp.source), input_cap, symbols)
    return StreamVocabularies(tgt, src)


def _relu(x):
    return np.maximum(x, 0.0)


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


def _sigmoid(x):
    return np.exp(_log_sigmoid(x))


class NeuralModel:
    activation = "relu"

    def __init__(self, config: ModelConfig, vocabs: StreamVocabularies, params=None):
        self.config = config
        self.vocabs = vocabs
        if params is None:
            params = self._init_params()
        self.params = params

    def _init_params(self):
        c = self.config
        rng = np.random.default_rng(c.seed)
        r = c.init_range
        n_in, n_out = self.vocabs.input_size, self.vocabs.output_size
        width = c.context_width * c.embedding_dim
        return {
            "L": rng.uniform(-r, r, (n_in, c.embedding_dim)),
            "W_h": rng.uniform(-r, r, (c.hidden_dim, width)),
            "b_h": np.zeros(c.hidden_dim),
            "W_o": rng.uniform(-r, r, (n_out, c.hidden_dim)),
            "b_o": np.full(n_out, -math.log(n_out)),
        }

    @property
    def L(self):
        return self.params["L"]

    def copy(self):
        return NeuralModel(self.config, self.vocabs,
                           {k: v.copy() for k, v in self.params.items()})

    def check_finite(self):
        for k, v in self.params.items():
            if not np.all(np.isfinite(v)):
                raise DivergenceError("parameter block %s is not finite" % k)

    # -- forward ---------------------------------------------------------

    def _check_context(self, ctx):
        ctx = np.asarray(ctx, dtype=np.int64)
        if ctx.ndim == 1:
            ctx = ctx[None, :]
        if ctx.shape[1] != self.config.context_width:
            raise ConfigMismatchError("context width %d, model expects %d"
                                      % (ctx.shape[1], self.config.context_width))
        if ctx.size and (ctx.min() < 0 or ctx.max() >= self.vocabs.input_size):
            raise NeuralError("context id out of range")
        return ctx

    def _hidden(self, ctx):
        p = self.params
        x = p["L"][ctx].reshape(ctx.shape[0], -1)
        pre = x @ p["W_h"].T + p["b_h"]
        return x, pre, _relu(pre)

    def forward(self, ctx):
        """Hidden representation phi(x) for one context or a batch."""
        single = np.ndim(ctx) == 1
        phi = self._hidden(self._check_context(ctx))[2]
        return phi[0] if single else phi

    def logits(self, ctx):
        ctx = self._check_context(ctx)
        phi = self._hidden(ctx)[2]
        return phi @ self.params["W_o"].T + self.params["b_o"]

    def log_softmax(self, ctx):
        z = self.logits(ctx)
        z = z - z.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def softmax_prob(self, ctx, k):
        """P(y = k | context) under the exact softmax."""
        return float(np.exp(self.log_softmax(ctx)[0, k]))

    def logprobs(self, ctx, labels, batch=4096):
        """Exact log P(label | context) for each row."""
        ctx = self._check_context(ctx)
        labels = np.asarray(labels, dtype=np.int64)
        out = np.empty(len(labels))
        for a in range(0, len(labels), batch):
            ls = self.log_softmax(ctx[a:a + batch])
            out[a:a + batch] = ls[np.arange(len(ls)), labels[a:a + batch]]
        return out

    # -- NCE -------------------------------------------------------------

    def nce_loss_and_grads(self, ctx, labels, noise, noise_logprob):
        """Mean NCE loss over the batch and sparse gradients.

        ``noise`` is a (B, k) array of noise labels and ``noise_logprob`` the
        log noise probability of every output word.  Gradients come back as
        ``{"W_h": dense, "b_h": dense, "L": (rows, vals), "W_o": (rows, vals),
        "b_o": (rows, vals)}``; rows may repeat.
        """
        p = self.params
        ctx = self._check_context(ctx)
        labels = np.asarray(labels, dtype=np.int64)
        noise = np.asarray(noise, dtype=np.int64)
        B, k = noise.shape
        x, pre, phi = self._hidden(ctx)
        log_k = math.log(k)

        s_data = np.einsum("bh,bh->b", p["W_o"][labels], phi) + p["b_o"][labels]
        w_noise = p["W_o"][noise]                                   # B,k,H
        s_noise = np.einsum("bkh,bh->bk", w_noise, phi) + p["b_o"][noise]
        d_data = s_data - (log_k + noise_logprob[labels])
        d_noise = s_noise - (log_k + noise_logprob[noise])

        loss = -(_log_sigmoid(d_data).sum() + _log_sigmoid(-d_noise).sum()) / B

        g_data = (_sigmoid(d_data) - 1.0) / B                      # dloss/ds_data
        g_noise = _sigmoid(d_noise) / B                            # dloss/ds_noise

        rows_o = np.concatenate([labels, noise.ravel()])
        vals_o = np.concatenate([g_data[:, None] * phi,
                                 (g_noise[:, :, None] * phi[:, None, :]).reshape(-1, phi.shape[1])])
        vals_bo = np.concatenate([g_data, g_noise.ravel()])

        d_phi = g_data[:, None] * p["W_o"][labels] + np.einsum("bk,bkh->bh", g_noise, w_noise)
        d_pre = d_phi * (pre > 0)
        grads = {
            "W_h": d_pre.T @ x,
            "b_h": d_pre.sum(axis=0),
            "W_o": (rows_o, vals_o),
            "b_o": (rows_o, vals_bo),
        }
        d_x = (d_pre @ p["W_h"]).reshape(B, ctx.shape[1], -1)
        grads["L"] = (ctx.ravel(), d_x.reshape(-1, d_x.shape[2]))
        return float(loss), grads

    def apply_grads(self, grads, lr):
        p = self.params
        for name, g in grads.items():
            if isinstance(g, tuple):
                rows, vals = g
                np.add.at(p[name], rows, -lr * vals)
            else:
                p[name] -= lr * g


def dense_grads(model, grads):
    """Expand sparse gradient blocks to full arrays (for checking)."""
    out = {}
    for name, g in grads.items():
        if isinstance(g, tuple):
            full = np.zeros_like(model.params[name])
            np.add.at(full, g[0], g[1])
            out[name] = full
        else:
            out[name] = g
    return out


def unigram_noise(labels, size, floor=1.0):
    """Unigram distribution over the output vocabulary, with add-``floor`` counts
    so every word keeps strictly positive probability."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=size).astype(float)
    counts += floor
    return counts / counts.sum()


def nce_step(model, ctx, labels, noise_dist, k, lr, rng=None, noise=None):
    """One SGD step on the NCE objective; updates ``model`` in place.

    Pass ``noise`` to fix the noise draws, otherwise they are drawn from
    ``noise_dist`` with ``rng``.  Returns ``(model, loss)``.
    """
    if k < 1:
        raise NeuralError("need at least one noise sample")
    noise_dist = np.asarray(noise_dist, dtype=float)
    if np.any(noise_dist <= 0):
        raise NeuralError("noise distribution must be strictly positive")
    if noise is None:
        rng = rng if rng is not None else np.random.default_rng()
        noise = rng.choice(len(noise_dist), size=(len(labels), k), p=noise_dist)
    loss, grads = model.nce_loss_and_grads(ctx, labels, noise, np.log(noise_dist))
    if not math.isfinite(loss):
        raise DivergenceError("non-finite NCE loss %r (lr=%g, batch=%d)" % (loss, lr, len(labels)))
    if lr:
        model.apply_grads(grads, lr)
        model.check_finite()
    return model, loss


# ---------------------------------------------------------------------------
# Scoring


def score_stream(model: NeuralModel, sp: StreamPair) -> float:
    """Exact-softmax log-probability of a stream pair (end symbol included)."""
    c = model.config
    ctx, labels = model.vocabs.encode(make_instances(sp, c.n, c.m), c.n)
    return float(model.logprobs(ctx, labels).sum())


def perplexity(model: NeuralModel, stream_pairs) -> float:
    """exp of the mean negative log-probability per predicted token."""
    stream_pairs = list(stream_pairs)
    if not stream_pairs:
        raise NeuralError("empty corpus")
    c = model.config
    insts = [i for sp in stream_pairs for i in make_instances(sp, c.n, c.m)]
    ctx, labels = model.vocabs.encode(insts, c.n)
    return _ppl(model, ctx, labels)


def _ppl(model, ctx, labels):
    nll = -model.logprobs(ctx, labels).mean()
    return math.exp(nll) if nll < 700 else math.inf


# ---------------------------------------------------------------------------
# Training


@dataclass
class EpochRecord:
    epoch: int
    train_nce_loss: float
    valid_ppl: float
    lr: float

    def line(self):
        return "%d\t%.6f\t%.6f\t%g" % (self.epoch, self.train_nce_loss, self.valid_ppl, self.lr)


@dataclass
class TrainResult:
    model: NeuralModel
    log: list = field(default_factory=list)
    best_epoch: int = 0

    @property
    def initial_ppl(self):
        return self.log[0].valid_ppl

    @property
    def best_ppl(self):
        return min(r.valid_ppl for r in self.log)


def train(config: ModelConfig, train_pairs, valid_pairs, vocabs=None, progress=None):
    """Seeded minibatch NCE training with validation-driven learning-rate halving.

    Epoch 0 in the log is the untrained model.  The returned model is the
    one with the best validation perplexity.
    """
    train_pairs, valid_pairs = list(train_pairs), list(valid_pairs)
    if not train_pairs or not valid_pairs:
        raise NeuralError("training and validation data must be non-empty")
    if vocabs is None:
        vocabs = build_stream_vocabularies(train_pairs, config.input_vocab_cap,
                                           config.output_vocab_cap)
    n, m = config.n, config.m
    tr_ctx, tr_y = vocabs.encode([i for sp in train_pairs for i in make_instances(sp, n, m)], n)
    va_ctx, va_y = vocabs.encode([i for sp in valid_pairs for i in make_instances(sp, n, m)], n)

    model = NeuralModel(config, vocabs)
    noise_dist = unigram_noise(tr_y, vocabs.output_size)
    rng = np.random.default_rng(config.seed + 1)

    best_ppl = _ppl(model, va_ctx, va_y)
    best = model.copy()
    result = TrainResult(best, [EpochRecord(0, float("nan"), best_ppl, config.learning_rate)], 0)
    if progress:
        progress(result.log[-1])
    lr = config.learning_rate
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(tr_y))
        losses = []
        for a in range(0, len(order), config.batch_size):
            idx = order[a:a + config.batch_size]
            _, loss = nce_step(model, tr_ctx[idx], tr_y[idx], noise_dist,
                               config.noise_samples, lr, rng=rng)
            losses.append(loss * len(idx))
        ppl = _ppl(model, va_ctx, va_y)
        if not math.isfinite(ppl):
            raise DivergenceError("validation perplexity diverged at epoch %d" % epoch)
        result.log.append(EpochRecord(epoch, sum(losses) / len(tr_y), ppl, lr))
        if progress:
            progress(result.log[-1])
        if ppl < best_ppl:
            best_ppl, best = ppl, model.copy()
            result.best_epoch = epoch
        else:
            lr *= config.lr_decay
    result.model = best
    return result


def write_training_log(records, path):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("epoch\ttrain_nce_loss\tvalid_ppl\tlr\n")
        for r in records:
            f.write(r.line() + "\n")


def read_training_log(path):
    out = []
    with open(path, encoding="utf-8") as f:
        next(f, None)
        for line in f:
            if line.strip():
                e, loss, ppl, lr = line.rstrip("\n").split("\t")
                out.append(EpochRecord(int(e), float(loss), float(ppl), float(lr)))
    return out


# ---------------------------------------------------------------------------
# Binary container
#
# magic | u32 version | u32 header length | header JSON (config, vocabularies,
# matrix shapes) | matrices as little-endian float64, row-major, in
# PARAM_NAMES order.


def save_model(model: NeuralModel, path):
    header = {
        "config": asdict(model.config),
        "target_vocab": list(model.vocabs.target.tokens()),
        "target_reserved": sorted(model.vocabs.target.reserved),
        "source_vocab": list(model.vocabs.source.tokens()),
        "source_reserved": sorted(model.vocabs.source.reserved),
        "activation": model.activation,
        "shapes": {k: list(model.params[k].shape) for k in PARAM_NAMES},
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        f.write(blob)
        for k in PARAM_NAMES:
            f.write(np.ascontiguousarray(model.params[k], dtype="<f8").tobytes())


def load_model(path, expect_config: ModelConfig | None = None) -> NeuralModel:
    with open(path, "rb") as f:
        data = f.read()
    buf = io.BytesIO(data)
    if buf.read(len(MAGIC)) != MAGIC:
        raise ModelFormatError("%s: not a neural model file (bad magic)" % path)
    head = buf.read(8)
    if len(head) < 8:
        raise ModelFormatError("%s: truncated header" % path)
    version, hlen = struct.unpack("<II", head)
    if version != FORMAT_VERSION:
        raise ModelFormatError("%s: unsupported format version %d" % (path, version))
    blob = buf.read(hlen)
    if len(blob) < hlen:
        raise ModelFormatError("%s: truncated header" % path)
    header = json.loads(blob.decode("utf-8"))
    config = ModelConfig(**header["config"])
    vocabs = StreamVocabularies(
        Vocabulary.from_tokens(header["target_vocab"], header["target_reserved"]),
        Vocabulary.from_tokens(header["source_vocab"], header["source_reserved"]))
    params = {}
    for k in PARAM_NAMES:
        shape = tuple(header["shapes"][k])
        nbytes = 8 * int(np.prod(shape))
        raw = buf.read(nbytes)
        if len(raw) < nbytes:
            raise ModelFormatError("%s: truncated matrix %s" % (path, k))
        params[k] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    if buf.read(1):
        raise ModelFormatError("%s: trailing bytes after the last matrix" % path)
    model = NeuralModel(config, vocabs, params)
    _check_shapes(model)
    if expect_config is not None and expect_config.context_width != config.context_width:
        raise ConfigMismatchError("model context width %d (n=%d, m=%d) does not match "
                                  "expected %d (n=%d, m=%d)"
                                  % (config.context_width, config.n, config.m,
                                     expect_config.context_width, expect_config.n, expect_config.m))
    return model


def _check_shapes(model):
    c, p = model.config, model.params
    expected = {
        "L": (model.vocabs.input_size, c.embedding_dim),
        "W_h": (c.hidden_dim, c.context_width * c.embedding_dim),
        "b_h": (c.hidden_dim,),
        "W_o": (model.vocabs.output_size, c.hidden_dim),
        "b_o": (model.vocabs.output_size,),
    }
    for k, shape in expected.items():
        if p[k].shape != shape:
            raise ConfigMismatchError("matrix %s has shape %s, config implies %s"
                                      % (k, p[k].shape, shape))
