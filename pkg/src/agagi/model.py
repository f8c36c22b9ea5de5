"""The gated-fusion attention classifier.

Pipeline: embedding columns -> CNN or LSTM feature extraction -> linear
projection of both the semantic map and the normalized label-count matrix
into one shared space -> adaptive gate fusion -> per-feature attention over
positions -> dropout and the linear output head.

All stages accept a single instance ((m,) token indices with a (c, m) count
matrix) or a batch with a leading dimension.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import autograd as ag
from . import dropout as do
from .tcol import normalize_tcol

EXTRACTORS = ("cnn", "lstm")

CHECKPOINT_MAGIC = b"AGAGI\x00"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    """Invalid hyperparameter combination or config file."""


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


@dataclass
class ModelConfig:
    extractor: str = "cnn"
    vocab_size: int = 0
    n_classes: int = 2
    embed_dim: int = 64
    sent_len: int = 0  # 0: resolve from training data (95th percentile)
    filter_windows: tuple = (3, 4, 5)
    filters_per_window: int = 100
    hidden_dim: int = 128
    conv_activation: str = "relu"
    epsilon: float = 0.05
    dropout: str = "leaky"
    beta: float = 0.5
    c_sup: float = 500.0
    head_depth: int = 1
    freeze_embeddings: bool = False
    seed: int = 0
    lr: float = 1e-3
    epochs: int = 30
    batch_size: int = 64

    def __post_init__(self):
        self.filter_windows = tuple(int(w) for w in self.filter_windows)
        if self.extractor not in EXTRACTORS:
            raise ConfigError("extractor must be one of %r, got %r" % (EXTRACTORS, self.extractor))
        if self.dropout not in do.KINDS:
            raise ConfigError("dropout must be one of %r, got %r" % (do.KINDS, self.dropout))
        if not 0.0 <= self.epsilon <= 0.5:
            raise ConfigError("epsilon must lie in [0, 0.5], got %r" % (self.epsilon,))
        if not 0.0 <= self.beta < 1.0:
            raise ConfigError("beta must lie in [0, 1), got %r" % (self.beta,))
        if self.c_sup < 1.0:
            raise ConfigError("c_sup must be >= 1, got %r" % (self.c_sup,))
        if self.head_depth < 1:
            raise ConfigError("head_depth must be >= 1, got %r" % (self.head_depth,))
        if self.extractor == "cnn" and not self.filter_windows:
            raise ConfigError("cnn extractor needs at least one filter window")
        if self.conv_activation != "relu":
            raise ConfigError("conv activation %r not supported" % (self.conv_activation,))

    @property
    def feature_dim(self):
        if self.extractor == "cnn":
            return self.filters_per_window * len(self.filter_windows)
        return self.hidden_dim

    def dropout_spec(self):
        return do.DropoutSpec(self.dropout, self.beta, self.c_sup, self.seed)

    def to_items(self):
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            out.append((f.name, v))
        return out


def config_from_items(items):
    kwargs = {}
    known = {f.name: f.type for f in fields(ModelConfig)}
    for key, raw in items:
        if key not in known:
            raise ConfigError("unknown config key %r" % (key,))
        kwargs[key] = _parse_value(key, raw)
    return ModelConfig(**kwargs)


def _parse_value(key, raw):
    if isinstance(raw, (int, float, bool, tuple)):
        return raw
    raw = raw.strip()
    if key in ("extractor", "dropout", "conv_activation"):
        return raw
    if key == "filter_windows":
        return tuple(int(x) for x in raw.split(",") if x)
    if key == "freeze_embeddings":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError("freeze_embeddings must be boolean, got %r" % (raw,))
    if key in ("epsilon", "beta", "c_sup", "lr"):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError("config key %s: not a number: %r" % (key, raw)) from None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError("config key %s: not an integer: %r" % (key, raw)) from None


class Parameters:
    """All trainable tensors, created in one declared canonical order.

    The order (embedding, extractor weights, the two projections, head
    layers) is also the checkpoint serialization order, and initialization
    draws happen in it: embeddings uniform in [-0.05, 0.05], weight matrices
    uniform within 1/sqrt(fan-in), biases zero.
    """

    def __init__(self, config, dtype=np.float32, rng=None):
        if config.vocab_size < 2:
            raise ConfigError("vocab_size must be set before building parameters")
        if config.sent_len < 1:
            raise ConfigError("sent_len must be resolved before building parameters")
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        d = config.feature_dim
        k = config.embed_dim
        c = config.n_classes
        self._named = []

        def uniform(name, shape, bound, requires_grad=True):
            t = ag.Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad)
            self._named.append((name, t))
            return t

        def zeros(name, shape):
            t = ag.Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)
            self._named.append((name, t))
            return t

        self.embedding = uniform(
            "embedding", (config.vocab_size, k), 0.05, requires_grad=not config.freeze_embeddings
        )
        if config.extractor == "cnn":
            self.conv = []
            nf = config.filters_per_window
            for h in config.filter_windows:
                w = uniform("conv_w%d" % h, (nf, h, k), 1.0 / np.sqrt(h * k))
                b = zeros("conv_b%d" % h, (nf,))
                self.conv.append((h, w, b))
        else:
            dh = config.hidden_dim
            self.lstm_wx = uniform("lstm_wx", (4 * dh, k), 1.0 / np.sqrt(k))
            self.lstm_wh = uniform("lstm_wh", (4 * dh, dh), 1.0 / np.sqrt(dh))
            self.lstm_b = zeros("lstm_b", (4 * dh,))
        self.proj_sem_w = uniform("proj_sem_w", (d, d), 1.0 / np.sqrt(d))
        self.proj_sem_b = zeros("proj_sem_b", (d,))
        self.proj_stat_w = uniform("proj_stat_w", (d, c), 1.0 / np.sqrt(c))
        self.proj_stat_b = zeros("proj_stat_b", (d,))
        self.head = []
        for i in range(config.head_depth):
            n_out = c if i == config.head_depth - 1 else d
            w = uniform("head_w%d" % i, (d, n_out), 1.0 / np.sqrt(d))
            b = zeros("head_b%d" % i, (n_out,))
            self.head.append((w, b))

    def named(self):
        return list(self._named)

    def trainable(self):
        return [t for _, t in self._named if t.requires_grad]

    def state(self):
        return {name: t.data.copy() for name, t in self._named}

    def load_state(self, state):
        for name, t in self._named:
            arr = state[name]
            if arr.shape != t.data.shape:
                raise CheckpointError(
                    "parameter %s has shape %r, expected %r" % (name, arr.shape, t.data.shape)
                )
            t.data = arr.astype(t.data.dtype).copy()


def apply_pretrained_embeddings(params, vocab, path):
    """Overwrite embedding rows with vectors from a `word v1 .. vk` text
    file; words missing from the file keep their random initialization."""
    k = params.config.embed_dim
    emb = params.embedding.data
    found = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            word, vals = parts[0], parts[1:]
            if len(vals) != k:
                raise ConfigError(
                    "%s: line %d has %d values, embed_dim is %d" % (path, lineno, len(vals), k)
                )
            idx = vocab.token_to_index.get(word)
            if idx is not None:
                emb[idx] = np.asarray([float(v) for v in vals], dtype=emb.dtype)
                found += 1
    return found


# ---------------------------------------------------------------------------
# forward stages

def embed(tokens, params):
    return ag.embedding_lookup(params.embedding, tokens)


def extract_features(x, params, config):
    """Semantic feature map with one column per position: concatenated
    same-padded conv banks for the cnn extractor, hidden-state columns for
    the lstm one."""
    if config.extractor == "cnn":
        feature_axis = x.data.ndim - 2  # (.., k, m) -> features replace k
        banks = []
        for _, w, b in params.conv:
            banks.append(ag.relu(ag.conv1d_same(x, w, b)))
        if len(banks) == 1:
            return banks[0]
        return ag.concat(banks, axis=feature_axis)
    return ag.lstm_sequence(x, params.lstm_wx, params.lstm_wh, params.lstm_b)


def project_shared(feats, zeta_norm, params):
    """Map both feature families into the shared (d, m) space."""
    d = params.proj_sem_b.data.shape[0]
    hc = ag.add(ag.matmul(params.proj_sem_w, feats), ag.reshape(params.proj_sem_b, (d, 1)))
    hz = ag.add(ag.matmul(params.proj_stat_w, zeta_norm), ag.reshape(params.proj_stat_b, (d, 1)))
    return hc, hz


def adagate(hc, hz, epsilon):
    """Fused map: relu of the semantic projection plus the valve-gated
    statistical projection."""
    return ag.add(ag.relu(hc), ag.mul(ag.valve(ag.sigmoid(hc), epsilon), hz))


def attend_pool(ho, feats):
    """Per-feature attention over positions applied to the semantic map."""
    alpha = ag.softmax_over_positions(ho)
    return ag.reduce_sum(ag.mul(alpha, feats), axis=-1)


def classify(pooled, params, config, mode="eval", sampler=None):
    """Dropout plus the fully-connected head; dropout only while training."""
    spec = config.dropout_spec()
    h = pooled
    last = len(params.head) - 1
    for i, (w, b) in enumerate(params.head):
        h = do.apply(h, spec, sampler, mode)
        h = ag.add(ag.matmul(h, w), b)
        if i != last:
            h = ag.relu(h)
    return h


def forward(tokens, zeta, params, config, mode="eval", sampler=None, zero_gi=False):
    """Logits for one instance ((m,) tokens, (c, m) counts) or a batch.

    ``zeta`` holds raw label counts; normalization by the vocabulary size
    happens here.  ``zero_gi`` substitutes zeros for the projected
    statistical branch, the reference point for the gate-closed identity.
    """
    x = embed(np.asarray(tokens), params)
    feats = extract_features(x, params, config)
    zeta_norm = ag.Tensor(normalize_tcol(zeta, config.vocab_size).astype(x.data.dtype))
    hc, hz = project_shared(feats, zeta_norm, params)
    if zero_gi:
        hz = ag.Tensor(np.zeros_like(hz.data))
    ho = adagate(hc, hz, config.epsilon)
    pooled = attend_pool(ho, feats)
    return classify(pooled, params, config, mode=mode, sampler=sampler)


# ---------------------------------------------------------------------------
# checkpoint io

def save_checkpoint(path, params, extra_items=()):
    """Binary checkpoint: magic, version, a length-prefixed key=value config
    block, then each parameter as raw little-endian float32 in canonical
    order."""
    cfg_lines = ["%s=%s" % (k, v) for k, v in params.config.to_items()]
    cfg_lines.extend("%s=%s" % (k, v) for k, v in extra_items)
    blob = ("\n".join(cfg_lines) + "\n").encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        for _, t in params.named():
            f.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Returns (params, extra_items) rebuilt from a checkpoint file."""
    with open(path, "rb") as f:
        raw = f.read()
    buf = io.BytesIO(raw)
    magic = buf.read(len(CHECKPOINT_MAGIC))
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError("%s: bad magic, not a checkpoint" % (path,))
    header = buf.read(8)
    if len(header) != 8:
        raise CheckpointError("%s: truncated header" % (path,))
    version, nbytes = struct.unpack("<II", header)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError("%s: unsupported checkpoint version %d" % (path, version))
    blob = buf.read(nbytes)
    if len(blob) != nbytes:
        raise CheckpointError("%s: truncated config block" % (path,))
    cfg_items = []
    extra = []
    known = {f.name for f in fields(ModelConfig)}
    for line in blob.decode("utf-8").splitlines():
        if not line:
            continue
        if "=" not in line:
            raise CheckpointError("%s: malformed config line %r" % (path, line))
        key, val = line.split("=", 1)
        (cfg_items if key in known else extra).append((key, val))
    try:
        config = config_from_items(cfg_items)
    except ConfigError as e:
        raise CheckpointError("%s: %s" % (path, e)) from None
    params = Parameters(config)
    data = buf.read()
    offset = 0
    for name, t in params.named():
        n = t.data.size * 4
        chunk = data[offset : offset + n]
        if len(chunk) != n:
            raise CheckpointError("%s: truncated parameter data at %s" % (path, name))
        t.data = np.frombuffer(chunk, dtype="<f4").reshape(t.data.shape).astype(np.float32)
        offset += n
    if offset != len(data):
        raise CheckpointError("%s: %d trailing bytes" % (path, len(data) - offset))
    return params, dict(extra)
