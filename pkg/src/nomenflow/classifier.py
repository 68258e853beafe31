"""Character n-gram classifier with hashed subword embeddings.

A name is turned into a bag of hashed features: every character n-gram of
each ``<token>`` (boundary-marked) plus, optionally, the whole token. The
model averages the embedding rows of those features and feeds the mean into
a linear softmax layer. Training is plain single-example SGD on the
cross-entropy loss, one model per taxonomy level.

Hot loops (hashing, forward pass, SGD) are compiled with numba so that batch
and single-name predictions run through the same arithmetic and agree
bit for bit.
"""

from __future__ import annotations

import logging
import struct
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numba import njit

__all__ = [
    "FeatureConfig",
    "TrainConfig",
    "NgramModel",
    "Prediction",
    "ModelFormatError",
    "BadMagicError",
    "VersionUnsupportedError",
    "ChecksumMismatchError",
    "ModelIOError",
    "SingleLabelWarning",
    "extract_features",
    "fnv1a_64",
    "forward",
    "gradient_check",
    "init_model",
    "load_model",
    "predict_batch",
    "predict_proba",
    "save_model",
    "train",
]

logger = logging.getLogger(__name__)

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_BOW, _EOW, _SPACE = ord("<"), ord(">"), ord(" ")


@dataclass(frozen=True)
class FeatureConfig:
    """Subword feature extraction settings.

    Defaults are the usual subword settings (n-grams of 2 to 5 characters,
    2^21 buckets); set ``min_n == max_n`` for single-length n-grams.
    """

    min_n: int = 2
    max_n: int = 5
    bucket_count: int = 2**21
    include_tokens: bool = True

    def __post_init__(self):
        if not 1 <= self.min_n <= self.max_n:
            raise ValueError(f"need 1 <= min_n <= max_n, got {self.min_n}, {self.max_n}")
        b = self.bucket_count
        if b < 2**16 or b & (b - 1):
            raise ValueError(f"bucket_count must be a power of two >= 2**16, got {b}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 5
    dim: int = 100
    seed: int = 0
    linear_decay: bool = False
    loss: str = "softmax"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.loss != "softmax":
            raise ValueError(f"unsupported loss {self.loss!r}")


@dataclass(eq=False)
class NgramModel:
    """Embedding table ``E`` (buckets x dim), output weights ``W`` (labels x dim),
    bias ``b`` and the label table. Parameters are float64 in memory."""

    embeddings: np.ndarray
    weights: np.ndarray
    bias: np.ndarray
    labels: tuple[str, ...]
    features: FeatureConfig = field(default_factory=FeatureConfig)
    level: int | None = None

    def __post_init__(self):
        self.embeddings = np.ascontiguousarray(self.embeddings, dtype=np.float64)
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        self.bias = np.ascontiguousarray(self.bias, dtype=np.float64)
        self.labels = tuple(self.labels)
        L, d = self.weights.shape
        if self.embeddings.shape != (self.features.bucket_count, d):
            raise ValueError(
                f"embeddings shape {self.embeddings.shape} != ({self.features.bucket_count}, {d})")
        if self.bias.shape != (L,) or len(self.labels) != L:
            raise ValueError("bias, weights and label table disagree on the label count")
        if len(set(self.labels)) != L:
            raise ValueError("label table has duplicates")
        if self.level not in (None, 1, 2, 3):
            raise ValueError(f"level must be 1, 2, 3 or None, got {self.level!r}")
        for name in ("embeddings", "weights", "bias"):
            if not np.isfinite(getattr(self, name)).all():
                raise ValueError(f"{name} contains non-finite values")

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def n_labels(self) -> int:
        return self.weights.shape[0]

    def label_index(self, label: str) -> int:
        return self.labels.index(label)

    def _output_t(self) -> np.ndarray:
        # label index innermost so the forward loop vectorizes
        return np.ascontiguousarray(self.weights.T)

    def equals(self, other: "NgramModel") -> bool:
        """Exact equality of every parameter and of the metadata."""
        return (
            self.labels == other.labels
            and self.features == other.features
            and self.level == other.level
            and np.array_equal(self.embeddings, other.embeddings)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
        )


@dataclass(frozen=True, slots=True)
class Prediction:
    probabilities: np.ndarray
    label: str
    probability: float
    index: int


class SingleLabelWarning(UserWarning):
    """Training corpus holds a single label; the model can only predict it."""


# --------------------------------------------------------------------------
# features


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def feature_strings(name: str, cfg: FeatureConfig) -> list[str]:
    """Feature strings for ``name`` before hashing.

    Whole tokens are prefixed with a space so they never collide with an
    in-token n-gram of the same spelling.
    """
    out = []
    for tok in name.split():
        w = f"<{tok}>"
        for start in range(len(w)):
            for n in range(cfg.min_n, cfg.max_n + 1):
                if start + n > len(w):
                    break
                out.append(w[start:start + n])
        if cfg.include_tokens:
            out.append(" " + w)
    return out


def extract_features(name: str, cfg: FeatureConfig) -> np.ndarray:
    """Hashed feature ids of one clean name (a multiset, duplicates kept)."""
    mask = cfg.bucket_count - 1
    return np.array([fnv1a_64(s.encode("ascii")) & mask for s in feature_strings(name, cfg)],
                    dtype=np.int64)


@njit(cache=True)
def _token_feature_count(w, min_n, max_n, include_tokens):
    c = 0
    top = min(max_n, w)
    for n in range(min_n, top + 1):
        c += w - n + 1
    if include_tokens:
        c += 1
    return c


@njit(cache=True)
def _count_features(buf, starts, ends, min_n, max_n, include_tokens):
    counts = np.zeros(starts.shape[0], dtype=np.int64)
    for i in range(starts.shape[0]):
        p = starts[i]
        end = ends[i]
        c = 0
        while p < end:
            if buf[p] == _SPACE:
                p += 1
                continue
            q = p
            while q < end and buf[q] != _SPACE:
                q += 1
            c += _token_feature_count(q - p + 2, min_n, max_n, include_tokens)
            p = q
        counts[i] = c
    return counts


@njit(cache=True)
def _fill_features(buf, starts, ends, min_n, max_n, include_tokens, mask, offsets, out):
    offset = np.uint64(FNV_OFFSET)
    prime = np.uint64(FNV_PRIME)
    umask = np.uint64(mask)
    for i in range(starts.shape[0]):
        j = offsets[i]
        p = starts[i]
        end = ends[i]
        while p < end:
            if buf[p] == _SPACE:
                p += 1
                continue
            q = p
            while q < end and buf[q] != _SPACE:
                q += 1
            w = q - p + 2
            for s in range(w):
                h = offset
                for n in range(1, max_n + 1):
                    k = s + n - 1
                    if k >= w:
                        break
                    if k == 0:
                        byte = np.uint64(_BOW)
                    elif k == w - 1:
                        byte = np.uint64(_EOW)
                    else:
                        byte = np.uint64(buf[p + k - 1])
                    h = (h ^ byte) * prime
                    if n >= min_n:
                        out[j] = np.int64(h & umask)
                        j += 1
            if include_tokens:
                h = (offset ^ np.uint64(_SPACE)) * prime
                h = (h ^ np.uint64(_BOW)) * prime
                for k in range(p, q):
                    h = (h ^ np.uint64(buf[k])) * prime
                h = (h ^ np.uint64(_EOW)) * prime
                out[j] = np.int64(h & umask)
                j += 1
            p = q


def batch_features(names: Sequence[str], cfg: FeatureConfig) -> tuple[np.ndarray, np.ndarray]:
    """Hashed features for many names as a flat id array plus row offsets
    (features of name ``i`` are ``ids[offsets[i]:offsets[i + 1]]``)."""
    lengths = np.fromiter((len(s) for s in names), dtype=np.int64, count=len(names))
    ends = np.cumsum(lengths)
    starts = ends - lengths
    try:
        buf = np.frombuffer("".join(names).encode("ascii"), dtype=np.uint8)
    except UnicodeEncodeError as exc:
        raise ValueError("names must be clean ASCII; run them through preprocess() first") from exc
    if buf.size == 0:
        buf = np.zeros(1, dtype=np.uint8)
    counts = _count_features(buf, starts, ends, cfg.min_n, cfg.max_n, cfg.include_tokens)
    offsets = np.zeros(len(names) + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    ids = np.empty(offsets[-1], dtype=np.int64)
    _fill_features(buf, starts, ends, cfg.min_n, cfg.max_n, cfg.include_tokens,
                   cfg.bucket_count - 1, offsets, ids)
    return ids, offsets


# --------------------------------------------------------------------------
# forward pass


@njit(cache=True)
def _forward_rows(E, Wt, b, ids, offsets, out):
    d = E.shape[1]
    L = b.shape[0]
    h = np.empty(d)
    for i in range(offsets.shape[0] - 1):
        lo = offsets[i]
        hi = offsets[i + 1]
        h[:] = 0.0
        for k in range(lo, hi):
            row = ids[k]
            for j in range(d):
                h[j] += E[row, j]
        if hi > lo:
            n = float(hi - lo)
            for j in range(d):
                h[j] /= n
        z = out[i]
        for c in range(L):
            z[c] = b[c]
        for j in range(d):
            hj = h[j]
            for c in range(L):
                z[c] += Wt[j, c] * hj
        m = z[0]
        for c in range(1, L):
            if z[c] > m:
                m = z[c]
        s = 0.0
        for c in range(L):
            z[c] = np.exp(z[c] - m)
            s += z[c]
        for c in range(L):
            z[c] /= s


def _probabilities(model: NgramModel, ids: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    out = np.empty((offsets.shape[0] - 1, model.n_labels))
    _forward_rows(model.embeddings, model._output_t(), model.bias, ids, offsets, out)
    return out


def _prediction(model: NgramModel, probs: np.ndarray) -> Prediction:
    k = int(np.argmax(probs))  # first maximum: ties go to the lowest label index
    return Prediction(probs, model.labels[k], float(probs[k]), k)


def forward(model: NgramModel, features: Iterable[int]) -> Prediction:
    """Label distribution for one bag of feature ids.

    An empty bag yields ``softmax(b)``.
    """
    ids = np.asarray(list(features) if not isinstance(features, np.ndarray) else features, dtype=np.int64)
    offsets = np.array([0, ids.size], dtype=np.int64)
    return _prediction(model, _probabilities(model, ids, offsets)[0])


def predict_proba(model: NgramModel, names: Sequence[str], chunk_size: int = 65536) -> np.ndarray:
    """Probability matrix (n_names x n_labels) for clean names."""
    out = np.empty((len(names), model.n_labels))
    for lo in range(0, len(names), chunk_size):
        chunk = names[lo:lo + chunk_size]
        ids, offsets = batch_features(chunk, model.features)
        out[lo:lo + len(chunk)] = _probabilities(model, ids, offsets)
    return out


def predict_batch(model: NgramModel, names: Sequence[str]) -> list[Prediction]:
    """Order-preserving predictions; identical to calling :func:`forward` per name."""
    if len(names) == 0:
        return []
    probs = predict_proba(model, names)
    top = probs.argmax(axis=1)
    labels = model.labels
    return [Prediction(probs[i], labels[k], float(probs[i, k]), int(k)) for i, k in enumerate(top.tolist())]


# --------------------------------------------------------------------------
# training


@njit(cache=True)
def _example_grads(E, W, b, ids, lo, hi, y, h, g, gh):
    """Loss of one example; fills h (mean embedding), g (dloss/dlogits) and
    gh (dloss/dh). Gradient wrt each feature occurrence's E row is gh / n."""
    L, d = W.shape
    n = hi - lo
    for j in range(d):
        h[j] = 0.0
    for k in range(lo, hi):
        row = ids[k]
        for j in range(d):
            h[j] += E[row, j]
    if n > 0:
        for j in range(d):
            h[j] /= n
    for c in range(L):
        z = b[c]
        for j in range(d):
            z += W[c, j] * h[j]
        g[c] = z
    m = g[0]
    for c in range(1, L):
        if g[c] > m:
            m = g[c]
    s = 0.0
    for c in range(L):
        s += np.exp(g[c] - m)
    loss = m + np.log(s) - g[y]
    for c in range(L):
        g[c] = np.exp(g[c] - m) / s
    g[y] -= 1.0
    for j in range(d):
        acc = 0.0
        for c in range(L):
            acc += W[c, j] * g[c]
        gh[j] = acc
    return loss


@njit(cache=True)
def _sgd_step(E, W, b, ids, lo, hi, y, lr, h, g, gh):
    loss = _example_grads(E, W, b, ids, lo, hi, y, h, g, gh)
    L, d = W.shape
    for c in range(L):
        gc = lr * g[c]
        for j in range(d):
            W[c, j] -= gc * h[j]
        b[c] -= gc
    n = hi - lo
    if n > 0:
        for k in range(lo, hi):
            row = ids[k]
            for j in range(d):
                E[row, j] -= lr * gh[j] / n
    return loss


@njit(cache=True)
def _train_epoch(E, W, b, ids, offsets, labels, order, lr0, decay, step0, total_steps):
    L, d = W.shape
    h = np.empty(d)
    g = np.empty(L)
    gh = np.empty(d)
    total = 0.0
    step = step0
    for t in range(order.shape[0]):
        i = order[t]
        lr = lr0
        if decay:
            lr = lr0 * (1.0 - step / total_steps)
        total += _sgd_step(E, W, b, ids, offsets[i], offsets[i + 1], labels[i], lr, h, g, gh)
        step += 1
    return total


def init_model(labels: Sequence[str], features: FeatureConfig, dim: int,
               rng: np.random.Generator, level: int | None = None) -> NgramModel:
    """Fresh model: embeddings uniform in ``(-1/dim, 1/dim)``, zero output layer."""
    E = rng.uniform(-1.0 / dim, 1.0 / dim, size=(features.bucket_count, dim))
    L = len(labels)
    return NgramModel(E, np.zeros((L, dim)), np.zeros(L), tuple(labels), features, level)


def train(names: Sequence[str], labels: Sequence[str], features: FeatureConfig | None = None,
          config: TrainConfig | None = None, level: int | None = None,
          ) -> tuple[NgramModel, list[float]]:
    """Fit a model with single-example SGD on softmax cross-entropy.

    Examples are reshuffled every epoch from a generator seeded by
    ``config.seed``, so equal inputs give bit-identical models. The label
    table is the sorted set of ``labels``. Returned parameters are rounded to
    float32 (the at-rest precision of the model file) so a save/load
    round-trip is exact.

    Returns:
        The model and the mean training loss of each epoch.

    Raises:
        ValueError: on an empty corpus or mismatched lengths.
    """
    features = features or FeatureConfig()
    config = config or TrainConfig()
    if len(names) != len(labels):
        raise ValueError(f"length_mismatch: {len(names)} names vs {len(labels)} labels")
    if len(names) == 0:
        raise ValueError("empty_corpus: nothing to train on")
    table = tuple(sorted(set(labels)))
    if len(table) == 1:
        warnings.warn(f"degenerate_single_label: only {table[0]!r} present", SingleLabelWarning, stacklevel=2)
    index = {lab: i for i, lab in enumerate(table)}
    y = np.array([index[lab] for lab in labels], dtype=np.int64)
    ids, offsets = batch_features(names, features)

    rng = np.random.default_rng(config.seed)
    model = init_model(table, features, config.dim, rng, level)
    E, W, b = model.embeddings, model.weights, model.bias
    total_steps = config.epochs * len(names)
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(names)).astype(np.int64)
        s = _train_epoch(E, W, b, ids, offsets, y, order, config.learning_rate,
                         config.linear_decay, epoch * len(names), float(total_steps))
        losses.append(s / len(names))
        logger.info("epoch %d/%d  loss %.6f", epoch + 1, config.epochs, losses[-1])

    for arr in (E, W, b):
        arr[...] = arr.astype(np.float32)
    return NgramModel(E, W, b, table, features, level), losses


# --------------------------------------------------------------------------
# gradient check


def example_loss(model: NgramModel, features: np.ndarray, label: int) -> float:
    """Cross-entropy of one example, written directly with numpy."""
    h = model.embeddings[features].mean(axis=0)
    z = model.weights @ h + model.bias
    m = z.max()
    return float(m + np.log(np.exp(z - m).sum()) - z[label])


def analytic_gradients(model: NgramModel, features: np.ndarray, label: int):
    """Gradients of :func:`example_loss` as computed by the training kernel.

    Returns ``(loss, dW, db, dE)`` where ``dE`` maps each touched row to its
    gradient; every other embedding row has zero gradient.
    """
    ids = np.asarray(features, dtype=np.int64)
    d, L = model.dim, model.n_labels
    h, g, gh = np.empty(d), np.empty(L), np.empty(d)
    loss = _example_grads(model.embeddings, model.weights, model.bias, ids, 0, ids.size, label, h, g, gh)
    rows, counts = np.unique(ids, return_counts=True)
    dE = {int(r): gh * c / ids.size for r, c in zip(rows, counts)}
    return loss, np.outer(g, h), g.copy(), dE


def _rel_err(a: np.ndarray, n: np.ndarray, floor: float) -> float:
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def gradient_check(model: NgramModel, features: Sequence[int], label: int,
                   eps: float = 1e-3, floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    Covers every parameter the example touches: all of ``W`` and ``b`` and the
    embedding rows of its features. The relative error of a component is
    ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps components that are
    zero up to rounding from dominating. ``model`` is restored afterwards.
    """
    ids = np.asarray(features, dtype=np.int64)
    _, dW, db, dE = analytic_gradients(model, ids, label)

    def numeric(arr: np.ndarray, index) -> float:
        old = arr[index]
        arr[index] = old + eps
        up = example_loss(model, ids, label)
        arr[index] = old - eps
        down = example_loss(model, ids, label)
        arr[index] = old
        return (up - down) / (2 * eps)

    worst = 0.0
    nW = np.array([[numeric(model.weights, (c, j)) for j in range(model.dim)] for c in range(model.n_labels)])
    worst = max(worst, _rel_err(dW, nW, floor))
    nb = np.array([numeric(model.bias, c) for c in range(model.n_labels)])
    worst = max(worst, _rel_err(db, nb, floor))
    for row, grad in dE.items():
        nE = np.array([numeric(model.embeddings, (row, j)) for j in range(model.dim)])
        worst = max(worst, _rel_err(grad, nE, floor))
    return worst


# --------------------------------------------------------------------------
# serialization

MAGIC = b"NGNM"
FORMAT_VERSION = 1
_FLAG_TOKENS = 0x1
_LEVEL_SHIFT = 8


class ModelFormatError(Exception):
    """Base class for model-file problems."""


class BadMagicError(ModelFormatError):
    pass


class VersionUnsupportedError(ModelFormatError):
    pass


class ChecksumMismatchError(ModelFormatError):
    pass


class ModelIOError(ModelFormatError, OSError):
    pass


def _write_f32(fh, arr: np.ndarray, crc: int, chunk_rows: int = 1 << 16) -> int:
    arr2 = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(-1, 1)
    for lo in range(0, arr2.shape[0], chunk_rows):
        data = arr2[lo:lo + chunk_rows].astype("<f4").tobytes()
        crc = zlib.crc32(data, crc)
        fh.write(data)
    return crc


def save_model(model: NgramModel, path: str | Path) -> None:
    """Write ``model`` in the versioned binary format (float32 payload, CRC32 trailer).

    Layout, all little-endian: magic ``NGNM``; u32 version; u32 bucket_count,
    dim, n_labels, min_n, max_n, flags; each label as u32 byte length plus
    UTF-8 bytes; ``E``, ``W``, ``b`` as row-major f32; u32 CRC32 of everything
    before it. ``flags`` bit 0 marks whole-token features, bits 8-15 hold the
    taxonomy level (0 if none).
    """
    cfg = model.features
    flags = (_FLAG_TOKENS if cfg.include_tokens else 0) | ((model.level or 0) << _LEVEL_SHIFT)
    header = MAGIC + struct.pack("<7I", FORMAT_VERSION, cfg.bucket_count, model.dim,
                                 model.n_labels, cfg.min_n, cfg.max_n, flags)
    for lab in model.labels:
        raw = lab.encode("utf-8")
        header += struct.pack("<I", len(raw)) + raw
    try:
        with open(path, "wb") as fh:
            crc = zlib.crc32(header)
            fh.write(header)
            for arr in (model.embeddings, model.weights, model.bias):
                crc = _write_f32(fh, arr, crc)
            fh.write(struct.pack("<I", crc & 0xFFFFFFFF))
    except OSError as exc:
        raise ModelIOError(f"io_error: cannot write {path}: {exc}") from exc


def load_model(path: str | Path) -> NgramModel:
    """Read a model written by :func:`save_model`.

    Raises:
        BadMagicError, VersionUnsupportedError, ChecksumMismatchError,
        ModelIOError, or ModelFormatError for a checksum-valid but
        inconsistent payload.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ModelIOError(f"io_error: cannot read {path}: {exc}") from exc
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad_magic: {path} does not start with {MAGIC!r}")
    if len(data) >= 8:
        (version,) = struct.unpack_from("<I", data, 4)
        if version != FORMAT_VERSION:
            raise VersionUnsupportedError(f"version_unsupported: {version} (supported: {FORMAT_VERSION})")
    if len(data) < 12 or zlib.crc32(memoryview(data)[:-4]) != struct.unpack_from("<I", data, len(data) - 4)[0]:
        raise ChecksumMismatchError(f"checksum_mismatch: {path} is truncated or corrupted")
    try:
        buckets, dim, L, min_n, max_n, flags = struct.unpack_from("<6I", data, 8)
        pos = 32
        labels = []
        for _ in range(L):
            (n,) = struct.unpack_from("<I", data, pos)
            labels.append(data[pos + 4:pos + 4 + n].decode("utf-8"))
            pos += 4 + n
        sizes = (buckets * dim, L * dim, L)
        if pos + 4 * sum(sizes) + 4 != len(data):
            raise ModelFormatError(f"{path}: payload size does not match header dimensions")
        arrays = []
        for size in sizes:
            arrays.append(np.frombuffer(data, dtype="<f4", count=size, offset=pos).astype(np.float64))
            pos += 4 * size
    except (struct.error, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: malformed header: {exc}") from exc
    level = (flags >> _LEVEL_SHIFT) & 0xFF or None
    cfg = FeatureConfig(min_n, max_n, buckets, bool(flags & _FLAG_TOKENS))
    E, W, b = arrays
    return NgramModel(E.reshape(buckets, dim), W.reshape(L, dim), b, tuple(labels), cfg, level)
