"""Joint wide (sparse linear) and deep (embeddings + 4-layer net) classifier.

Both parts share one logistic output: the probability that an atomic rule
belongs on the allow side of the reference boundary is
``sigmoid(wide_logit + deep_logit + bias)``. The wide part memorizes
feature crosses with a per-coordinate adaptive rate (accumulated squared
gradients); the deep part generalizes to unseen field combinations through
embeddings and is trained with plain SGD. Training is single-threaded and
bitwise deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from .features import COMMENT_DIM, EncodedExample, Vocabulary

EMBED_DIMS = (64, 64, 8, 8)
HIDDEN_WIDTHS = (256, 128, 64, 32)
ADAGRAD_EPS = 1e-8

SEPM_MAGIC = b"SEPM"
SEPM_VERSION = 1


class DegenerateData(Exception):
    pass


@dataclass
class TrainConfig:
    seed: int = 7
    lr_wide: float = 0.1
    lr_deep: float = 0.01
    epochs: int = 20
    batch_size: int = 256
    test_frac: float = 0.10
    hash_buckets: int = 1 << 18


@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    n_test: int


@dataclass
class Model:
    """Trained parameters plus the config snapshot they were trained under.

    Parameter groups, in serialization order: wide weights, bias, the four
    embedding tables, then (weights, bias) per dense layer and the output
    projection. The vocabulary rides along so a model file is enough to
    encode new atomics identically to training.
    """

    config: TrainConfig
    wide_dim: int
    vocab_sizes: tuple[int, int, int, int]
    wide: np.ndarray  # (wide_dim,) f32
    bias: np.ndarray  # (1,) f32
    embeddings: list[np.ndarray]  # 4 tables, (vocab_size, dim) each
    dense_w: list[np.ndarray]  # 4 hidden layers
    dense_b: list[np.ndarray]
    out_w: np.ndarray  # (last_width,)
    metrics: Metrics | None = None
    vocab: Vocabulary | None = None

    def param_groups(self) -> list[tuple[str, np.ndarray]]:
        groups = [("wide", self.wide), ("bias", self.bias)]
        for i, table in enumerate(self.embeddings):
            groups.append((f"embed{i}", table))
        for i, (w, b) in enumerate(zip(self.dense_w, self.dense_b)):
            groups.append((f"dense{i}_w", w))
            groups.append((f"dense{i}_b", b))
        groups.append(("out_w", self.out_w))
        return groups

    def astype(self, dtype) -> "Model":
        return Model(
            config=self.config,
            wide_dim=self.wide_dim,
            vocab_sizes=self.vocab_sizes,
            wide=self.wide.astype(dtype),
            bias=self.bias.astype(dtype),
            embeddings=[e.astype(dtype) for e in self.embeddings],
            dense_w=[w.astype(dtype) for w in self.dense_w],
            dense_b=[b.astype(dtype) for b in self.dense_b],
            out_w=self.out_w.astype(dtype),
        )


def init_model(config: TrainConfig, wide_dim: int, vocab_sizes: tuple[int, int, int, int]) -> Model:
    rng = np.random.default_rng(config.seed)
    embeddings = [
        rng.uniform(-0.05, 0.05, size=(n, d)).astype(np.float32)
        for n, d in zip(vocab_sizes, EMBED_DIMS)
    ]
    in_dim = sum(EMBED_DIMS) + 2 * COMMENT_DIM
    dense_w, dense_b = [], []
    prev = in_dim
    for width in HIDDEN_WIDTHS:
        bound = np.sqrt(6.0 / (prev + width))
        dense_w.append(rng.uniform(-bound, bound, size=(prev, width)).astype(np.float32))
        dense_b.append(np.zeros(width, dtype=np.float32))
        prev = width
    bound = np.sqrt(6.0 / (prev + 1))
    out_w = rng.uniform(-bound, bound, size=prev).astype(np.float32)
    return Model(
        config=config,
        wide_dim=wide_dim,
        vocab_sizes=vocab_sizes,
        wide=np.zeros(wide_dim, dtype=np.float32),
        bias=np.zeros(1, dtype=np.float32),
        embeddings=embeddings,
        dense_w=dense_w,
        dense_b=dense_b,
        out_w=out_w,
    )


# --- packed batches -------------------------------------------------------------


@dataclass
class PackedExamples:
    """Column-wise arrays for fast vectorized passes over many examples."""

    wide_flat: np.ndarray  # all wide indices, concatenated
    wide_ptr: np.ndarray  # CSR offsets, len N+1
    deep_ids: np.ndarray  # (N, 4) int
    comment: np.ndarray  # (N, 600) f32
    labels: np.ndarray  # (N,) f32

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx: np.ndarray) -> "PackedExamples":
        counts = np.diff(self.wide_ptr)[idx]
        ptr = np.zeros(len(idx) + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        total = int(ptr[-1])
        if total:
            starts = self.wide_ptr[idx]
            pos = np.arange(total, dtype=np.int64) - np.repeat(ptr[:-1], counts) + np.repeat(starts, counts)
            flat = self.wide_flat[pos]
        else:
            flat = np.zeros(0, dtype=self.wide_flat.dtype)
        return PackedExamples(flat, ptr, self.deep_ids[idx], self.comment[idx], self.labels[idx])


def pack_examples(examples: list[EncodedExample]) -> PackedExamples:
    ptr = np.zeros(len(examples) + 1, dtype=np.int64)
    for i, ex in enumerate(examples):
        ptr[i + 1] = ptr[i] + len(ex.wide_indices)
    flat = np.zeros(ptr[-1], dtype=np.int64)
    for i, ex in enumerate(examples):
        flat[ptr[i] : ptr[i + 1]] = ex.wide_indices
    deep = np.array([ex.deep_ids for ex in examples], dtype=np.int64).reshape(len(examples), 4)
    comment = np.zeros((len(examples), 2 * COMMENT_DIM), dtype=np.float32)
    for i, ex in enumerate(examples):
        comment[i, :COMMENT_DIM] = ex.allow_vec
        comment[i, COMMENT_DIM:] = ex.neverallow_vec
    labels = np.array([ex.label for ex in examples], dtype=np.float32)
    return PackedExamples(flat, ptr, deep, comment, labels)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -30.0, 30.0)))


def _forward(model: Model, batch: PackedExamples):
    """Returns (probabilities, cache for backprop)."""
    dtype = model.wide.dtype
    counts = np.diff(batch.wide_ptr)
    seg = np.repeat(np.arange(len(batch), dtype=np.int64), counts)
    wide_logit = np.zeros(len(batch), dtype=dtype)
    np.add.at(wide_logit, seg, model.wide[batch.wide_flat])

    embeds = [table[batch.deep_ids[:, k]] for k, table in enumerate(model.embeddings)]
    z0 = np.concatenate(embeds + [batch.comment.astype(dtype)], axis=1)
    hs = []
    h = z0
    pre = []
    for w, b in zip(model.dense_w, model.dense_b):
        a = h @ w + b
        pre.append(a)
        h = np.maximum(a, 0)
        hs.append(h)
    deep_logit = hs[-1] @ model.out_w
    logit = wide_logit + deep_logit + model.bias[0]
    p = _sigmoid(logit)
    return p, (seg, z0, pre, hs)


@dataclass
class Gradients:
    wide_idx: np.ndarray  # unique touched wide indices
    wide_grad: np.ndarray  # gradient per touched index
    bias: np.ndarray
    embeddings: list[np.ndarray]
    dense_w: list[np.ndarray]
    dense_b: list[np.ndarray]
    out_w: np.ndarray


def _backward(model: Model, batch: PackedExamples, p: np.ndarray, cache) -> Gradients:
    """Mean logistic-loss gradients over the batch for every parameter group."""
    dtype = model.wide.dtype
    seg, z0, pre, hs = cache
    n = len(batch)
    dlogit = ((p - batch.labels) / n).astype(dtype)

    touched = np.unique(batch.wide_flat) if len(batch.wide_flat) else np.zeros(0, dtype=np.int64)
    dense_grad = np.zeros(len(touched), dtype=dtype)
    if len(touched):
        pos = np.searchsorted(touched, batch.wide_flat)
        np.add.at(dense_grad, pos, dlogit[seg])

    d_out_w = hs[-1].T @ dlogit
    dh = np.outer(dlogit, model.out_w)
    d_dense_w = [None] * len(model.dense_w)
    d_dense_b = [None] * len(model.dense_b)
    for i in range(len(model.dense_w) - 1, -1, -1):
        da = dh * (pre[i] > 0)
        inp = z0 if i == 0 else hs[i - 1]
        d_dense_w[i] = inp.T @ da
        d_dense_b[i] = da.sum(axis=0)
        dh = da @ model.dense_w[i].T
    dz0 = dh
    d_embeds = []
    offset = 0
    for k, table in enumerate(model.embeddings):
        dim = EMBED_DIMS[k]
        grad = np.zeros_like(table)
        np.add.at(grad, batch.deep_ids[:, k], dz0[:, offset : offset + dim])
        d_embeds.append(grad)
        offset += dim
    return Gradients(
        wide_idx=touched,
        wide_grad=dense_grad,
        bias=np.array([dlogit.sum()], dtype=dtype),
        embeddings=d_embeds,
        dense_w=d_dense_w,
        dense_b=d_dense_b,
        out_w=d_out_w,
    )


def _apply(model: Model, grads: Gradients, wide_acc: np.ndarray, bias_acc: np.ndarray, config: TrainConfig):
    if len(grads.wide_idx):
        g = grads.wide_grad
        wide_acc[grads.wide_idx] += g * g
        model.wide[grads.wide_idx] -= config.lr_wide * g / np.sqrt(wide_acc[grads.wide_idx] + ADAGRAD_EPS)
    bias_acc += grads.bias * grads.bias
    model.bias -= config.lr_wide * grads.bias / np.sqrt(bias_acc + ADAGRAD_EPS)
    for table, grad in zip(model.embeddings, grads.embeddings):
        table -= config.lr_deep * grad
    for w, gw in zip(model.dense_w, grads.dense_w):
        w -= config.lr_deep * gw
    for b, gb in zip(model.dense_b, grads.dense_b):
        b -= config.lr_deep * gb
    model.out_w -= config.lr_deep * grads.out_w


def loss_on(model: Model, batch: PackedExamples) -> float:
    p, _ = _forward(model, batch)
    p = np.clip(p, 1e-12, 1 - 1e-12)
    y = batch.labels
    return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())


def train(
    examples: list[EncodedExample],
    config: TrainConfig,
    wide_dim: int,
    vocab_sizes: tuple[int, int, int, int],
) -> Model:
    """Train on a shuffled split, holding out ``test_frac`` for metrics.

    Raises DegenerateData when every label is identical: there is no
    boundary to learn and held-out metrics would be meaningless.
    """
    if not examples:
        raise DegenerateData("no training examples")
    labels = {ex.label for ex in examples}
    if len(labels) < 2:
        raise DegenerateData("all labels identical")

    packed = pack_examples(examples)
    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(len(packed))
    n_test = int(round(len(packed) * config.test_frac))
    test_idx = perm[:n_test]
    train_idx = perm[n_test:]
    if len(train_idx) == 0:
        raise DegenerateData("test fraction leaves no training data")
    train_set = packed.take(train_idx)

    model = init_model(config, wide_dim, vocab_sizes)
    wide_acc = np.zeros(wide_dim, dtype=np.float32)
    bias_acc = np.zeros(1, dtype=np.float32)

    n = len(train_set)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = train_set.take(order[start : start + config.batch_size])
            p, cache = _forward(model, batch)
            grads = _backward(model, batch, p, cache)
            _apply(model, grads, wide_acc, bias_acc, config)

    if n_test:
        test_set = packed.take(test_idx)
        model.metrics = evaluate(model, test_set)
    return model


def evaluate(model: Model, batch: PackedExamples) -> Metrics:
    p, _ = _forward(model, batch)
    pred = (p >= 0.5).astype(np.float32)
    y = batch.labels
    tp = float(((pred == 1) & (y == 1)).sum())
    fp = float(((pred == 1) & (y == 0)).sum())
    fn = float(((pred == 0) & (y == 1)).sum())
    correct = float((pred == y).sum())
    return Metrics(
        accuracy=correct / len(batch),
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / (tp + fn) if tp + fn else 0.0,
        n_test=len(batch),
    )


def predict(model: Model, example: EncodedExample) -> float:
    p, _ = _forward(model, pack_examples([example]))
    return float(p[0])


def predict_batch(model: Model, examples: list[EncodedExample]) -> np.ndarray:
    if not examples:
        return np.zeros(0, dtype=np.float64)
    p, _ = _forward(model, pack_examples(examples))
    return p


def classify(model: Model, example: EncodedExample) -> str:
    return "allow" if predict(model, example) >= 0.5 else "neverallow"


def flag_unregulated(model: Model, customized, encoder, sources: dict | None = None, image: str = ""):
    """Findings for exactly the customized atomics that carry an allow label
    but land on the neverallow side of the learned boundary."""
    from .policy import ALLOW
    from .report import Finding

    atomics = sorted(a for a in customized if a.label == ALLOW)
    if not atomics:
        return []
    probs = predict_batch(model, [encoder.encode(a) for a in atomics])
    findings = []
    for atomic, p in zip(atomics, probs):
        if p < 0.5:
            origin = (sources or {}).get(atomic, "")
            findings.append(Finding(atomic=atomic, probability=float(p), source_image=image, origin=origin))
    return findings


# --- gradient checking ------------------------------------------------------------


def gradient_check(model: Model, examples: list[EncodedExample], epsilon: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients,
    over every parameter group, computed in float64."""
    m64 = model.astype(np.float64)
    batch = pack_examples(examples)
    p, cache = _forward(m64, batch)
    grads = _backward(m64, batch, p, cache)

    analytic: dict[str, np.ndarray] = {"bias": grads.bias, "out_w": grads.out_w}
    wide_full = np.zeros(m64.wide_dim, dtype=np.float64)
    wide_full[grads.wide_idx] = grads.wide_grad
    analytic["wide"] = wide_full
    for i, g in enumerate(grads.embeddings):
        analytic[f"embed{i}"] = g
    for i, (gw, gb) in enumerate(zip(grads.dense_w, grads.dense_b)):
        analytic[f"dense{i}_w"] = gw
        analytic[f"dense{i}_b"] = gb

    rng = np.random.default_rng(12345)
    max_err = 0.0
    for name, array in m64.param_groups():
        coords = _sample_coords(array, analytic[name], rng)
        for coord in coords:
            orig = array[coord]
            array[coord] = orig + epsilon
            hi = loss_on(m64, batch)
            array[coord] = orig - epsilon
            lo = loss_on(m64, batch)
            array[coord] = orig
            numeric = (hi - lo) / (2 * epsilon)
            a = analytic[name][coord]
            err = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-8)
            max_err = max(max_err, err)
    return max_err


def _sample_coords(array: np.ndarray, analytic: np.ndarray, rng: np.random.Generator):
    """Every coordinate for small groups; for large ones, the strongest
    analytic-gradient coordinates plus a random handful of the rest."""
    if array.size <= 64:
        return [tuple(int(c) for c in np.unravel_index(i, array.shape)) for i in range(array.size)]
    strongest = np.argsort(np.abs(analytic).ravel())[-24:]
    random_picks = rng.choice(array.size, size=24, replace=False)
    picks = np.unique(np.concatenate([strongest, random_picks]))
    return [tuple(int(c) for c in np.unravel_index(i, array.shape)) for i in picks]


# --- serialization -----------------------------------------------------------------


def save_model(path, model: Model) -> None:
    header = {
        "config": asdict(model.config),
        "wide_dim": model.wide_dim,
        "vocab_sizes": list(model.vocab_sizes),
        "metrics": asdict(model.metrics) if model.metrics else None,
        "vocab": _vocab_to_lists(model.vocab) if model.vocab else None,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SEPM_MAGIC)
        fh.write(struct.pack("<HI", SEPM_VERSION, len(blob)))
        fh.write(blob)
        for _, array in model.param_groups():
            fh.write(np.asarray(array, dtype="<f4").tobytes())


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        if fh.read(4) != SEPM_MAGIC:
            raise ValueError("not a model file")
        version, blob_len = struct.unpack("<HI", fh.read(6))
        if version != SEPM_VERSION:
            raise ValueError(f"unsupported model version {version}")
        header = json.loads(fh.read(blob_len).decode("utf-8"))
        config = TrainConfig(**header["config"])
        vocab_sizes = tuple(header["vocab_sizes"])
        model = init_model(config, header["wide_dim"], vocab_sizes)
        for _, array in model.param_groups():
            raw = fh.read(4 * array.size)
            array[...] = np.frombuffer(raw, dtype="<f4").reshape(array.shape)
        if header.get("metrics"):
            model.metrics = Metrics(**header["metrics"])
        if header.get("vocab"):
            model.vocab = _vocab_from_lists(header["vocab"])
    return model


def _vocab_to_lists(vocab: Vocabulary) -> dict[str, list[str]]:
    out = {}
    for field_name in ("subject", "target", "klass", "perm"):
        mapping = getattr(vocab, field_name)
        out[field_name] = [name for name, _ in sorted(mapping.items(), key=lambda kv: kv[1])]
    return out


def _vocab_from_lists(lists: dict[str, list[str]]) -> Vocabulary:
    return Vocabulary(
        **{
            f: {name: i + 1 for i, name in enumerate(lists[f])}
            for f in ("subject", "target", "klass", "perm")
        }
    )
