"""Temporal-conv classifier whose logits serve as the embedding.

Architecture: three 1D conv blocks (conv k=3 pad=1 -> batch norm -> ReLU ->
dropout), global average pooling over the 20 timesteps, then a linear head.
Forward, backward, and training are implemented directly on numpy arrays in
float64 so analytic gradients can be checked against finite differences.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from bdisc.data import Dataset, N_CHANNELS, N_TIMESTEPS
from bdisc.errors import ValidationError
from bdisc.optim import adamw_step, init_moments
from bdisc.seeds import derive_seed

CHECKPOINT_VERSION = 1


@dataclass
class EncoderConfig:
    in_channels: int = N_CHANNELS
    conv_layers: int = 3
    channels_per_layer: int = 30
    kernel_size: int = 3
    dropout_rate: float = 0.25
    epochs: int = 2000
    learning_rate: float = 3e-4
    weight_decay: float = 0.01
    batch_size: int | None = None  # None = full batch
    bn_momentum: float = 0.1
    bn_epsilon: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.kernel_size % 2 != 1:
            raise ValidationError("kernel_size must be odd so temporal length is preserved")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must be in [0, 1)")

    @property
    def padding(self) -> int:
        return (self.kernel_size - 1) // 2


@dataclass
class EncoderParams:
    """Named parameter tensors plus the trial's class map.

    ``class_indices[j]`` is the original class index behind logit column j
    (training remaps labels to a contiguous 0..C-1 range per trial).
    """

    config: EncoderConfig
    class_indices: list[int]
    tensors: dict[str, np.ndarray]

    @property
    def n_classes(self) -> int:
        return len(self.class_indices)

    def trainable_keys(self) -> list[str]:
        return [k for k in self.tensors if not k.endswith(("running_mean", "running_var"))]

    def decay_keys(self) -> set[str]:
        return {k for k in self.tensors if k.endswith(".w")}


@dataclass
class EmbeddingSet:
    """Logit embeddings with per-row provenance.

    ``labels`` holds the known class for labeled rows and -1 for unlabeled
    ones; ``truth`` optionally carries hidden labels for evaluation only.
    """

    vectors: np.ndarray
    ids: list[str]
    labels: np.ndarray
    truth: np.ndarray | None = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.vectors.ndim != 2 or len(self.ids) != len(self.vectors) or len(self.labels) != len(self.vectors):
            raise ValidationError("embedding rows, ids, and labels must align")
        if not np.all(np.isfinite(self.vectors)):
            raise ValidationError("non-finite embedding values")

    def __len__(self):
        return len(self.vectors)

    @property
    def labeled_mask(self) -> np.ndarray:
        return self.labels >= 0

    def known_classes(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.labels[self.labeled_mask]))


def concat_embeddings(a: EmbeddingSet, b: EmbeddingSet) -> EmbeddingSet:
    if a.vectors.shape[1] != b.vectors.shape[1]:
        raise ValidationError("embedding dimensions differ")
    truth = None
    if a.truth is not None or b.truth is not None:
        ta = a.truth if a.truth is not None else np.full(len(a), -1)
        tb = b.truth if b.truth is not None else np.full(len(b), -1)
        truth = np.concatenate([ta, tb])
    return EmbeddingSet(
        np.vstack([a.vectors, b.vectors]), a.ids + b.ids,
        np.concatenate([a.labels, b.labels]), truth,
    )


def init_params(cfg: EncoderConfig, class_indices) -> EncoderParams:
    """Seeded init: fan-in-scaled uniform weights, zero biases, unit BN."""
    class_indices = [int(c) for c in class_indices]
    rng = np.random.default_rng(derive_seed(cfg.seed, "init"))
    tensors: dict[str, np.ndarray] = {}
    in_ch = cfg.in_channels
    for layer in range(cfg.conv_layers):
        out_ch = cfg.channels_per_layer
        limit = 1.0 / np.sqrt(in_ch * cfg.kernel_size)
        tensors[f"conv{layer}.w"] = rng.uniform(-limit, limit, (out_ch, in_ch, cfg.kernel_size))
        tensors[f"conv{layer}.b"] = np.zeros(out_ch)
        tensors[f"bn{layer}.gamma"] = np.ones(out_ch)
        tensors[f"bn{layer}.beta"] = np.zeros(out_ch)
        tensors[f"bn{layer}.running_mean"] = np.zeros(out_ch)
        tensors[f"bn{layer}.running_var"] = np.ones(out_ch)
        in_ch = out_ch
    n_classes = len(class_indices)
    limit = 1.0 / np.sqrt(cfg.channels_per_layer)
    tensors["head.w"] = rng.uniform(-limit, limit, (n_classes, cfg.channels_per_layer))
    tensors["head.b"] = np.zeros(n_classes)
    return EncoderParams(cfg, class_indices, tensors)


def _window_matrix(x, k, pad):
    # (N, Cin, T) -> (N*T, Cin*K) patch matrix
    n, c_in, t = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)  # (N, Cin, T, K)
    return np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(n * t, c_in * k)


def _conv1d(x, w, b):
    n, _, t = x.shape
    c_out, c_in, k = w.shape
    pad = (k - 1) // 2
    win2d = _window_matrix(x, k, pad)
    out = win2d @ w.reshape(c_out, c_in * k).T + b
    return out.reshape(n, t, c_out).transpose(0, 2, 1)


def _conv1d_backward(x, w, dout):
    n, _, t = x.shape
    c_out, c_in, k = w.shape
    pad = (k - 1) // 2
    win2d = _window_matrix(x, k, pad)
    dout2d = np.ascontiguousarray(dout.transpose(0, 2, 1)).reshape(n * t, c_out)
    dw = (dout2d.T @ win2d).reshape(c_out, c_in, k)
    db = dout2d.sum(axis=0)
    dwin = (dout2d @ w.reshape(c_out, c_in * k)).reshape(n, t, c_in, k)
    dxp = np.zeros((n, c_in, t + 2 * pad))
    for kk in range(k):
        dxp[:, :, kk : kk + t] += dwin[:, :, :, kk].transpose(0, 2, 1)
    return dxp[:, :, pad : pad + t], dw, db


def forward(params: EncoderParams, x, mode: str = "infer", dropout_rng=None):
    """Run the network. Returns ``(logits, cache)``; cache is None in infer mode.

    Train mode uses batch statistics for BN and applies seeded dropout;
    infer mode uses running statistics and is deterministic.
    """
    if mode not in ("train", "infer"):
        raise ValidationError(f"unknown forward mode {mode!r}")
    train = mode == "train"
    cfg = params.config
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1] != cfg.in_channels or x.shape[2] != N_TIMESTEPS:
        raise ValidationError(f"expected input (N, {cfg.in_channels}, {N_TIMESTEPS}), got {x.shape}")
    if train and x.shape[0] < 2:
        raise ValidationError("batch norm needs batch size >= 2 in train mode")
    if train and dropout_rng is None:
        raise ValidationError("train mode requires a dropout rng")

    ts = params.tensors
    cache = {"x0": x} if train else None
    h = x
    for layer in range(cfg.conv_layers):
        z = _conv1d(h, ts[f"conv{layer}.w"], ts[f"conv{layer}.b"])
        if z.shape[2] != N_TIMESTEPS:
            raise RuntimeError(f"layer {layer}: temporal length not preserved")
        gamma = ts[f"bn{layer}.gamma"]
        beta = ts[f"bn{layer}.beta"]
        if train:
            mu = z.mean(axis=(0, 2))
            var = z.var(axis=(0, 2))
            count = z.shape[0] * z.shape[2]
            ts[f"bn{layer}.running_mean"] = (
                (1 - cfg.bn_momentum) * ts[f"bn{layer}.running_mean"] + cfg.bn_momentum * mu
            )
            ts[f"bn{layer}.running_var"] = (
                (1 - cfg.bn_momentum) * ts[f"bn{layer}.running_var"]
                + cfg.bn_momentum * var * count / max(count - 1, 1)
            )
        else:
            mu = ts[f"bn{layer}.running_mean"]
            var = ts[f"bn{layer}.running_var"]
        inv = 1.0 / np.sqrt(var + cfg.bn_epsilon)
        zhat = (z - mu[None, :, None]) * inv[None, :, None]
        y = gamma[None, :, None] * zhat + beta[None, :, None]
        a = np.maximum(y, 0.0)
        if train and cfg.dropout_rate > 0.0:
            keep = dropout_rng.random(a.shape) >= cfg.dropout_rate
            mask = keep / (1.0 - cfg.dropout_rate)
        else:
            mask = None
        h_next = a * mask if mask is not None else a
        if not np.all(np.isfinite(h_next)):
            raise RuntimeError(f"non-finite activations after layer {layer}")
        if train:
            cache[f"l{layer}"] = {
                "x": h, "z": z, "mu": mu, "inv": inv, "zhat": zhat,
                "relu_mask": y > 0.0, "dropout_mask": mask,
            }
        h = h_next

    feats = h.mean(axis=2)
    logits = feats @ ts["head.w"].T + ts["head.b"]
    if not np.all(np.isfinite(logits)):
        raise RuntimeError("non-finite logits at head")
    if train:
        cache["feats"] = feats
        cache["logits"] = logits
    return logits, cache


def loss_softmax_ce(logits, labels) -> float:
    """Mean cross-entropy of softmax(logits) vs integer labels (stabilized)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(labels)), labels]
    return float(np.mean(lse - picked))


def _softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def backward(params: EncoderParams, cache, labels):
    """Exact gradient of loss_softmax_ce(forward(...)) for every parameter.

    Requires the cache of an immediately preceding train-mode forward with
    the same dropout masks. BN running stats are not optimized and get no
    gradient entries.
    """
    if cache is None or "logits" not in cache:
        raise ValidationError("backward needs the cache from a train-mode forward")
    cfg = params.config
    ts = params.tensors
    labels = np.asarray(labels, dtype=int)
    n = len(labels)

    probs = _softmax(cache["logits"])
    dlogits = probs
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n

    grads: dict[str, np.ndarray] = {}
    grads["head.w"] = dlogits.T @ cache["feats"]
    grads["head.b"] = dlogits.sum(axis=0)
    dfeats = dlogits @ ts["head.w"]
    dh = np.repeat(dfeats[:, :, None], N_TIMESTEPS, axis=2) / N_TIMESTEPS

    for layer in reversed(range(cfg.conv_layers)):
        lc = cache[f"l{layer}"]
        if lc["dropout_mask"] is not None:
            dh = dh * lc["dropout_mask"]
        dy = dh * lc["relu_mask"]
        gamma = ts[f"bn{layer}.gamma"]
        z, mu, inv, zhat = lc["z"], lc["mu"], lc["inv"], lc["zhat"]
        count = z.shape[0] * z.shape[2]
        grads[f"bn{layer}.gamma"] = (dy * zhat).sum(axis=(0, 2))
        grads[f"bn{layer}.beta"] = dy.sum(axis=(0, 2))
        dzhat = dy * gamma[None, :, None]
        centered = z - mu[None, :, None]
        dvar = (dzhat * centered).sum(axis=(0, 2)) * (-0.5) * inv**3
        dmu = -(dzhat.sum(axis=(0, 2))) * inv + dvar * (-2.0 / count) * centered.sum(axis=(0, 2))
        dz = (
            dzhat * inv[None, :, None]
            + (2.0 / count) * dvar[None, :, None] * centered
            + dmu[None, :, None] / count
        )
        dh, dw, db = _conv1d_backward(lc["x"], ts[f"conv{layer}.w"], dz)
        grads[f"conv{layer}.w"] = dw
        grads[f"conv{layer}.b"] = db
    return grads


def train(labeled: Dataset, cfg: EncoderConfig):
    """Train on a labeled dataset; returns ``(params, loss_trace)``.

    Deterministic for a fixed config seed: seeded init, seeded dropout
    stream, seeded batch order. Full-batch by default.
    """
    if not labeled.preprocessed:
        raise ValidationError("train expects a preprocessed dataset")
    labels_all = labeled.labels()
    if np.any(labels_all < 0):
        raise ValidationError("train expects a fully labeled dataset")
    class_indices = sorted(int(c) for c in np.unique(labels_all))
    if len(class_indices) < 2:
        raise ValidationError("need >= 2 classes to train the classifier")

    x = labeled.values()
    remap = {c: j for j, c in enumerate(class_indices)}
    y = np.array([remap[int(c)] for c in labels_all])
    n = len(y)

    if cfg.batch_size is not None and cfg.batch_size < 2:
        raise ValidationError("batch_size must be >= 2 (batch norm)")

    params = init_params(cfg, class_indices)
    moments = init_moments({k: params.tensors[k] for k in params.trainable_keys()})
    decay_keys = params.decay_keys()
    dropout_rng = np.random.default_rng(derive_seed(cfg.seed, "dropout"))
    batch_rng = np.random.default_rng(derive_seed(cfg.seed, "batches"))

    trace = []
    step = 0
    for epoch in range(cfg.epochs):
        if cfg.batch_size is None:
            batches = [np.arange(n)]
        else:
            order = batch_rng.permutation(n)
            batches = [order[i : i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]
            if len(batches) > 1 and len(batches[-1]) == 1:
                # batch norm rejects size-1 batches; fold the orphan in
                batches[-2] = np.concatenate([batches[-2], batches[-1]])
                batches.pop()
        epoch_loss = 0.0
        for idx in batches:
            logits, cache = forward(params, x[idx], mode="train", dropout_rng=dropout_rng)
            loss = loss_softmax_ce(logits, y[idx])
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged at epoch {epoch}")
            grads = backward(params, cache, y[idx])
            step += 1
            adamw_step(
                params.tensors, grads, moments, step,
                lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2,
                eps=cfg.adam_epsilon, weight_decay=cfg.weight_decay,
                decay_keys=decay_keys,
            )
            epoch_loss += loss * len(idx)
        trace.append(epoch_loss / n)
    return params, trace


def embed(params: EncoderParams, dataset: Dataset) -> EmbeddingSet:
    """Infer-mode logits for every snippet, provenance copied from the dataset."""
    x = dataset.values()
    if len(x) == 0:
        return EmbeddingSet(np.zeros((0, params.n_classes)), [], np.zeros(0, dtype=int))
    logits, _ = forward(params, x, mode="infer")
    return EmbeddingSet(logits, dataset.ids(), dataset.labels())


def predict_accuracy(params: EncoderParams, dataset: Dataset) -> float:
    """Fraction of labeled snippets whose argmax logit matches their label."""
    emb = embed(params, dataset)
    mask = emb.labeled_mask
    if not np.any(mask):
        raise ValidationError("no labeled rows to score")
    pred = np.array(params.class_indices)[emb.vectors[mask].argmax(axis=1)]
    return float(np.mean(pred == emb.labels[mask]))


def save_params(params: EncoderParams, path) -> None:
    """Checkpoint: npz with named tensors plus a JSON metadata entry."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "class_indices": params.class_indices,
        "config": asdict(params.config),
        "shapes": {k: list(v.shape) for k, v in params.tensors.items()},
    }
    arrays = {f"tensor/{k}": v for k, v in params.tensors.items()}
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)


def load_params(path) -> EncoderParams:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValidationError(f"unsupported checkpoint version {meta.get('version')}")
        tensors = {
            k[len("tensor/"):]: np.array(data[k]) for k in data.files if k.startswith("tensor/")
        }
    cfg = EncoderConfig(**meta["config"])
    params = EncoderParams(cfg, [int(c) for c in meta["class_indices"]], tensors)
    for key, shape in meta["shapes"].items():
        if list(params.tensors[key].shape) != shape:
            raise ValidationError(f"checkpoint tensor {key} has wrong shape")
    return params
