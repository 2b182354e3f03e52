"""Bi-directional recurrent transducer over frozen word embeddings.

Both directions run the same cell (LSTM or GRU); per step the two hidden
states are concatenated and mapped through an affine layer plus softmax to
a distribution over the four output labels. Training minimizes summed
per-step cross entropy (padding positions included as the PAD class) with
Adam, mini-batches, and early stopping on held-out validation loss.

Everything is plain numpy in float64 with handwritten backpropagation, so
gradients can be audited coordinate-by-coordinate against finite
differences and runs are bitwise reproducible from their seeds.
"""

from __future__ import annotations

import dataclasses
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from adrx.corpus import AnnotatedSequence, Corpus, Label
from adrx.embedding import CELL_KINDS, EmbeddingTable, embed_batch, embed_tokens
from adrx.errors import ConfigError, DataFormatError

NUM_LABELS = 4
LOG_CLAMP = 1e-12
ROW_SUM_TOL = 1e-6

# Stacked gate order: LSTM (input, forget, candidate, output); GRU (reset,
# update, candidate).
GATES_PER_CELL = {"lstm": 4, "gru": 3}

_PARAM_FIELDS = (
    "w_x_fwd",
    "w_h_fwd",
    "b_fwd",
    "w_x_bwd",
    "w_h_bwd",
    "b_bwd",
    "w_out",
    "b_out",
)


@dataclass
class TransducerParams:
    """All learnable parameters of one bi-directional transducer."""

    cell_kind: str
    embed_dim: int
    hidden_dim: int
    w_x_fwd: np.ndarray  # (embed_dim, gates * hidden_dim)
    w_h_fwd: np.ndarray  # (hidden_dim, gates * hidden_dim)
    b_fwd: np.ndarray  # (gates * hidden_dim,)
    w_x_bwd: np.ndarray
    w_h_bwd: np.ndarray
    b_bwd: np.ndarray
    w_out: np.ndarray  # (NUM_LABELS, 2 * hidden_dim)
    b_out: np.ndarray  # (NUM_LABELS,)

    def __post_init__(self) -> None:
        if self.cell_kind not in GATES_PER_CELL:
            raise ValueError(f"cell_kind must be one of {CELL_KINDS}")
        gates = GATES_PER_CELL[self.cell_kind]
        expected = {
            "w_x_fwd": (self.embed_dim, gates * self.hidden_dim),
            "w_h_fwd": (self.hidden_dim, gates * self.hidden_dim),
            "b_fwd": (gates * self.hidden_dim,),
            "w_x_bwd": (self.embed_dim, gates * self.hidden_dim),
            "w_h_bwd": (self.hidden_dim, gates * self.hidden_dim),
            "b_bwd": (gates * self.hidden_dim,),
            "w_out": (NUM_LABELS, 2 * self.hidden_dim),
            "b_out": (NUM_LABELS,),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            setattr(self, name, arr)

    def arrays(self) -> dict[str, np.ndarray]:
        """Name-to-array view of the live parameter tensors."""
        return {name: getattr(self, name) for name in _PARAM_FIELDS}

    def copy(self) -> "TransducerParams":
        return dataclasses.replace(
            self, **{name: getattr(self, name).copy() for name in _PARAM_FIELDS}
        )


def init_params(
    cell_kind: str, embed_dim: int, hidden_dim: int = 500, seed: int = 0
) -> TransducerParams:
    """Seeded initialization: Glorot-uniform weights per matrix, zero biases,
    and LSTM forget-gate biases set to 1 for early-training stability."""
    if cell_kind not in GATES_PER_CELL:
        raise ValueError(f"cell_kind must be one of {CELL_KINDS}")
    gates = GATES_PER_CELL[cell_kind]
    rng = np.random.default_rng(seed)

    def glorot(fan_in: int, fan_out: int, shape: tuple[int, ...]) -> np.ndarray:
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, shape)

    def direction() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w_x = glorot(embed_dim, gates * hidden_dim, (embed_dim, gates * hidden_dim))
        w_h = glorot(hidden_dim, gates * hidden_dim, (hidden_dim, gates * hidden_dim))
        b = np.zeros(gates * hidden_dim)
        if cell_kind == "lstm":
            b[hidden_dim : 2 * hidden_dim] = 1.0
        return w_x, w_h, b

    w_x_fwd, w_h_fwd, b_fwd = direction()
    w_x_bwd, w_h_bwd, b_bwd = direction()
    w_out = glorot(2 * hidden_dim, NUM_LABELS, (NUM_LABELS, 2 * hidden_dim))
    b_out = np.zeros(NUM_LABELS)
    return TransducerParams(
        cell_kind,
        embed_dim,
        hidden_dim,
        w_x_fwd,
        w_h_fwd,
        b_fwd,
        w_x_bwd,
        w_h_bwd,
        b_bwd,
        w_out,
        b_out,
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def _lstm_forward(x, w_x, w_h, b):
    batch, steps, _ = x.shape
    hidden = w_h.shape[0]
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    hs = np.empty((batch, steps, hidden))
    cache = []
    pre = x @ w_x + b
    for t in range(steps):
        a = pre[:, t] + h @ w_h
        i = _sigmoid(a[:, :hidden])
        f = _sigmoid(a[:, hidden : 2 * hidden])
        g = np.tanh(a[:, 2 * hidden : 3 * hidden])
        o = _sigmoid(a[:, 3 * hidden :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        cache.append((h, c, i, f, g, o, tc))
        h = o * tc
        c = c_new
        hs[:, t] = h
    return hs, cache


def _lstm_backward(x, cache, d_hs, w_x, w_h):
    batch, steps, _ = x.shape
    hidden = w_h.shape[0]
    dw_x = np.zeros_like(w_x)
    dw_h = np.zeros_like(w_h)
    db = np.zeros(w_h.shape[1])
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for t in reversed(range(steps)):
        h_prev, c_prev, i, f, g, o, tc = cache[t]
        dh = d_hs[:, t] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * c_prev
        dg = dc * i
        dc_next = dc * f
        da = np.concatenate(
            [
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        dw_x += x[:, t].T @ da
        dw_h += h_prev.T @ da
        db += da.sum(axis=0)
        dh_next = da @ w_h.T
    return dw_x, dw_h, db


def _gru_forward(x, w_x, w_h, b):
    batch, steps, _ = x.shape
    hidden = w_h.shape[0]
    h = np.zeros((batch, hidden))
    hs = np.empty((batch, steps, hidden))
    cache = []
    pre = x @ w_x + b
    for t in range(steps):
        r = _sigmoid(pre[:, t, :hidden] + h @ w_h[:, :hidden])
        z = _sigmoid(pre[:, t, hidden : 2 * hidden] + h @ w_h[:, hidden : 2 * hidden])
        rh = r * h
        n = np.tanh(pre[:, t, 2 * hidden :] + rh @ w_h[:, 2 * hidden :])
        cache.append((h, r, z, n, rh))
        h = z * h + (1.0 - z) * n
        hs[:, t] = h
    return hs, cache


def _gru_backward(x, cache, d_hs, w_x, w_h):
    batch, steps, _ = x.shape
    hidden = w_h.shape[0]
    dw_x = np.zeros_like(w_x)
    dw_h = np.zeros_like(w_h)
    db = np.zeros(w_h.shape[1])
    dh_next = np.zeros((batch, hidden))
    for t in reversed(range(steps)):
        h_prev, r, z, n, rh = cache[t]
        dh = d_hs[:, t] + dh_next
        dz = dh * (h_prev - n)
        dn = dh * (1.0 - z)
        dh_prev = dh * z
        da_n = dn * (1.0 - n * n)
        drh = da_n @ w_h[:, 2 * hidden :].T
        dr = drh * h_prev
        dh_prev += drh * r
        da_r = dr * r * (1.0 - r)
        da_z = dz * z * (1.0 - z)
        dw_x[:, :hidden] += x[:, t].T @ da_r
        dw_x[:, hidden : 2 * hidden] += x[:, t].T @ da_z
        dw_x[:, 2 * hidden :] += x[:, t].T @ da_n
        dw_h[:, :hidden] += h_prev.T @ da_r
        dw_h[:, hidden : 2 * hidden] += h_prev.T @ da_z
        dw_h[:, 2 * hidden :] += rh.T @ da_n
        db[:hidden] += da_r.sum(axis=0)
        db[hidden : 2 * hidden] += da_z.sum(axis=0)
        db[2 * hidden :] += da_n.sum(axis=0)
        dh_prev += da_r @ w_h[:, :hidden].T + da_z @ w_h[:, hidden : 2 * hidden].T
        dh_next = dh_prev
    return dw_x, dw_h, db


_DIRECTION = {
    "lstm": (_lstm_forward, _lstm_backward),
    "gru": (_gru_forward, _gru_backward),
}


def _check_distributions(probs: np.ndarray) -> None:
    if not np.all(np.isfinite(probs)):
        raise FloatingPointError("transducer produced non-finite probabilities")
    sums = probs.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > ROW_SUM_TOL):
        raise FloatingPointError("probability rows do not sum to 1")


def _forward_batch(params: TransducerParams, x: np.ndarray):
    forward_dir, _ = _DIRECTION[params.cell_kind]
    hs_fwd, cache_fwd = forward_dir(x, params.w_x_fwd, params.w_h_fwd, params.b_fwd)
    x_rev = x[:, ::-1]
    hs_bwd_rev, cache_bwd = forward_dir(
        x_rev, params.w_x_bwd, params.w_h_bwd, params.b_bwd
    )
    h_cat = np.concatenate([hs_fwd, hs_bwd_rev[:, ::-1]], axis=2)
    logits = h_cat @ params.w_out.T + params.b_out
    probs = _softmax(logits)
    _check_distributions(probs)
    cache = (x, x_rev, cache_fwd, cache_bwd, h_cat)
    return probs, cache


def _backward_batch(params: TransducerParams, cache, d_logits: np.ndarray):
    x, x_rev, cache_fwd, cache_bwd, h_cat = cache
    hidden = params.hidden_dim
    _, backward_dir = _DIRECTION[params.cell_kind]
    grads = {
        "w_out": np.einsum("btl,bth->lh", d_logits, h_cat),
        "b_out": d_logits.sum(axis=(0, 1)),
    }
    dh_cat = d_logits @ params.w_out
    dw_x, dw_h, db = backward_dir(
        x, cache_fwd, dh_cat[..., :hidden], params.w_x_fwd, params.w_h_fwd
    )
    grads.update(w_x_fwd=dw_x, w_h_fwd=dw_h, b_fwd=db)
    dw_x, dw_h, db = backward_dir(
        x_rev,
        cache_bwd,
        dh_cat[..., hidden:][:, ::-1],
        params.w_x_bwd,
        params.w_h_bwd,
    )
    grads.update(w_x_bwd=dw_x, w_h_bwd=dw_h, b_bwd=db)
    return grads


def forward(
    params: TransducerParams, table: EmbeddingTable, tokens: Sequence[str]
) -> np.ndarray:
    """Per-step label distributions for one (padded) token sequence.

    Returns a (len(tokens), 4) matrix whose rows sum to 1.
    """
    x = embed_tokens(table, tokens)[np.newaxis]
    probs, _ = _forward_batch(params, x)
    return probs[0]


def forward_batch(
    params: TransducerParams,
    table: EmbeddingTable,
    sequences: Sequence[AnnotatedSequence],
) -> np.ndarray:
    """Vectorized forward over equal-length sequences: (batch, steps, 4)."""
    probs, _ = _forward_batch(params, embed_batch(table, sequences))
    return probs


def loss(dist: np.ndarray, gold: Sequence[Label]) -> float:
    """Summed per-step cross entropy of one sequence against one-hot gold
    labels, padding steps included. Log arguments are clamped at 1e-12."""
    dist = np.asarray(dist)
    if dist.ndim != 2 or dist.shape[1] != NUM_LABELS:
        raise ValueError(f"distribution must be (steps, {NUM_LABELS})")
    if len(gold) != dist.shape[0]:
        raise ValueError(f"{len(gold)} labels for {dist.shape[0]} steps")
    idx = np.fromiter((int(label) for label in gold), dtype=np.intp, count=len(gold))
    picked = dist[np.arange(len(gold)), idx]
    return float(-np.log(np.maximum(picked, LOG_CLAMP)).sum())


def _one_hot(sequences: Sequence[AnnotatedSequence]) -> np.ndarray:
    length = len(sequences[0].labels)
    idx = np.array([[int(label) for label in seq.labels] for seq in sequences])
    if idx.shape != (len(sequences), length):
        raise ValueError("sequences in a batch must share one padded length")
    return np.eye(NUM_LABELS)[idx]


def _loss_and_gradient(params: TransducerParams, x: np.ndarray, y: np.ndarray):
    """Mean per-sequence loss over the batch and its exact parameter
    gradients (softmax and cross entropy fused in closed form)."""
    probs, cache = _forward_batch(params, x)
    picked = (probs * y).sum(axis=2)
    batch_losses = -np.log(np.maximum(picked, LOG_CLAMP)).sum(axis=1)
    mean_loss = float(batch_losses.mean())
    d_logits = (probs - y) / x.shape[0]
    grads = _backward_batch(params, cache, d_logits)
    return mean_loss, grads


def gradient(
    params: TransducerParams,
    table: EmbeddingTable,
    batch: Sequence[AnnotatedSequence],
) -> dict[str, np.ndarray]:
    """Exact gradients of the mean batch loss, keyed like params.arrays()."""
    x = embed_batch(table, batch)
    y = _one_hot(batch)
    _, grads = _loss_and_gradient(params, x, y)
    return grads


def batch_mean_loss(
    params: TransducerParams,
    table: EmbeddingTable,
    batch: Sequence[AnnotatedSequence],
) -> float:
    """Mean per-sequence loss of a batch; the quantity gradient() differentiates."""
    x = embed_batch(table, batch)
    y = _one_hot(batch)
    probs, _ = _forward_batch(params, x)
    picked = (probs * y).sum(axis=2)
    return float(-np.log(np.maximum(picked, LOG_CLAMP)).sum(axis=1).mean())


def decode(dist: np.ndarray, original_length: int) -> list[Label]:
    """Per-step argmax labels; ties break toward the lowest label index and
    positions at or beyond original_length are forced to PAD."""
    dist = np.asarray(dist)
    picks = dist.argmax(axis=1)
    return [
        Label.PAD if t >= original_length else Label(int(picks[t]))
        for t in range(dist.shape[0])
    ]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    max_epochs: int = 25
    early_stop_patience: int = 3
    validation_fraction: float = 0.10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 5.0
    seed: int = 0
    # Lookup tables are frozen by contract; the flag records the choice.
    trainable_embeddings: bool = False

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise ConfigError("validation_fraction must lie in (0, 1)")
        if not 0 < self.early_stop_patience < self.max_epochs:
            raise ConfigError("need 0 < early_stop_patience < max_epochs")
        if self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.trainable_embeddings:
            raise ConfigError("trainable embeddings are not supported")


@dataclass
class TrainResult:
    """Per-epoch record of one training run plus the best-epoch snapshot."""

    params: TransducerParams
    train_losses: list[float]
    val_losses: list[float]
    best_epoch: int  # 1-based index into the loss lists
    train_indices: list[int]
    val_indices: list[int]


class _AdamState:
    def __init__(self, params: TransducerParams) -> None:
        self.m = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        self.t = 0

    def update(
        self,
        params: TransducerParams,
        grads: dict[str, np.ndarray],
        cfg: TrainConfig,
    ) -> None:
        self.t += 1
        b1, b2 = cfg.adam_beta1, cfg.adam_beta2
        for name, arr in params.arrays().items():
            g = grads[name]
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            m_hat = self.m[name] / (1.0 - b1**self.t)
            v_hat = self.v[name] / (1.0 - b2**self.t)
            arr -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def _clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> None:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale


def _dataset_loss(
    params: TransducerParams, x: np.ndarray, y: np.ndarray, chunk: int = 256
) -> float:
    total = 0.0
    for start in range(0, x.shape[0], chunk):
        probs, _ = _forward_batch(params, x[start : start + chunk])
        picked = (probs * y[start : start + chunk]).sum(axis=2)
        total += float(-np.log(np.maximum(picked, LOG_CLAMP)).sum())
    return total / x.shape[0]


def fit(
    params: TransducerParams,
    table: EmbeddingTable,
    corpus: Corpus,
    config: TrainConfig,
) -> TrainResult:
    """Train on a padded corpus and return the best-validation snapshot.

    A seeded 90:10 (by default) train/validation split is drawn from the
    corpus; epochs stop early once validation loss has gone
    ``early_stop_patience`` consecutive epochs without improving. The
    caller's params are not mutated.
    """
    examples = corpus.examples
    if len(examples) < 2:
        raise ValueError("training needs at least 2 examples to split")
    if any(len(seq.tokens) != corpus.max_length for seq in examples):
        raise ValueError("corpus must be padded before training")

    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(len(examples))
    n_val = int(round(len(examples) * config.validation_fraction))
    n_val = min(max(n_val, 1), len(examples) - 1)
    val_idx = perm[:n_val]
    train_idx = perm[n_val:]

    x_all = embed_batch(table, examples)
    y_all = _one_hot(examples)

    params = params.copy()
    adam = _AdamState(params)
    best_params = params.copy()
    best_val = np.inf
    best_epoch = 0
    stale_epochs = 0
    train_losses: list[float] = []
    val_losses: list[float] = []

    for epoch in range(1, config.max_epochs + 1):
        order = train_idx[rng.permutation(len(train_idx))]
        batch_losses = []
        for start in range(0, len(order), config.batch_size):
            chunk = order[start : start + config.batch_size]
            batch_loss, grads = _loss_and_gradient(params, x_all[chunk], y_all[chunk])
            _clip_global_norm(grads, config.grad_clip)
            adam.update(params, grads, config)
            batch_losses.append(batch_loss)
        train_losses.append(float(np.mean(batch_losses)))
        val_loss = _dataset_loss(params, x_all[val_idx], y_all[val_idx])
        val_losses.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            best_epoch = epoch
            stale_epochs = 0
        else:
            stale_epochs += 1
            if stale_epochs >= config.early_stop_patience:
                break

    return TrainResult(
        best_params,
        train_losses,
        val_losses,
        best_epoch,
        [int(i) for i in train_idx],
        [int(i) for i in val_idx],
    )


def train(
    params: TransducerParams,
    table: EmbeddingTable,
    corpus: Corpus,
    config: TrainConfig,
) -> TransducerParams:
    """fit() restricted to its primary output, the best-epoch parameters."""
    return fit(params, table, corpus, config).params


def save_checkpoint(params: TransducerParams, path: str | Path) -> None:
    """Write a self-describing .npz checkpoint atomically."""
    path = Path(path)
    meta = json.dumps(
        {
            "cell_kind": params.cell_kind,
            "embed_dim": params.embed_dim,
            "hidden_dim": params.hidden_dim,
        }
    )
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".npz.tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            np.savez(handle, meta=np.array(meta), **params.arrays())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path) -> TransducerParams:
    """Inverse of save_checkpoint; forward outputs are reproduced exactly."""
    try:
        with np.load(path) as data:
            meta = json.loads(str(data["meta"]))
            arrays = {name: data[name] for name in _PARAM_FIELDS}
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"unreadable checkpoint {path}: {exc}") from exc
    try:
        return TransducerParams(
            meta["cell_kind"], meta["embed_dim"], meta["hidden_dim"], **arrays
        )
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"inconsistent checkpoint {path}: {exc}") from exc
