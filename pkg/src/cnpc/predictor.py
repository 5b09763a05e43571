"""Multi-head attribute predictor: a shared ReLU hidden layer feeding one
softmax head per attribute, trained from scratch with momentum SGD.

Everything is plain numpy so gradients can be checked against finite
differences. Training is deterministic for a fixed seed; trained
parameters are treated as immutable, which makes forward/clamp/attack
safe to run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import InterventionSet, ModelError

PROB_FLOOR = 1e-12


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 4e-5
    hidden_dim: int = 128
    seed: int = 42
    select_best_validation: bool = True

    def __post_init__(self):
        for name in ("epochs", "batch_size", "hidden_dim"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be positive")
        for name in ("learning_rate", "momentum", "weight_decay"):
            if getattr(self, name) < 0:
                raise ModelError(f"{name} must be nonnegative")


@dataclass
class PredictorParams:
    """Shared layer plus per-attribute heads. `head_cards[k]` is the state
    count of attribute k."""

    w_shared: np.ndarray  # (input_dim, hidden)
    b_shared: np.ndarray  # (hidden,)
    w_heads: list[np.ndarray]  # each (hidden, card_k)
    b_heads: list[np.ndarray]  # each (card_k,)

    @property
    def input_dim(self) -> int:
        return self.w_shared.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w_shared.shape[1]

    @property
    def head_cards(self) -> list[int]:
        return [w.shape[1] for w in self.w_heads]

    def copy(self) -> "PredictorParams":
        return PredictorParams(
            self.w_shared.copy(),
            self.b_shared.copy(),
            [w.copy() for w in self.w_heads],
            [b.copy() for b in self.b_heads],
        )

    def check_finite(self) -> None:
        for arr in [self.w_shared, self.b_shared, *self.w_heads, *self.b_heads]:
            if not np.all(np.isfinite(arr)):
                raise ModelError("predictor parameters contain non-finite values")


def init_params(input_dim: int, hidden_dim: int, head_cards: list[int], seed: int) -> PredictorParams:
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, np.sqrt(2.0 / input_dim), size=(input_dim, hidden_dim))
    b = np.zeros(hidden_dim)
    w_heads = [
        rng.normal(0.0, np.sqrt(2.0 / hidden_dim), size=(hidden_dim, c)) for c in head_cards
    ]
    b_heads = [np.zeros(c) for c in head_cards]
    return PredictorParams(w, b, w_heads, b_heads)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(params: PredictorParams, x: np.ndarray) -> list[np.ndarray]:
    """Per-head probability matrices, shape (n, card_k) each."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != params.input_dim:
        raise ModelError(f"embedding dim {x.shape[1]} != expected {params.input_dim}")
    if not np.all(np.isfinite(x)):
        raise ModelError("non-finite embedding input")
    hidden = np.maximum(x @ params.w_shared + params.b_shared, 0.0)
    return [_softmax(hidden @ w + b) for w, b in zip(params.w_heads, params.b_heads)]


def forward(params: PredictorParams, x: np.ndarray) -> list[np.ndarray]:
    """Attribute distributions for a single embedding."""
    return [p[0] for p in forward_batch(params, np.asarray(x, dtype=float)[None, :])]


def loss(params: PredictorParams, x: np.ndarray, labels: np.ndarray) -> float:
    """Mean over instances and heads of cross-entropy divided by
    log(cardinality), so heads of different arity weigh equally."""
    probs = forward_batch(params, x)
    n = probs[0].shape[0]
    labels = np.asarray(labels)
    total = 0.0
    for k, p in enumerate(probs):
        picked = np.maximum(p[np.arange(n), labels[:, k]], PROB_FLOOR)
        total += float(np.sum(-np.log(picked)) / np.log(p.shape[1]))
    return total / (n * len(probs))


def grad(params: PredictorParams, x: np.ndarray, labels: np.ndarray):
    """Exact loss gradients. Returns a PredictorParams-shaped gradient and
    the gradient with respect to the inputs (used by the embedding attack).
    ReLU's subgradient at 0 is taken as 0."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    labels = np.asarray(labels).reshape(x.shape[0], -1)
    n = x.shape[0]
    k_heads = len(params.w_heads)

    pre = x @ params.w_shared + params.b_shared
    hidden = np.maximum(pre, 0.0)

    g_w_heads, g_b_heads = [], []
    d_hidden = np.zeros_like(hidden)
    for k, (w, b) in enumerate(zip(params.w_heads, params.b_heads)):
        p = _softmax(hidden @ w + b)
        card = p.shape[1]
        d_logits = p.copy()
        d_logits[np.arange(n), labels[:, k]] -= 1.0
        d_logits /= n * k_heads * np.log(card)
        g_w_heads.append(hidden.T @ d_logits)
        g_b_heads.append(d_logits.sum(axis=0))
        d_hidden += d_logits @ w.T
    d_pre = d_hidden * (pre > 0.0)
    g_shared = x.T @ d_pre
    g_b_shared = d_pre.sum(axis=0)
    g_x = d_pre @ params.w_shared.T
    return PredictorParams(g_shared, g_b_shared, g_w_heads, g_b_heads), g_x


class MomentumSgd:
    """Momentum SGD with decoupled-from-biases weight decay: the decay term
    is added to weight gradients before the momentum update."""

    def __init__(self, learning_rate: float, momentum: float, weight_decay: float):
        self.lr = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self._velocity: list[np.ndarray] | None = None

    def step(self, tensors: list[np.ndarray], grads: list[np.ndarray], decay_mask: list[bool]):
        if self._velocity is None:
            self._velocity = [np.zeros_like(t) for t in tensors]
        for t, g, v, decay in zip(tensors, grads, self._velocity, decay_mask):
            eff = g + self.weight_decay * t if decay else g
            v *= self.momentum
            v += eff
            t -= self.lr * v


def mean_attribute_accuracy(params: PredictorParams, x: np.ndarray, labels: np.ndarray) -> float:
    probs = forward_batch(params, x)
    labels = np.asarray(labels)
    accs = [float(np.mean(p.argmax(axis=1) == labels[:, k])) for k, p in enumerate(probs)]
    return float(np.mean(accs))


def train(
    config: TrainConfig,
    train_x: np.ndarray,
    train_labels: np.ndarray,
    val_x: np.ndarray,
    val_labels: np.ndarray,
    head_cards: list[int],
) -> PredictorParams:
    """Train with per-epoch reshuffling from the config seed and keep the
    parameters with the best validation mean attribute accuracy (or the
    final epoch's when best-checkpoint selection is off)."""
    train_x = np.asarray(train_x, dtype=float)
    val_x = np.asarray(val_x, dtype=float)
    if len(train_x) == 0 or len(val_x) == 0:
        raise ModelError("training and validation splits must be non-empty")

    params = init_params(train_x.shape[1], config.hidden_dim, head_cards, config.seed)
    opt = MomentumSgd(config.learning_rate, config.momentum, config.weight_decay)
    rng = np.random.default_rng(config.seed)

    def flatten(p: PredictorParams):
        tensors = [p.w_shared, p.b_shared, *p.w_heads, *p.b_heads]
        decay = [True, False] + [True] * len(p.w_heads) + [False] * len(p.b_heads)
        return tensors, decay

    best = params.copy()
    best_acc = mean_attribute_accuracy(params, val_x, val_labels)
    n = len(train_x)
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            g, _ = grad(params, train_x[idx], train_labels[idx])
            tensors, decay = flatten(params)
            grads = [g.w_shared, g.b_shared, *g.w_heads, *g.b_heads]
            opt.step(tensors, grads, decay)
        acc = mean_attribute_accuracy(params, val_x, val_labels)
        if acc > best_acc:
            best_acc = acc
            best = params.copy()
    result = best if config.select_best_validation else params
    result.check_finite()
    return result


def clamp(dists: list[np.ndarray], do: InterventionSet, attr_names: list[str]) -> list[np.ndarray]:
    """Replace intervened heads with a point mass on the forced state;
    unintervened heads pass through unchanged (same array objects)."""
    forced = do.as_dict()
    out = []
    for name, d in zip(attr_names, dists):
        if name in forced:
            one_hot = np.zeros_like(d)
            one_hot[..., forced[name]] = 1.0
            out.append(one_hot)
        else:
            out.append(d)
    return out


def save_predictor(
    params: PredictorParams,
    path,
    config: TrainConfig,
    dataset_digest: str,
    attr_names: list[str],
) -> None:
    """Write the predictor file: dims, row-major weights, the training
    config echo, and the digest of the dataset it was trained on."""
    from pathlib import Path

    from .jsonio import dumps_canonical

    doc = {
        "input_dim": params.input_dim,
        "hidden_dim": params.hidden_dim,
        "heads": [
            {"name": n, "card": c} for n, c in zip(attr_names, params.head_cards)
        ],
        "w_shared": [[float(x) for x in row] for row in params.w_shared],
        "b_shared": [float(x) for x in params.b_shared],
        "w_heads": [[[float(x) for x in row] for row in w] for w in params.w_heads],
        "b_heads": [[float(x) for x in b] for b in params.b_heads],
        "train_config": {
            "epochs": config.epochs,
            "batch_size": config.batch_size,
            "learning_rate": config.learning_rate,
            "momentum": config.momentum,
            "weight_decay": config.weight_decay,
            "hidden_dim": config.hidden_dim,
            "seed": config.seed,
            "select_best_validation": config.select_best_validation,
        },
        "dataset_digest": dataset_digest,
    }
    Path(path).write_text(dumps_canonical(doc), encoding="utf-8")


def load_predictor(path) -> tuple[PredictorParams, dict]:
    """Read a predictor file; returns the parameters and the raw document
    (config echo, head names, dataset digest)."""
    import json
    from pathlib import Path

    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    params = PredictorParams(
        np.asarray(doc["w_shared"], dtype=float),
        np.asarray(doc["b_shared"], dtype=float),
        [np.asarray(w, dtype=float) for w in doc["w_heads"]],
        [np.asarray(b, dtype=float) for b in doc["b_heads"]],
    )
    params.check_finite()
    return params, doc


def pgd_embedding(
    params: PredictorParams,
    x: np.ndarray,
    labels: np.ndarray,
    epsilon: float,
    step: float,
    iters: int,
) -> np.ndarray:
    """Sign-gradient ascent on the training loss, projected onto the
    L-infinity ball of radius `epsilon` around the clean embeddings."""
    x0 = np.asarray(x, dtype=float)
    squeeze = x0.ndim == 1
    if squeeze:
        x0 = x0[None, :]
    labels = np.asarray(labels).reshape(x0.shape[0], -1)
    adv = x0.copy()
    for _ in range(iters):
        _, g_x = grad(params, adv, labels)
        adv = adv + step * np.sign(g_x)
        adv = np.clip(adv, x0 - epsilon, x0 + epsilon)
    return adv[0] if squeeze else adv
