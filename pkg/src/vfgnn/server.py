"""Server computations (combine + sigmoid MLP) and the label holder's output head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gnn import StaleCacheError

COMBINE_KINDS = ("concat", "mean", "regression")


@dataclass
class CombineStrategy:
    kind: str = "mean"
    omega: list[np.ndarray] | None = None

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in COMBINE_KINDS:
            raise ValueError(f"combine kind must be one of {COMBINE_KINDS}")

    @classmethod
    def regression(cls, n_holders: int, dim: int) -> "CombineStrategy":
        """Regression weights start at 1/I so the first step equals Mean."""
        return cls("regression", [np.full(dim, 1.0 / n_holders) for _ in range(n_holders)])

    def output_dim(self, dims: list[int]) -> int:
        return sum(dims) if self.kind == "concat" else dims[0]


def combine(locals_: list[np.ndarray], strategy: CombineStrategy) -> np.ndarray:
    n = locals_[0].shape[0]
    if any(h.shape[0] != n for h in locals_):
        raise ValueError("local embeddings disagree on node count")
    if strategy.kind == "concat":
        return np.concatenate(locals_, axis=1)
    d = locals_[0].shape[1]
    if any(h.shape[1] != d for h in locals_):
        raise ValueError(f"{strategy.kind} combine needs equal embedding widths")
    if strategy.kind == "mean":
        return np.mean(locals_, axis=0)
    if strategy.omega is None or len(strategy.omega) != len(locals_):
        raise ValueError("regression combine needs one weight vector per holder")
    if any(np.shape(w) != (d,) for w in strategy.omega):
        raise ValueError("regression weight vectors must match the embedding width")
    return sum(w * h for w, h in zip(strategy.omega, locals_))


def combine_backward(d_global: np.ndarray, locals_: list[np.ndarray],
                     strategy: CombineStrategy) -> tuple[list[np.ndarray], list[np.ndarray] | None]:
    """Per-holder gradients and, for Regression, gradients of each omega_i."""
    if strategy.kind == "concat":
        cuts = np.cumsum([h.shape[1] for h in locals_])[:-1]
        return np.split(d_global, cuts, axis=1), None
    if strategy.kind == "mean":
        k = len(locals_)
        return [d_global / k for _ in locals_], None
    d_locals = [w * d_global for w in strategy.omega]
    d_omega = [np.sum(h * d_global, axis=0) for h in locals_]
    return d_locals, d_omega


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class ServerMlp:
    """Hidden layers ``a_{l+1} = sigmoid(a_l @ W_l)``; the last output is z_L.

    Dropout (inverted, rate ``dropout``) acts on hidden outputs that feed a
    further server layer, never on the global embedding or on z_L.
    """

    weights: list[np.ndarray]
    dropout: float = 0.5
    version: int = 0

    @classmethod
    def init(cls, in_dim: int, hidden: tuple[int, ...], rng: np.random.Generator,
             dropout: float = 0.5) -> "ServerMlp":
        ws, d = [], in_dim
        for h in hidden:
            bound = np.sqrt(6.0 / (d + h))
            ws.append(rng.uniform(-bound, bound, size=(d, h)))
            d = h
        return cls(ws, dropout)

    def apply(self, grads: list[np.ndarray], lr: float, l2: float = 0.0) -> None:
        for w, g in zip(self.weights, grads):
            w -= lr * (g + l2 * w)
        self.version += 1


@dataclass
class MlpCache:
    version: int
    inputs: list[np.ndarray]
    outputs: list[np.ndarray]
    masks: list[np.ndarray | None] = field(default_factory=list)


def server_forward(x: np.ndarray, mlp: ServerMlp, training: bool = False,
                   rng: np.random.Generator | None = None) -> tuple[np.ndarray, MlpCache]:
    inputs, outputs, masks = [], [], []
    a = x
    last = len(mlp.weights) - 1
    for l, w in enumerate(mlp.weights):
        if a.shape[1] != w.shape[0]:
            raise ValueError(f"layer {l} expects width {w.shape[0]}, got {a.shape[1]}")
        inputs.append(a)
        out = sigmoid(a @ w)
        outputs.append(out)
        mask = None
        if training and l < last and mlp.dropout > 0:
            if rng is None:
                raise ValueError("training-mode dropout needs a random generator")
            keep = 1.0 - mlp.dropout
            mask = (rng.random(out.shape) < keep) / keep
            out = out * mask
        masks.append(mask)
        a = out
    return a, MlpCache(mlp.version, inputs, outputs, masks)


def server_backward(d_z: np.ndarray, cache: MlpCache, mlp: ServerMlp) -> tuple[list[np.ndarray], np.ndarray]:
    if cache.version != mlp.version:
        raise StaleCacheError("cache was produced with older server weights")
    grads = [None] * len(mlp.weights)
    d = d_z
    for l in range(len(mlp.weights) - 1, -1, -1):
        if cache.masks[l] is not None:
            d = d * cache.masks[l]
        s = cache.outputs[l]
        dpre = d * s * (1.0 - s)
        grads[l] = cache.inputs[l].T @ dpre
        d = dpre @ mlp.weights[l].T
    return grads, d


@dataclass
class OutputHead:
    weight: np.ndarray
    version: int = 0

    @classmethod
    def init(cls, in_dim: int, num_classes: int, rng: np.random.Generator) -> "OutputHead":
        bound = np.sqrt(6.0 / (in_dim + num_classes))
        return cls(rng.uniform(-bound, bound, size=(in_dim, num_classes)))

    def apply(self, grad: np.ndarray, lr: float, l2: float = 0.0) -> None:
        self.weight -= lr * (grad + l2 * self.weight)
        self.version += 1


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def output_forward(z: np.ndarray, head: OutputHead) -> tuple[np.ndarray, np.ndarray]:
    """Return (probabilities, logits)."""
    logits = z @ head.weight
    return softmax(logits), logits


def cross_entropy(probs: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean NLL over masked nodes and its gradient w.r.t. the pre-softmax logits."""
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        raise ValueError("cross entropy over an empty mask")
    y = labels[idx]
    p = probs[idx, y]
    loss = float(-np.mean(np.log(np.maximum(p, 1e-300))))
    grad = np.zeros_like(probs)
    grad[idx] = probs[idx]
    grad[idx, y] -= 1.0
    grad /= len(idx)
    return loss, grad


def output_backward(d_logits: np.ndarray, z: np.ndarray, head: OutputHead) -> tuple[np.ndarray, np.ndarray]:
    return z.T @ d_logits, d_logits @ head.weight.T
