"""Holder-local GraphSAGE propagation with mean aggregation.

Row-vector convention throughout: node embeddings are rows, so a layer is
``tanh(concat(h_self, h_neigh) @ W)`` with ``W`` of shape ``(2*d_in, d_out)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .graph import NeighborIndex

NORM_EPS = 1e-12


class StaleCacheError(RuntimeError):
    pass


@dataclass
class LocalGnnParams:
    weights: list[np.ndarray]
    version: int = 0

    @property
    def depth(self) -> int:
        return len(self.weights)

    @classmethod
    def init(cls, depth: int, in_dim: int, out_dim: int, rng: np.random.Generator) -> "LocalGnnParams":
        ws, d = [], in_dim
        for _ in range(depth):
            bound = np.sqrt(6.0 / (2 * d + out_dim))
            ws.append(rng.uniform(-bound, bound, size=(2 * d, out_dim)))
            d = out_dim
        return cls(ws)

    def apply(self, grads: list[np.ndarray], lr: float, l2: float = 0.0) -> None:
        for w, g in zip(self.weights, grads):
            w -= lr * (g + l2 * w)
        self.version += 1


@dataclass
class LocalCache:
    version: int
    hs: list[np.ndarray]
    neigh: list[np.ndarray]
    norms: np.ndarray
    out: np.ndarray
    neighbors: NeighborIndex = field(repr=False)


def mean_aggregate(h: np.ndarray, neighbors: NeighborIndex) -> np.ndarray:
    """Row v is the mean of h over N(v); isolated nodes get the zero vector."""
    return np.asarray(neighbors.mean_operator @ h)


def normalize_rows(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(h, axis=1)
    safe = np.where(norms < NORM_EPS, 1.0, norms)
    out = np.where((norms < NORM_EPS)[:, None], 0.0, h / safe[:, None])
    return out, norms


def local_forward(h0: np.ndarray, params: LocalGnnParams,
                  neighbors: NeighborIndex) -> tuple[np.ndarray, LocalCache]:
    hs, neigh = [h0], []
    h = h0
    for w in params.weights:
        if w.shape[0] != 2 * h.shape[1]:
            raise ValueError(f"layer weight {w.shape} does not take concat of width {2 * h.shape[1]}")
        agg = mean_aggregate(h, neighbors)
        h = np.tanh(np.concatenate([h, agg], axis=1) @ w)
        neigh.append(agg)
        hs.append(h)
    out, norms = normalize_rows(h)
    return out, LocalCache(params.version, hs, neigh, norms, out, neighbors)


def local_backward(d_out: np.ndarray, cache: LocalCache,
                   params: LocalGnnParams) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients for every layer weight and for the initial embedding."""
    if cache.version != params.version:
        raise StaleCacheError("cache was produced with older parameters")
    y, norms = cache.out, cache.norms
    live = norms >= NORM_EPS
    safe = np.where(live, norms, 1.0)
    # d(h/|h|) = (I - y y^T) / |h|
    dh = (d_out - y * np.sum(y * d_out, axis=1, keepdims=True)) / safe[:, None]
    dh[~live] = 0.0
    grads = [None] * params.depth
    mt = cache.neighbors.mean_operator_t
    for k in range(params.depth - 1, -1, -1):
        h_prev, agg, h = cache.hs[k], cache.neigh[k], cache.hs[k + 1]
        dpre = dh * (1.0 - h * h)
        concat = np.concatenate([h_prev, agg], axis=1)
        grads[k] = concat.T @ dpre
        dconcat = dpre @ params.weights[k].T
        d = h_prev.shape[1]
        dh = dconcat[:, :d] + np.asarray(mt @ dconcat[:, d:])
    return grads, dh
