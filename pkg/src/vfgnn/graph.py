"""Graph data: master graphs, vertical partitions, neighbor indices, loaders."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

MASK_CODES = {"t": "train", "v": "val", "s": "test"}


class GraphFormatError(ValueError):
    pass


def canonical_edges(edges, n: int | None = None) -> np.ndarray:
    """Undirected edge list as sorted unique (min, max) rows."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if n is not None and e.size and (e.min() < 0 or e.max() >= n):
        bad = e[(e < 0).any(1) | (e >= n).any(1)][0]
        raise GraphFormatError(f"edge {tuple(bad)} references a node outside [0, {n})")
    e = np.sort(e, axis=1)
    if len(e) == 0:
        return e
    return np.unique(e, axis=0)


@dataclass
class MasterGraph:
    features: np.ndarray
    edges: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    num_classes: int = 0

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        n = self.features.shape[0]
        self.edges = canonical_edges(self.edges, n)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.num_classes == 0:
            self.num_classes = int(self.labels.max()) + 1 if len(self.labels) else 0
        if len(self.labels) != n:
            raise GraphFormatError(f"{len(self.labels)} labels for {n} nodes")

    @property
    def node_count(self) -> int:
        return self.features.shape[0]


class NeighborIndex:
    """One holder's adjacency, N^i(v), plus the row-normalized mean operator."""

    def __init__(self, node_count: int, edges: np.ndarray):
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        # a self-loop (v, v) appears once, not twice
        keep = np.ones(len(rows), dtype=bool)
        keep[len(e):] = e[:, 0] != e[:, 1]
        adj = sp.csr_matrix((np.ones(keep.sum()), (rows[keep], cols[keep])),
                            shape=(node_count, node_count))
        adj.sum_duplicates()
        adj.data[:] = 1.0
        self.adjacency = adj
        deg = np.asarray(adj.sum(axis=1)).ravel()
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        self.degree = deg.astype(np.int64)
        self.mean_operator = sp.diags(inv) @ adj
        self.mean_operator_t = self.mean_operator.T.tocsr()

    def __call__(self, v: int) -> np.ndarray:
        a = self.adjacency
        return a.indices[a.indptr[v]:a.indptr[v + 1]].copy()


@dataclass
class PartitionedGraph:
    """Vertically split view of one node set across ordered holders."""

    node_count: int
    holders: list
    feature_blocks: list[tuple[int, int]]
    features: list[np.ndarray]
    edge_sets: list[np.ndarray]
    label_holder: int
    labels: np.ndarray
    num_classes: int
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray
    _neighbors: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        n = self.node_count
        stops = 0
        for (a, b), x in zip(self.feature_blocks, self.features):
            if a != stops or b < a:
                raise GraphFormatError("feature blocks must be contiguous and ordered")
            if x.shape != (n, b - a):
                raise GraphFormatError(f"holder features {x.shape} do not match block {(a, b)}")
            stops = b
        for e in self.edge_sets:
            if len(e) and (e.min() < 0 or e.max() >= n or np.any(e[:, 0] > e[:, 1])):
                raise GraphFormatError("edges must be canonical (min, max) pairs of valid ids")
        if self.label_holder not in self.holders:
            raise GraphFormatError("label holder must be one of the holders")
        labeled = self.train_mask | self.val_mask | self.test_mask
        if labeled.any():
            lab = self.labels[labeled]
            if lab.min() < 0 or lab.max() >= self.num_classes:
                raise GraphFormatError("masked node has a label outside [0, num_classes)")

    @property
    def num_holders(self) -> int:
        return len(self.holders)

    @property
    def feature_dim(self) -> int:
        return self.feature_blocks[-1][1] if self.feature_blocks else 0

    def index_of(self, holder) -> int:
        return self.holders.index(holder)

    def neighbors(self, holder) -> NeighborIndex:
        if holder not in self._neighbors:
            self._neighbors[holder] = NeighborIndex(self.node_count, self.edge_sets[self.index_of(holder)])
        return self._neighbors[holder]

    def merge(self) -> MasterGraph:
        """Reassemble the master graph (simulator-only privilege)."""
        edges = [e for e in self.edge_sets if len(e)]
        return MasterGraph(np.hstack(self.features),
                           np.vstack(edges) if edges else np.zeros((0, 2), np.int64),
                           self.labels.copy(), self.train_mask.copy(), self.val_mask.copy(),
                           self.test_mask.copy(), self.num_classes)

    def holder_view(self, holder) -> "PartitionedGraph":
        """Single-holder graph with only ``holder``'s features and edges (plus labels)."""
        i = self.index_of(holder)
        return PartitionedGraph(self.node_count, [0], [(0, self.features[i].shape[1])],
                                [self.features[i]], [self.edge_sets[i]], 0, self.labels,
                                self.num_classes, self.train_mask, self.val_mask, self.test_mask)


def single_holder(master: MasterGraph) -> PartitionedGraph:
    return PartitionedGraph(master.node_count, [0], [(0, master.features.shape[1])],
                            [master.features], [master.edges], 0, master.labels,
                            master.num_classes, master.train_mask, master.val_mask, master.test_mask)


def _apportion(total: int, proportions, minimum: int = 0) -> list[int]:
    """Largest-remainder split of ``total`` items by ``proportions``."""
    p = np.asarray(proportions, dtype=np.float64)
    raw = p * total
    counts = np.floor(raw).astype(int)
    rest = total - counts.sum()
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[:rest]] += 1
    if minimum and total >= minimum * len(p):
        for i in np.where(counts < minimum)[0]:
            j = int(np.argmax(counts))
            counts[j] -= minimum - counts[i]
            counts[i] = minimum
    return counts.tolist()


def _check_proportions(props, name: str) -> np.ndarray:
    p = np.asarray(props, dtype=np.float64)
    if p.ndim != 1 or len(p) == 0 or np.any(p <= 0):
        raise ValueError(f"{name} proportions must be positive")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} proportions sum to {p.sum()!r}, not 1")
    return p


def vertical_partition(master: MasterGraph, feature_proportions, edge_proportions=None,
                       seed: int = 0, label_holder: int = 0,
                       rng: np.random.Generator | None = None) -> PartitionedGraph:
    """Split columns contiguously and edges randomly (each edge to one holder).

    ``edge_proportions`` defaults to the feature proportions.
    """
    fp = _check_proportions(feature_proportions, "feature")
    ep = fp if edge_proportions is None else _check_proportions(edge_proportions, "edge")
    if len(ep) != len(fp):
        raise ValueError("feature and edge proportions need one entry per holder")
    rng = np.random.default_rng(seed) if rng is None else rng
    holders = list(range(len(fp)))
    f_counts = _apportion(master.features.shape[1], fp, minimum=1)
    blocks, start = [], 0
    for c in f_counts:
        blocks.append((start, start + c))
        start += c
    feats = [master.features[:, a:b].copy() for a, b in blocks]
    perm = rng.permutation(len(master.edges))
    e_counts = _apportion(len(master.edges), ep)
    edge_sets, start = [], 0
    for c in e_counts:
        chosen = np.sort(perm[start:start + c])
        edge_sets.append(master.edges[chosen])
        start += c
    return PartitionedGraph(master.node_count, holders, blocks, feats, edge_sets, label_holder,
                            master.labels.copy(), master.num_classes, master.train_mask.copy(),
                            master.val_mask.copy(), master.test_mask.copy())


def split_masks(n: int, rng: np.random.Generator, fractions=(0.6, 0.2, 0.2)):
    perm = rng.permutation(n)
    n_train, n_val, _ = _apportion(n, fractions)
    masks = [np.zeros(n, dtype=bool) for _ in range(3)]
    masks[0][perm[:n_train]] = True
    masks[1][perm[n_train:n_train + n_val]] = True
    masks[2][perm[n_train + n_val:]] = True
    return masks


def generate_sbm(blocks: int, per_block: int, p_in: float, p_out: float, feature_dim: int,
                 class_signal: float, seed: int = 0,
                 rng: np.random.Generator | None = None) -> MasterGraph:
    """Stochastic block model with one class per block.

    Features are ``class_signal * mu_c + N(0, I)``, where the class means
    ``mu_c`` have i.i.d. standard normal entries.  Masks are a random
    60/20/20 train/val/test split.
    """
    if not (0 <= p_out < p_in <= 1):
        raise ValueError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}")
    if blocks < 1 or per_block < 1 or feature_dim < 1:
        raise ValueError("blocks, per_block and feature_dim must be positive")
    rng = np.random.default_rng(seed) if rng is None else rng
    n = blocks * per_block
    labels = np.repeat(np.arange(blocks), per_block)
    probs = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    draws = rng.random((n, n)) < probs
    iu = np.triu_indices(n, k=1)
    keep = draws[iu]
    edges = np.stack([iu[0][keep], iu[1][keep]], axis=1)
    means = rng.standard_normal((blocks, feature_dim))
    feats = class_signal * means[labels] + rng.standard_normal((n, feature_dim))
    train, val, test = split_masks(n, rng)
    return MasterGraph(feats, edges, labels, train, val, test, blocks)


def _read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def load_graph(feature_file, edge_file, label_file, mask_file) -> MasterGraph:
    """Read the four plain-text files; row order defines node ids.

    Raises:
        GraphFormatError: with ``file:line`` for any parse problem or a
            dangling edge endpoint.
    """
    rows = []
    width = None
    for lineno, line in enumerate(_read_lines(feature_file), 1):
        if not line.strip():
            continue
        try:
            vals = [float(v) for v in line.rstrip("\n").split("\t")]
        except ValueError as exc:
            raise GraphFormatError(f"{feature_file}:{lineno}: {exc}") from None
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise GraphFormatError(f"{feature_file}:{lineno}: expected {width} columns, got {len(vals)}")
        rows.append(vals)
    n = len(rows)
    features = np.array(rows, dtype=np.float64).reshape(n, width or 0)

    edges = []
    for lineno, line in enumerate(_read_lines(edge_file), 1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 2:
            raise GraphFormatError(f"{edge_file}:{lineno}: expected two node ids")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise GraphFormatError(f"{edge_file}:{lineno}: {exc}") from None
        for node in (u, v):
            if not 0 <= node < n:
                raise GraphFormatError(f"{edge_file}:{lineno}: dangling endpoint {node} (graph has {n} nodes)")
        edges.append((u, v))

    labels = []
    for lineno, line in enumerate(_read_lines(label_file), 1):
        if not line.strip():
            continue
        try:
            labels.append(int(line))
        except ValueError as exc:
            raise GraphFormatError(f"{label_file}:{lineno}: {exc}") from None
    if len(labels) != n:
        raise GraphFormatError(f"{label_file}: {len(labels)} labels for {n} nodes")

    codes = []
    for lineno, line in enumerate(_read_lines(mask_file), 1):
        c = line.strip()
        if not c:
            continue
        if c not in MASK_CODES:
            raise GraphFormatError(f"{mask_file}:{lineno}: mask code {c!r} not in t/v/s")
        codes.append(c)
    if len(codes) != n:
        raise GraphFormatError(f"{mask_file}: {len(codes)} mask entries for {n} nodes")
    codes = np.array(codes)
    return MasterGraph(features, np.array(edges, dtype=np.int64).reshape(-1, 2), np.array(labels),
                       codes == "t", codes == "v", codes == "s")


def save_graph(master: MasterGraph, directory) -> dict[str, Path]:
    """Write the four files in the format :func:`load_graph` reads."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {k: d / f"{k}.txt" for k in ("features", "edges", "labels", "masks")}
    paths["features"].write_text(
        "".join("\t".join(repr(float(v)) for v in row) + "\n" for row in master.features))
    paths["edges"].write_text("".join(f"{u} {v}\n" for u, v in master.edges))
    paths["labels"].write_text("".join(f"{int(y)}\n" for y in master.labels))
    code = np.where(master.train_mask, "t", np.where(master.val_mask, "v", "s"))
    paths["masks"].write_text("".join(f"{c}\n" for c in code))
    return paths
