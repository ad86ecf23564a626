"""Initial node embeddings h0 = x @ W from vertically split features.

Collaborative mode keeps ``W`` additively shared among the holders for the
whole run.  Every forward pass re-shares each holder's feature block,
multiplies the concatenated shares with ``<W>`` (local diagonal terms,
Beaver cross terms), and opens the product at every holder.  Products stay
at doubled scale (2f fractional bits) until they are opened, so the opened
value carries no share-level truncation error.

Note that opening h0 at every holder reveals the linear map x @ W of the
other holders' features to each holder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import PartitionedGraph
from .ring import DTYPE, FixedPointCodec, decode, encode, ring_matmul
from .sharing import (Shared, ShareTensor, SharingError, TrustedDealer, matmul_shared, rec,
                      reveal, shr, truncate_shares)
from .transport import Network, Phase


@dataclass(frozen=True)
class InitEmbeddingConfig:
    embed_dim: int = 16
    mode: str = "collaborative"
    codec: FixedPointCodec = FixedPointCodec()

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if self.mode not in ("collaborative", "individual"):
            raise ValueError("mode must be 'collaborative' or 'individual'")


def init_weight_shares(graph: PartitionedGraph, embed_dim: int, rng: np.random.Generator,
                       codec: FixedPointCodec = FixedPointCodec(),
                       network: Network | None = None) -> Shared:
    """First holder samples W ~ U(-1/sqrt(d), 1/sqrt(d)) and shares it (Setup phase)."""
    bound = 1.0 / np.sqrt(embed_dim)
    w = rng.uniform(-bound, bound, size=(graph.feature_dim, embed_dim))
    enc = encode(w, codec)
    holders = graph.holders
    if len(holders) == 1:
        return {holders[0]: ShareTensor(holders[0], enc, codec)}
    shares = shr(enc, holders, rng, codec, keeper=holders[0])
    if network is not None:
        for j in holders[1:]:
            network.send(holders[0], j, Phase.SETUP, shares[j].data)
            shares[j] = ShareTensor(j, network.recv(j, Phase.SETUP, holders[0]).payload, codec)
    return shares


def reconstruct_weights(w_shares: Shared) -> np.ndarray:
    """Plaintext W (simulator inspection only)."""
    first = next(iter(w_shares.values()))
    return decode(rec(w_shares), first.codec, first.frac_bits)


class SecureInit:
    """One protocol session over a fixed graph; keeps ``<x>`` for the backward pass."""

    def __init__(self, graph: PartitionedGraph, dealer: TrustedDealer, network: Network | None = None,
                 rng: np.random.Generator | None = None, codec: FixedPointCodec | None = None):
        self.graph = graph
        self.dealer = dealer
        self.network = network
        self.codec = codec or dealer.codec
        self.rng = rng if rng is not None else dealer.rng
        self.x_shares: Shared | None = None
        self._enc = [encode(x, self.codec) for x in graph.features]

    def _check_w(self, w_shares: Shared) -> None:
        holders = self.graph.holders
        if set(w_shares) != set(holders):
            raise SharingError("W must be shared among exactly the holders")
        for s in w_shares.values():
            if s.shape[0] != self.graph.feature_dim:
                raise SharingError(f"W share has {s.shape[0]} rows, features have {self.graph.feature_dim}")

    def share_features(self) -> Shared:
        """Each holder shares its block; holder j concatenates its shares in holder order."""
        holders, codec, net = self.graph.holders, self.codec, self.network
        if len(holders) == 1:
            h = holders[0]
            self.x_shares = {h: ShareTensor(h, self._enc[0], codec)}
            return self.x_shares
        pieces = {j: [] for j in holders}
        for i, enc in zip(holders, self._enc):
            shares = shr(enc, holders, self.rng, codec, keeper=i)
            for j in holders:
                if j == i:
                    pieces[j].append(shares[j].data)
                    continue
                if net is not None:
                    net.send(i, j, Phase.SHARE_DISTRIBUTION, shares[j].data)
                    pieces[j].append(net.recv(j, Phase.SHARE_DISTRIBUTION, i).payload)
                else:
                    pieces[j].append(shares[j].data)
        self.x_shares = {j: ShareTensor(j, np.concatenate(pieces[j], axis=1), codec) for j in holders}
        return self.x_shares

    def forward(self, w_shares: Shared) -> np.ndarray:
        """Return h0 (N x d); every holder reconstructs the same matrix."""
        self._check_w(w_shares)
        codec = self.codec
        xs = self.share_features()
        w_scale = next(iter(w_shares.values())).frac_bits
        scale = codec.frac_bits + w_scale
        holders = self.graph.holders
        if len(holders) == 1:
            h = holders[0]
            prod = ring_matmul(xs[h].data, w_shares[h].data, codec.bit_width)
            return decode(prod, codec, scale)
        prod = matmul_shared(xs, w_shares, self.dealer, self.network, truncate=False)
        opened = reveal({p: s.data for p, s in prod.items()}, self.network, Phase.RECONSTRUCT, codec)
        return decode(opened, codec, scale)

    def backward(self, d_h0: np.ndarray) -> Shared:
        """Shares of dL/dW = x^T @ dL/dh0 with the gradient public among holders."""
        if self.x_shares is None:
            raise RuntimeError("backward called before forward")
        codec = self.codec
        g = encode(d_h0, codec)
        raw = {p: ShareTensor(p, ring_matmul(s.data.T.copy(), g, codec.bit_width), codec,
                              2 * codec.frac_bits)
               for p, s in self.x_shares.items()}
        return truncate_shares(raw, codec.frac_bits, self.network, self.dealer)


def secure_initial_embeddings(graph: PartitionedGraph, w_shares: Shared, dealer: TrustedDealer,
                              network: Network | None = None,
                              rng: np.random.Generator | None = None) -> dict:
    """Run one collaborative init round; returns ``{holder: h0}``."""
    session = SecureInit(graph, dealer, network, rng)
    h0 = session.forward(w_shares)
    return {h: h0.copy() for h in graph.holders}


def secure_init_backward(session: SecureInit, d_h0: np.ndarray) -> Shared:
    return session.backward(d_h0)


def individual_initial_embeddings(graph: PartitionedGraph, weights: list[np.ndarray]) -> list[np.ndarray]:
    """Plain local h0_i = x^i @ W^i per holder, no communication."""
    out = []
    for x, w in zip(graph.features, weights):
        if w.shape[0] != x.shape[1]:
            raise ValueError(f"W^i has {w.shape[0]} rows but the holder has {x.shape[1]} features")
        out.append(x @ w)
    return out


def update_weight_shares(w_shares: Shared, grad_shares: Shared, lr: float, l2: float = 0.0,
                         network: Network | None = None, dealer: TrustedDealer | None = None) -> Shared:
    """SGD with L2 on shares: <W> <- (1 - lr*l2) <W> - lr <g>, one truncation."""
    first = next(iter(w_shares.values()))
    codec = first.codec
    keep = encode(1.0 - lr * l2, codec)
    step = encode(lr, codec)
    mixed = {}
    for p, s in w_shares.items():
        g = grad_shares[p]
        if g.shape != s.shape or g.frac_bits != s.frac_bits:
            raise SharingError("gradient share does not match weight share")
        data = (s.data * keep - g.data * step) & codec.mask
        mixed[p] = s.replace(data.astype(DTYPE), s.frac_bits + codec.frac_bits)
    return truncate_shares(mixed, codec.frac_bits, network, dealer)
