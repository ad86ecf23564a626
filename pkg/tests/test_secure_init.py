import numpy as np
import pytest

from vfgnn.graph import MasterGraph, single_holder, vertical_partition
from vfgnn.ring import FixedPointCodec, encode
from vfgnn.secure_init import (InitEmbeddingConfig, SecureInit, individual_initial_embeddings,
                               init_weight_shares, reconstruct_weights, secure_initial_embeddings,
                               update_weight_shares)
from vfgnn.sharing import ShareTensor, SharingError, TrustedDealer, shr
from vfgnn.transport import Network, Phase, Transcript


def _graph(n_nodes, n_feats, props, rng, scale=1.0):
    x = rng.uniform(-scale, scale, size=(n_nodes, n_feats))
    mask = np.ones(n_nodes, bool)
    master = MasterGraph(x, np.zeros((0, 2), int), np.zeros(n_nodes, int), mask, ~mask, ~mask, 1)
    if len(props) == 1:
        return master, single_holder(master)
    return master, vertical_partition(master, props, seed=0)


def _share_w(w, holders, rng):
    if len(holders) == 1:
        return {holders[0]: ShareTensor(holders[0], encode(w))}
    return shr(encode(w), holders, rng)


@pytest.mark.parametrize("props", [[0.5, 0.5], [1 / 3, 1 / 3, 1 / 3]])
def test_matches_plaintext(rng, props):
    master, g = _graph(4, 6, props, rng)
    w = rng.uniform(-1, 1, size=(6, 2))
    out = secure_initial_embeddings(g, _share_w(w, g.holders, rng), TrustedDealer(rng), Network(Transcript()))
    ref = master.features @ w
    for h0 in out.values():
        assert np.max(np.abs(h0 - ref)) <= 1e-3
    first = next(iter(out.values()))
    assert all(np.array_equal(first, h) for h in out.values())


def test_zero_weights(rng):
    _, g = _graph(5, 4, [0.5, 0.5], rng)
    out = secure_initial_embeddings(g, _share_w(np.zeros((4, 3)), g.holders, rng), TrustedDealer(rng))
    assert all(not h.any() for h in out.values())


def test_single_holder(rng):
    master, g = _graph(5, 4, [1.0], rng)
    w = rng.uniform(-1, 1, size=(4, 3))
    out = secure_initial_embeddings(g, _share_w(w, g.holders, rng), TrustedDealer(rng))
    assert np.max(np.abs(out[g.holders[0]] - master.features @ w)) <= 1e-4


def test_share_message_count(rng):
    for n in (2, 3, 4):
        _, g = _graph(4, 8, [1 / n] * n, rng)
        net = Network(Transcript())
        SecureInit(g, TrustedDealer(rng), net).share_features()
        assert net.transcript.count(Phase.SHARE_DISTRIBUTION) == n * (n - 1)


def test_shape_mismatch(rng):
    _, g = _graph(4, 6, [0.5, 0.5], rng)
    with pytest.raises(SharingError):
        secure_initial_embeddings(g, _share_w(np.zeros((5, 2)), g.holders, rng), TrustedDealer(rng))


def test_feature_overflow(rng):
    _, g = _graph(4, 6, [0.5, 0.5], rng, scale=1e15)
    with pytest.raises(OverflowError):
        SecureInit(g, TrustedDealer(rng))


@pytest.mark.parametrize("props", [[1.0], [0.5, 0.5], [0.3, 0.3, 0.4]])
def test_backward_matches_plaintext(rng, props):
    master, g = _graph(6, 5, props, rng)
    session = SecureInit(g, TrustedDealer(rng), Network(Transcript()))
    session.forward(_share_w(rng.uniform(-1, 1, (5, 2)), g.holders, rng))
    d_h0 = rng.uniform(-1, 1, (6, 2))
    grad = reconstruct_weights(session.backward(d_h0))
    assert np.max(np.abs(grad - master.features.T @ d_h0)) <= 1e-3
    zero = reconstruct_weights(session.backward(np.zeros((6, 2))))
    assert np.max(np.abs(zero)) <= 1e-4


def test_backward_before_forward(rng):
    _, g = _graph(4, 4, [0.5, 0.5], rng)
    with pytest.raises(RuntimeError):
        SecureInit(g, TrustedDealer(rng)).backward(np.zeros((4, 2)))


def test_individual_embeddings(rng):
    x = np.eye(3)
    mask = np.ones(3, bool)
    g = vertical_partition(MasterGraph(np.hstack([x, x]), np.zeros((0, 2), int), [0, 0, 0], mask, ~mask, ~mask, 1),
                           [0.5, 0.5])
    ws = [rng.normal(size=(3, 2)), rng.normal(size=(3, 2))]
    out = individual_initial_embeddings(g, ws)
    assert np.allclose(out[0], ws[0]) and np.allclose(out[1], ws[1])
    with pytest.raises(ValueError):
        individual_initial_embeddings(g, [np.zeros((2, 2)), ws[1]])


def test_init_weight_distribution(rng):
    _, g = _graph(3, 40, [0.5, 0.5], rng)
    net = Network(Transcript())
    w = reconstruct_weights(init_weight_shares(g, 25, rng, network=net))
    assert w.shape == (40, 25)
    assert np.abs(w).max() <= 0.2 + 1e-4
    assert abs(w.std() - 0.2 / np.sqrt(3)) < 0.01
    assert net.transcript.count(Phase.SETUP) == 1


def test_update_weight_shares(rng):
    dealer = TrustedDealer(rng)
    holders = [0, 1, 2]
    w, g = rng.uniform(-1, 1, (4, 3)), rng.uniform(-1, 1, (4, 3))
    new = update_weight_shares(_share_w(w, holders, rng), _share_w(g, holders, rng), 0.1, 1e-3, dealer=dealer)
    ref = (1 - 0.1 * 1e-3) * w - 0.1 * g
    assert np.max(np.abs(reconstruct_weights(new) - ref)) <= 1e-3
    bad = {p: ShareTensor(p, np.zeros((2, 3), dtype=np.uint64)) for p in holders}
    with pytest.raises(SharingError):
        update_weight_shares(_share_w(w, holders, rng), bad, 0.1)


def test_config_validation():
    with pytest.raises(ValueError):
        InitEmbeddingConfig(embed_dim=0)
    with pytest.raises(ValueError):
        InitEmbeddingConfig(mode="joint")
    assert InitEmbeddingConfig().codec == FixedPointCodec()
