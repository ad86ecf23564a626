import numpy as np
import pytest
from scipy import stats

from vfgnn.ring import FixedPointCodec, decode, encode, ring_mul
from vfgnn.sharing import (ShareTensor, SharingError, TripleExhaustedError, TripleReuseError,
                           TrustedDealer, add_local, add_shared, matmul_shared, mul_beaver, rec,
                           reveal, scale_shares, shr, triple_gen, truncate_shares)
from vfgnn.transport import Network, Phase, Transcript

C8 = FixedPointCodec(frac_bits=2, bit_width=8)
CODEC = FixedPointCodec()


def test_shr_sum_constraint(rng):
    shares = shr(np.uint64(5), [0, 1, 2], rng, C8)
    assert sum(int(s.data) for s in shares.values()) % 256 == 5
    assert int(rec(shares)) == 5


def test_rec_fixed_shares():
    shares = {p: ShareTensor(p, np.uint64(v), C8) for p, v in zip("abc", (200, 17, 44))}
    assert int(rec(shares)) == 5
    zeros = {p: ShareTensor(p, np.zeros((2, 3), dtype=np.uint64)) for p in (0, 1)}
    assert not rec(zeros).any()


def test_shr_of_zero_and_roundtrip(rng):
    z = shr(np.zeros(4, dtype=np.uint64), [0, 1], rng)
    assert not rec(z).any()
    for n in (2, 3, 5):
        secret = rng.integers(0, 2**64 - 1, size=(3, 4), dtype=np.uint64, endpoint=True)
        assert np.array_equal(rec(shr(secret, range(n), rng)), secret)


def test_shr_errors(rng):
    with pytest.raises(SharingError):
        shr(np.uint64(1), [0], rng)
    with pytest.raises(SharingError):
        shr(np.uint64(1), [0, 0], rng)


def test_rec_errors(rng):
    s = shr(np.zeros(3, dtype=np.uint64), [0, 1], rng)
    s[1] = ShareTensor(1, np.zeros(4, dtype=np.uint64))
    with pytest.raises(SharingError):
        rec(s)
    with pytest.raises(SharingError):
        rec({0: s[0]}, parties=[0, 1])


def test_add_local(rng):
    a, b = shr(np.uint64(3), [0, 1, 2], rng, C8), shr(np.uint64(4), [0, 1, 2], rng, C8)
    assert int(rec(add_shared(a, b))) == 7
    assert int(rec(add_shared(b, a))) == 7
    zero = shr(np.uint64(0), [0, 1, 2], rng, C8)
    assert int(rec(add_shared(a, zero))) == 3
    with pytest.raises(SharingError):
        add_local(a[0], b[1])


def test_beaver_small_ring(rng):
    parties = [0, 1]
    a, b = shr(np.array([3]), parties, rng, C8), shr(np.array([4]), parties, rng, C8)
    c = mul_beaver(a, b, triple_gen((1,), parties, rng, C8))
    assert int(rec(c)[0]) == 12
    zero = shr(np.array([0]), parties, rng, C8)
    assert int(rec(mul_beaver(a, zero, triple_gen((1,), parties, rng, C8)))[0]) == 0


@pytest.mark.parametrize("n", [2, 3, 4])
def test_beaver_exact_against_ring_product(rng, n):
    parties = list(range(n))
    x = rng.integers(0, 2**64 - 1, size=500, dtype=np.uint64, endpoint=True)
    y = rng.integers(0, 2**64 - 1, size=500, dtype=np.uint64, endpoint=True)
    c = mul_beaver(shr(x, parties, rng), shr(y, parties, rng), triple_gen((500,), parties, rng))
    assert np.array_equal(rec(c), ring_mul(x, y))


def test_beaver_fixed_point(rng):
    parties = [0, 1, 2]
    dealer = TrustedDealer(rng)
    a = shr(encode(np.array([1.5])), parties, rng)
    b = shr(encode(np.array([2.0])), parties, rng)
    c = truncate_shares(mul_beaver(a, b, dealer.triple((1,), parties)), dealer=dealer)
    assert abs(decode(rec(c))[0] - 3.0) < 1e-3


@pytest.mark.parametrize("n", [2, 3, 4])
def test_beaver_reals_within_tolerance(rng, n):
    parties = list(range(n))
    dealer = TrustedDealer(rng)
    x, y = rng.uniform(-10, 10, 1000), rng.uniform(-10, 10, 1000)
    c = mul_beaver(shr(encode(x), parties, rng), shr(encode(y), parties, rng), dealer.triple((1000,), parties))
    got = decode(rec(truncate_shares(c, dealer=dealer)))
    assert np.max(np.abs(got - x * y)) <= 1e-3


def test_triple_reuse_and_exhaustion(rng):
    parties = [0, 1]
    t = triple_gen((2,), parties, rng)
    a = shr(np.ones(2, dtype=np.uint64), parties, rng)
    mul_beaver(a, a, t)
    with pytest.raises(TripleReuseError):
        mul_beaver(a, a, t)
    dealer = TrustedDealer(rng, budget=1)
    dealer.triple((2,), parties)
    with pytest.raises(TripleExhaustedError):
        dealer.triple((2,), parties)


def test_triple_shape_mismatch(rng):
    parties = [0, 1]
    a = shr(np.ones(3, dtype=np.uint64), parties, rng)
    with pytest.raises(SharingError):
        mul_beaver(a, a, triple_gen((2,), parties, rng))


def test_triple_gen_properties(rng):
    t = triple_gen((50,), [0, 1, 2], rng)
    assert np.array_equal(rec(t.z), ring_mul(rec(t.u), rec(t.w)))
    t0 = triple_gen((1,), [0, 1], rng, zero_u=True)
    assert int(rec(t0.z)[0]) == 0
    tm = triple_gen((2, 2), [0, 1], rng, kind="matmul", shape_w=(2, 2))
    ref = (rec(tm.u).astype(object) @ rec(tm.w).astype(object)) % 2**64
    assert np.array_equal(rec(tm.z).astype(object), ref)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_beaver_message_count(rng, n):
    parties = list(range(n))
    net = Network(Transcript())
    a = shr(np.ones(4, dtype=np.uint64), parties, rng)
    mul_beaver(a, a, triple_gen((4,), parties, rng), net)
    assert net.transcript.count(Phase.BEAVER_REVEAL) == 2 * n * (n - 1)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_matmul_shared_random(rng, n):
    parties = list(range(n))
    dealer = TrustedDealer(rng)
    x, w = rng.uniform(-1, 1, (3, 4)), rng.uniform(-1, 1, (4, 2))
    out = matmul_shared(shr(encode(x), parties, rng), shr(encode(w), parties, rng), dealer)
    assert np.max(np.abs(decode(rec(out)) - x @ w)) <= 1e-3


def test_matmul_shared_identity_and_zero(rng):
    parties = [0, 1, 2]
    dealer = TrustedDealer(rng)
    w = rng.uniform(-1, 1, (4, 3))
    ws = shr(encode(w), parties, rng)
    got = decode(rec(matmul_shared(shr(encode(np.eye(4)), parties, rng), ws, dealer)))
    assert np.max(np.abs(got - w)) <= 1e-3
    zero = decode(rec(matmul_shared(shr(encode(np.zeros((2, 4))), parties, rng), ws, dealer)))
    assert np.max(np.abs(zero)) <= 1e-4


def test_matmul_shared_errors(rng):
    parties = [0, 1]
    dealer = TrustedDealer(rng, budget=1)
    x = shr(encode(np.zeros((2, 3))), parties, rng)
    with pytest.raises(SharingError):
        matmul_shared(x, shr(encode(np.zeros((4, 2))), parties, rng), dealer)
    with pytest.raises(TripleExhaustedError):
        matmul_shared(x, shr(encode(np.zeros((3, 2))), parties, rng), dealer)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_truncate_shares(rng, n):
    parties = list(range(n))
    dealer = TrustedDealer(rng)
    x = rng.uniform(-50, 50, 200)
    raw = encode(x, CODEC, 32)
    shares = {0: ShareTensor(0, raw, CODEC, 32)} if n == 1 else shr(raw, parties, rng, frac_bits=32)
    out = truncate_shares(shares, 16, dealer=dealer)
    assert next(iter(out.values())).frac_bits == 16
    assert np.max(np.abs(decode(rec(out)) - x)) <= 2 * 2.0**-16


def test_truncation_needs_dealer_for_many_parties(rng):
    shares = shr(encode(np.ones(2), CODEC, 32), [0, 1, 2], rng, frac_bits=32)
    with pytest.raises(SharingError):
        truncate_shares(shares, 16)


def test_scale_shares(rng):
    dealer = TrustedDealer(rng)
    s = shr(encode(np.array([2.0, -4.0])), [0, 1, 2], rng)
    got = decode(rec(scale_shares(s, 0.25, dealer=dealer)))
    assert np.allclose(got, [0.5, -1.0], atol=1e-4)


def test_reveal_single_receiver(rng):
    net = Network(Transcript())
    s = shr(np.arange(3, dtype=np.uint64), [0, 1, 2], rng)
    out = reveal({p: t.data for p, t in s.items()}, net, Phase.RECONSTRUCT, CODEC, receivers=[1])
    assert np.array_equal(out, np.arange(3))
    assert net.transcript.count(Phase.RECONSTRUCT) == 2


def test_individual_shares_look_uniform():
    """Each single share of a fixed secret is uniform over a small ring."""
    codec = FixedPointCodec(frac_bits=2, bit_width=6)
    r = np.random.default_rng(7)
    reps = 6400
    secret = np.full(reps, 5, dtype=np.uint64)
    shares = shr(secret, [0, 1, 2], r, codec)
    for p in (0, 1, 2):
        counts = np.bincount(shares[p].data.astype(np.int64), minlength=64)
        assert stats.chisquare(counts).pvalue > 0.01
