"""Additive secret sharing over Z_{2^l} with Beaver-triple multiplication.

A shared tensor is a ``dict`` mapping each party id to its :class:`ShareTensor`.
Operations that open values (``mul_beaver``, ``matmul_shared``, ``reveal``)
send every share through an injected :class:`~vfgnn.transport.Network` so the
transcript sees each directed message; pass ``network=None`` for a silent,
purely local simulation.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .ring import DTYPE, FixedPointCodec, as_ring, ring_matmul
from .transport import Network, PartyId, Phase


class SharingError(ValueError):
    pass


class TripleReuseError(RuntimeError):
    pass


class TripleExhaustedError(RuntimeError):
    pass


@dataclass
class ShareTensor:
    """One party's additive share.  ``frac_bits`` tracks the fixed-point scale."""

    owner: PartyId
    data: np.ndarray
    codec: FixedPointCodec = FixedPointCodec()
    frac_bits: int | None = None

    def __post_init__(self):
        self.data = as_ring(self.data, self.codec.bit_width)
        if self.frac_bits is None:
            self.frac_bits = self.codec.frac_bits

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def replace(self, data: np.ndarray, frac_bits: int | None = None) -> "ShareTensor":
        return ShareTensor(self.owner, data, self.codec,
                           self.frac_bits if frac_bits is None else frac_bits)


Shared = dict  # PartyId -> ShareTensor


def _wrapping(fn):
    """Ring arithmetic wraps by design; silence numpy's scalar overflow warnings."""
    @functools.wraps(fn)
    def inner(*args, **kwargs):
        with np.errstate(over="ignore"):
            return fn(*args, **kwargs)
    return inner


def _uniform(rng: np.random.Generator, shape, bits: int) -> np.ndarray:
    r = rng.integers(0, np.iinfo(np.uint64).max, size=shape, dtype=np.uint64, endpoint=True)
    return r & (np.uint64((1 << bits) - 1) if bits < 64 else np.uint64(0xFFFFFFFFFFFFFFFF))


def _m(codec: FixedPointCodec) -> np.uint64:
    return codec.mask


@_wrapping
def shr(secret, parties: Iterable[PartyId], rng: np.random.Generator,
        codec: FixedPointCodec = FixedPointCodec(), keeper: PartyId | None = None,
        frac_bits: int | None = None) -> Shared:
    """Split a ring tensor into additive shares.

    Every party except ``keeper`` (default: the first party) receives a uniform
    value; the keeper holds ``secret - sum(others) mod 2^l``.
    """
    parties = list(parties)
    if len(parties) < 2:
        raise SharingError("additive sharing needs at least 2 parties")
    if len(set(parties)) != len(parties):
        raise SharingError("duplicate party ids")
    keeper = parties[0] if keeper is None else keeper
    if keeper not in parties:
        raise SharingError(f"keeper {keeper!r} is not a party")
    secret = as_ring(secret, codec.bit_width)
    rest = secret.copy()
    out = {}
    for p in parties:
        if p == keeper:
            continue
        s = _uniform(rng, secret.shape, codec.bit_width)
        out[p] = ShareTensor(p, s, codec, frac_bits)
        rest = (rest - s) & _m(codec)
    out[keeper] = ShareTensor(keeper, rest, codec, frac_bits)
    return {p: out[p] for p in parties}


@_wrapping
def rec(shares: Mapping[PartyId, ShareTensor], parties: Iterable[PartyId] | None = None) -> np.ndarray:
    """Sum all shares modulo 2^l."""
    if not shares:
        raise SharingError("no shares to reconstruct")
    if parties is not None:
        missing = set(parties) - set(shares)
        if missing:
            raise SharingError(f"missing shares from {sorted(map(str, missing))}")
    items = list(shares.values())
    shape, codec = items[0].shape, items[0].codec
    total = np.zeros(shape, dtype=DTYPE)
    for s in items:
        if s.shape != shape:
            raise SharingError(f"share shape mismatch: {s.shape} vs {shape}")
        total = total + s.data
    return total & _m(codec)


@_wrapping
def add_local(a: ShareTensor, b: ShareTensor) -> ShareTensor:
    if a.owner != b.owner:
        raise SharingError(f"cannot add shares of {a.owner!r} and {b.owner!r}")
    if a.shape != b.shape:
        raise SharingError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.codec != b.codec or a.frac_bits != b.frac_bits:
        raise SharingError("codec or scale mismatch")
    return a.replace((a.data + b.data) & _m(a.codec))


def add_shared(a: Shared, b: Shared) -> Shared:
    if set(a) != set(b):
        raise SharingError("party sets differ")
    return {p: add_local(a[p], b[p]) for p in a}


@_wrapping
def reveal(values: Mapping[PartyId, np.ndarray], network: Network | None, phase: Phase,
           codec: FixedPointCodec, receivers: Iterable[PartyId] | None = None) -> np.ndarray:
    """Open a shared ring tensor.

    ``receivers=None`` broadcasts (every party learns the value); otherwise only
    the listed parties receive the other shares.
    """
    parties = list(values)
    targets = parties if receivers is None else list(receivers)
    opened = None
    for j in targets:
        total = values[j].copy() if j in values else np.zeros_like(next(iter(values.values())))
        for i in parties:
            if i == j:
                continue
            if network is not None:
                network.send(i, j, phase, values[i])
                total = total + network.recv(j, phase, sender=i).payload
            else:
                total = total + values[i]
        total &= _m(codec)
        if opened is None:
            opened = total
    return opened


@dataclass
class BeaverTriple:
    """Shares of (u, w, z) with z = u * w (elementwise) or z = u @ w (matmul)."""

    u: Shared
    w: Shared
    z: Shared
    kind: str = "elementwise"
    consumed: bool = field(default=False)

    @property
    def parties(self) -> list:
        return list(self.u)

    def consume(self) -> None:
        if self.consumed:
            raise TripleReuseError("Beaver triple already used")
        self.consumed = True


@_wrapping
def triple_gen(shape_u, parties: Iterable[PartyId], rng: np.random.Generator,
               codec: FixedPointCodec = FixedPointCodec(), kind: str = "elementwise",
               shape_w=None, zero_u: bool = False) -> BeaverTriple:
    """Trusted-dealer triple.  ``zero_u`` forces u = 0 (test hook)."""
    parties = list(parties)
    shape_u = tuple(np.atleast_1d(shape_u)) if not isinstance(shape_u, tuple) else shape_u
    if kind == "elementwise":
        shape_w = shape_u
    elif kind == "matmul":
        if shape_w is None or len(shape_u) != 2 or len(shape_w) != 2 or shape_u[1] != shape_w[0]:
            raise SharingError(f"matmul triple shapes do not chain: {shape_u} x {shape_w}")
    else:
        raise SharingError(f"unknown triple kind {kind!r}")
    bits = codec.bit_width
    u = np.zeros(shape_u, dtype=DTYPE) if zero_u else _uniform(rng, shape_u, bits)
    w = _uniform(rng, shape_w, bits)
    z = (u * w) & _m(codec) if kind == "elementwise" else ring_matmul(u, w, bits)
    return BeaverTriple(shr(u, parties, rng, codec), shr(w, parties, rng, codec),
                        shr(z, parties, rng, codec), kind)


class TrustedDealer:
    """Offline preprocessing: Beaver triples and truncation pairs on demand.

    ``budget`` caps the number of triples handed out (``None`` = unlimited).
    """

    def __init__(self, rng: np.random.Generator, codec: FixedPointCodec = FixedPointCodec(),
                 budget: int | None = None):
        self.rng = rng
        self.codec = codec
        self.budget = budget
        self.issued = 0

    def triple(self, shape_u, parties, kind="elementwise", shape_w=None) -> BeaverTriple:
        if self.budget is not None and self.issued >= self.budget:
            raise TripleExhaustedError(f"dealer budget of {self.budget} triples exhausted")
        self.issued += 1
        return triple_gen(shape_u, parties, self.rng, self.codec, kind, shape_w)

    def truncation_pair(self, shape, parties, shift: int) -> tuple[Shared, Shared]:
        """Shares of r uniform in [0, 2^(l-2)) and of r >> shift."""
        bits = self.codec.bit_width
        r = _uniform(self.rng, shape, bits) & np.uint64((1 << (bits - 2)) - 1)
        return shr(r, parties, self.rng, self.codec), shr(r >> np.uint64(shift), parties, self.rng, self.codec)


def _designated(parties) -> PartyId:
    try:
        return min(parties)
    except TypeError:
        return min(parties, key=str)


@_wrapping
def mul_beaver(a: Shared, b: Shared, triple: BeaverTriple, network: Network | None = None) -> Shared:
    """Multiply shared tensors with one Beaver triple.

    Each party masks its operands, ``e = a - u`` and ``f = b - w`` are opened
    (two broadcast reveals), then party i keeps ``f*a_i + e*b_i + z_i`` and the
    designated (lowest id) party also subtracts ``e*f``.  For ``kind='matmul'``
    the products are matrix products in the order ``a @ b``.  Output scale is
    the sum of the input scales; truncate afterwards if needed.
    """
    parties = list(a)
    if set(parties) != set(b) or set(parties) != set(triple.parties):
        raise SharingError("operands and triple must be shared among the same parties")
    first_a, first_b = a[parties[0]], b[parties[0]]
    codec = first_a.codec
    bits = codec.bit_width
    matmul = triple.kind == "matmul"
    u0, w0 = triple.u[parties[0]], triple.w[parties[0]]
    if first_a.shape != u0.shape or first_b.shape != w0.shape:
        raise SharingError(
            f"triple shapes {u0.shape},{w0.shape} do not match operands {first_a.shape},{first_b.shape}")
    triple.consume()

    e_shares = {p: (a[p].data - triple.u[p].data) & _m(codec) for p in parties}
    f_shares = {p: (b[p].data - triple.w[p].data) & _m(codec) for p in parties}
    e = reveal(e_shares, network, Phase.BEAVER_REVEAL, codec)
    f = reveal(f_shares, network, Phase.BEAVER_REVEAL, codec)

    prod = (lambda x, y: ring_matmul(x, y, bits)) if matmul else (lambda x, y: (x * y) & _m(codec))
    lead = _designated(parties)
    scale = first_a.frac_bits + first_b.frac_bits
    out = {}
    for p in parties:
        c = (prod(a[p].data, f) + prod(e, b[p].data) + triple.z[p].data) & _m(codec)
        if p == lead:
            c = (c - prod(e, f)) & _m(codec)
        out[p] = ShareTensor(p, c, codec, scale)
    return out


@_wrapping
def truncate_shares(shares: Shared, shift: int | None = None, network: Network | None = None,
                    dealer: TrustedDealer | None = None) -> Shared:
    """Drop ``shift`` fractional bits from a shared value (probabilistic, <= 1 ulp).

    Two parties truncate locally: the lead shifts its share, the other shifts
    the negation of its share.  This fails only when the secret is within
    ``|x|`` of the wrap point, i.e. with probability ~``|x| / 2^l``.  With more
    parties local shifting is unsound, so a dealer truncation pair (r, r >> s)
    masks the value, the lead opens ``x + 2^(l-3) + r`` and everyone subtracts
    their share of ``r >> s``.  Requires ``|x| < 2^(l-3)``.
    """
    parties = list(shares)
    first = shares[parties[0]]
    codec = first.codec
    shift = codec.frac_bits if shift is None else shift
    new_scale = first.frac_bits - shift
    sh = np.uint64(shift)
    if len(parties) == 1:
        from .ring import truncate
        return {parties[0]: first.replace(truncate(first.data, codec, shift), new_scale)}
    lead = _designated(parties)
    if len(parties) == 2:
        out = {}
        for p in parties:
            d = shares[p].data
            if p == lead:
                t = d >> sh
            else:
                t = (np.uint64(0) - (((np.uint64(0) - d) & _m(codec)) >> sh)) & _m(codec)
            out[p] = shares[p].replace(t, new_scale)
        return out
    if dealer is None:
        raise SharingError("truncation among more than two parties needs a dealer")
    bits = codec.bit_width
    r, r_hi = dealer.truncation_pair(first.shape, parties, shift)
    offset = np.uint64(1 << (bits - 3))
    masked = {p: (shares[p].data + r[p].data + (offset if p == lead else np.uint64(0))) & _m(codec)
              for p in parties}
    m = reveal(masked, network, Phase.TRUNCATION, codec, receivers=[lead])
    out = {}
    for p in parties:
        t = (np.uint64(0) - r_hi[p].data) & _m(codec)
        if p == lead:
            t = (t + (m >> sh) - (offset >> sh)) & _m(codec)
        out[p] = shares[p].replace(t, new_scale)
    return out


@_wrapping
def scale_shares(shares: Shared, factor: float, network: Network | None = None,
                 dealer: TrustedDealer | None = None) -> Shared:
    """Multiply a shared value by a public real, keeping its scale."""
    first = next(iter(shares.values()))
    k = first.codec.encode(factor)
    scaled = {p: s.replace((s.data * k) & _m(s.codec), s.frac_bits + s.codec.frac_bits)
              for p, s in shares.items()}
    return truncate_shares(scaled, network=network, dealer=dealer)


@_wrapping
def matmul_shared(x: Shared, w: Shared, dealer: TrustedDealer, network: Network | None = None,
                  truncate: bool = True) -> Shared:
    """Shared ``X @ W`` by the distributive law over parties' shares.

    Diagonal terms ``<X>_i @ <W>_i`` are local.  Each cross term
    ``<X>_i @ <W>_j`` (i != j) is a two-party Beaver matrix product between
    i (who alone knows ``<X>_i``) and j (who alone knows ``<W>_j``); both end
    up with additive shares of it.  With ``truncate=False`` the result keeps
    the doubled scale, which is exact until reconstruction.
    """
    parties = list(x)
    if set(parties) != set(w):
        raise SharingError("operands must be shared among the same parties")
    x0, w0 = x[parties[0]], w[parties[0]]
    if x0.data.ndim != 2 or w0.data.ndim != 2 or x0.shape[1] != w0.shape[0]:
        raise SharingError(f"inner dimensions disagree: {x0.shape} @ {w0.shape}")
    codec = x0.codec
    bits = codec.bit_width
    scale = x0.frac_bits + w0.frac_bits
    acc = {p: ring_matmul(x[p].data, w[p].data, bits) for p in parties}
    zx = np.zeros(x0.shape, dtype=DTYPE)
    zw = np.zeros(w0.shape, dtype=DTYPE)
    for i in parties:
        for j in parties:
            if i == j:
                continue
            pair = [i, j]
            a = {i: x[i], j: ShareTensor(j, zx, codec, x0.frac_bits)}
            b = {i: ShareTensor(i, zw, codec, w0.frac_bits), j: w[j]}
            triple = dealer.triple(x0.shape, pair, kind="matmul", shape_w=w0.shape)
            c = mul_beaver(a, b, triple, network)
            acc[i] = (acc[i] + c[i].data) & _m(codec)
            acc[j] = (acc[j] + c[j].data) & _m(codec)
    out = {p: ShareTensor(p, acc[p], codec, scale) for p in parties}
    if truncate:
        out = truncate_shares(out, codec.frac_bits, network, dealer)
    return out
