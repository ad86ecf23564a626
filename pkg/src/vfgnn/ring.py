"""Integer ring Z_{2^l} and fixed-point encoding of reals.

Ring elements are stored in ``numpy.uint64`` arrays; for bit widths below 64
every result is masked back into range.  Native uint64 arithmetic already
wraps modulo 2^64, and 2^l divides 2^64, so masking after the fact is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DTYPE = np.uint64


def _mask(bits: int) -> np.uint64:
    return np.uint64((1 << bits) - 1) if bits < 64 else np.uint64(0xFFFFFFFFFFFFFFFF)


def as_ring(values, bits: int = 64) -> np.ndarray:
    """Coerce integers (python ints, signed or unsigned arrays) into the ring."""
    arr = np.asarray(values)
    if arr.dtype == object:
        arr = np.vectorize(lambda v: int(v) % (1 << 64), otypes=[object])(arr).astype(DTYPE)
    elif arr.dtype.kind in "iu":
        # int64 -> uint64 wraps modulo 2^64, which agrees with mod 2^l after masking
        arr = arr.astype(DTYPE)
    else:
        raise TypeError(f"cannot interpret dtype {arr.dtype} as ring elements")
    return np.asarray(arr & _mask(bits))


def ring_add(a, b, bits: int = 64) -> np.ndarray:
    return (as_ring(a, bits) + as_ring(b, bits)) & _mask(bits)


def ring_sub(a, b, bits: int = 64) -> np.ndarray:
    return (as_ring(a, bits) - as_ring(b, bits)) & _mask(bits)


def ring_neg(a, bits: int = 64) -> np.ndarray:
    return (np.uint64(0) - as_ring(a, bits)) & _mask(bits)


def ring_mul(a, b, bits: int = 64) -> np.ndarray:
    return (as_ring(a, bits) * as_ring(b, bits)) & _mask(bits)


def ring_matmul(a: np.ndarray, b: np.ndarray, bits: int = 64) -> np.ndarray:
    # numpy integer matmul does not use BLAS and wraps like the scalar ops
    return np.matmul(a, b) & _mask(bits)


def to_signed(r, bits: int = 64) -> np.ndarray:
    """Two's-complement view of ring elements as int64."""
    r = as_ring(r, bits)
    if bits == 64:
        return r.view(np.int64)
    s = r.astype(np.int64)
    return np.where(s >= (1 << (bits - 1)), s - (1 << bits), s)


def from_signed(s, bits: int = 64) -> np.ndarray:
    return np.asarray(s, dtype=np.int64).astype(DTYPE) & _mask(bits)


@dataclass(frozen=True)
class FixedPointCodec:
    """Real numbers as round(x * 2^f) in two's complement inside Z_{2^l}."""

    frac_bits: int = 16
    bit_width: int = 64

    def __post_init__(self):
        if not 1 <= self.bit_width <= 64:
            raise ValueError("bit_width must be in [1, 64]")
        if not 0 <= self.frac_bits < self.bit_width - 1:
            raise ValueError("frac_bits must leave room for a sign bit")

    @property
    def scale(self) -> float:
        return float(1 << self.frac_bits)

    @property
    def bound(self) -> float:
        """Exclusive magnitude bound for encodable reals."""
        return float(2.0 ** (self.bit_width - self.frac_bits - 1))

    @property
    def mask(self) -> np.uint64:
        return _mask(self.bit_width)

    def encode(self, x, frac_bits: int | None = None) -> np.ndarray:
        return encode(x, self, frac_bits)

    def decode(self, r, frac_bits: int | None = None) -> np.ndarray:
        return decode(r, self, frac_bits)


def encode(x, codec: FixedPointCodec = FixedPointCodec(), frac_bits: int | None = None) -> np.ndarray:
    """Encode reals as ring elements with ``frac_bits`` fractional bits.

    Raises:
        OverflowError: if any ``|x|`` reaches ``2^(l - f - 1)``.
        ValueError: on NaN or infinite input.
    """
    f = codec.frac_bits if frac_bits is None else frac_bits
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("cannot encode non-finite values")
    bound = 2.0 ** (codec.bit_width - f - 1)
    if x.size and np.max(np.abs(x)) >= bound:
        raise OverflowError(
            f"value {np.max(np.abs(x)):.6g} outside fixed-point range (|x| < {bound:g})"
        )
    return from_signed(np.rint(x * 2.0**f).astype(np.int64), codec.bit_width)


def decode(r, codec: FixedPointCodec = FixedPointCodec(), frac_bits: int | None = None) -> np.ndarray:
    f = codec.frac_bits if frac_bits is None else frac_bits
    return to_signed(r, codec.bit_width).astype(np.float64) / 2.0**f


def truncate(r, codec: FixedPointCodec = FixedPointCodec(), shift: int | None = None) -> np.ndarray:
    """Arithmetic right shift by ``shift`` (default f) on a plaintext ring value."""
    shift = codec.frac_bits if shift is None else shift
    return from_signed(to_signed(r, codec.bit_width) >> shift, codec.bit_width)
