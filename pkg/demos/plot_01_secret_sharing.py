"""
Additive secret sharing and Beaver multiplication
=================================================

Values live in the ring Z_2^64 as fixed-point numbers with 16 fractional
bits.  Any strict subset of shares is uniformly random; all shares sum to
the secret.
"""

import numpy as np

from vfgnn.ring import decode, encode
from vfgnn.sharing import TrustedDealer, matmul_shared, mul_beaver, rec, shr, truncate_shares

rng = np.random.default_rng(0)
parties = ["alice", "bob", "carol"]

# split 1.5 into three shares; each share on its own looks like noise
shares = shr(encode(np.array([1.5])), parties, rng)
for p, s in shares.items():
    print(f"{p:>6}: {int(s.data[0]):>20d}")
print("reconstructed:", decode(rec(shares)))

# multiply two shared values with a triple from the dealer, then drop the
# doubled fractional scale
dealer = TrustedDealer(rng)
a = shr(encode(np.array([1.5, -2.25])), parties, rng)
b = shr(encode(np.array([2.0, 4.0])), parties, rng)
prod = truncate_shares(mul_beaver(a, b, dealer.triple((2,), parties)), dealer=dealer)
print("1.5*2 and -2.25*4:", decode(rec(prod)))

# the same for matrices
x, w = rng.uniform(-1, 1, (4, 3)), rng.uniform(-1, 1, (3, 2))
xw = matmul_shared(shr(encode(x), parties, rng), shr(encode(w), parties, rng), dealer)
print("max matmul error:", np.abs(decode(rec(xw)) - x @ w).max())
