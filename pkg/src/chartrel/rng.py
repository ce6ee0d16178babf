"""Counter-based uniforms (Philox4x64-10) addressed by (replica, stream, index).

Philox (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3", SC'11)
maps a 256-bit counter and a 128-bit key to 256 random bits.  Here the key is
``(seed, stream)`` and the counter is ``(replica, index, 0, 0)``, so every
(seed, replica, stream) triple owns an independent sequence that can be
evaluated in any order, on any worker, with identical results.  The block
function matches numpy's ``Philox`` bit generator, which the test-suite uses
as a reference.
"""

from __future__ import annotations

import hashlib

import numpy as np

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_LO32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)


def _mulhilo(a: np.uint64, b: np.ndarray):
    lo = a * b
    a0, a1 = a & _LO32, a >> _S32
    b0, b1 = b & _LO32, b >> _S32
    p00, p01, p10, p11 = a0 * b0, a0 * b1, a1 * b0, a1 * b1
    mid = (p00 >> _S32) + (p01 & _LO32) + (p10 & _LO32)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, lo


def philox4x64(counter, key) -> np.ndarray:
    """Ten-round Philox4x64 block function.

    ``counter`` is a sequence of four uint64 arrays (broadcastable), ``key`` a
    pair.  Returns an array of shape ``(4,) + broadcast shape``.
    """
    with np.errstate(over="ignore"):
        x0, x1, x2, x3 = (np.asarray(c, dtype=np.uint64) for c in counter)
        k0, k1 = (np.asarray(k, dtype=np.uint64) for k in key)
        x0, x1, x2, x3, k0, k1 = np.broadcast_arrays(x0, x1, x2, x3, k0, k1)
        k0, k1 = k0.copy(), k1.copy()
        for r in range(10):
            if r:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo(_M0, x0)
            hi1, lo1 = _mulhilo(_M1, x2)
            x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
    return np.stack([x0, x1, x2, x3])


def to_unit_interval(words: np.ndarray) -> np.ndarray:
    """Map uint64 words to doubles in (0, 1] using the top 53 bits."""
    return ((words >> _S11).astype(np.float64) + 1.0) * (1.0 / 9007199254740992.0)


def stream_key(label: str) -> int:
    """Stable 64-bit identity for a named stream (independent of table order)."""
    return int.from_bytes(hashlib.blake2b(label.encode(), digest_size=8).digest(), "little")


class CounterRNG:
    """Stateless uniform source; ``seed`` is a 64-bit unsigned integer."""

    name = "philox4x64-10"

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = int(seed)

    def uniforms(self, replicas, streams, index=0) -> np.ndarray:
        """Uniforms in (0, 1] of shape ``(len(replicas), len(streams))``."""
        reps = np.asarray(replicas, dtype=np.uint64)[:, None]
        keys = np.asarray(streams, dtype=np.uint64)[None, :]
        idx = np.asarray(index, dtype=np.uint64)
        block = philox4x64((reps, idx, np.uint64(0), np.uint64(0)), (np.uint64(self.seed), keys))
        return to_unit_interval(block[0])

    def uniform(self, replica: int, stream: int, index: int = 0) -> float:
        return float(self.uniforms([replica], [stream], index)[0, 0])
