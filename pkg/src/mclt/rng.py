"""Counter-based random streams.

Every draw is a pure function of ``(seed, replicate, step, stream)``: the
tuple is fed as the counter/key of a Philox4x32-10 block cipher, so paths can
be simulated in any order, in any chunking and on any number of workers and
still come out bit-identical.
"""

import numba as nb
import numpy as np

STREAM_STEP = 0
STREAM_FILL = 1

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always", cache=True)
def _philox4x32(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        if r > 0:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ k0,
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ k1,
            p0 & _MASK32,
        )
    return c0, c1, c2, c3


@nb.njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Philox4x32-10 on a single 128-bit counter with a 64-bit key (32-bit words)."""
    return _philox4x32(
        np.uint64(c0) & _MASK32,
        np.uint64(c1) & _MASK32,
        np.uint64(c2) & _MASK32,
        np.uint64(c3) & _MASK32,
        np.uint64(k0) & _MASK32,
        np.uint64(k1) & _MASK32,
    )


@nb.njit(nogil=True, cache=True)
def _uniform_block(seed, rep_start, count, n, stream, out_a, out_b):
    k0 = np.uint64(seed) & _MASK32
    k1 = np.uint64(seed) >> _SHIFT32
    st = np.uint64(stream) & _MASK32
    for i in range(count):
        rep = np.uint64(rep_start + i)
        r_lo = rep & _MASK32
        r_hi = rep >> _SHIFT32
        for k in range(n):
            w0, w1, w2, w3 = _philox4x32(np.uint64(k), r_lo, r_hi, st, k0, k1)
            # 53-bit doubles in [0, 1)
            out_a[i, k] = ((w0 >> np.uint64(5)) * 67108864.0 + (w1 >> np.uint64(6))) * _INV_2_53
            out_b[i, k] = ((w2 >> np.uint64(5)) * 67108864.0 + (w3 >> np.uint64(6))) * _INV_2_53


@nb.njit(nogil=True, cache=True)
def _box_muller(ua, ub, out):
    count, n = ua.shape
    for i in range(count):
        for k in range(n):
            out[i, k] = np.sqrt(-2.0 * np.log1p(-ua[i, k])) * np.cos(_TWO_PI * ub[i, k])


def _check_seed(seed):
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.uint64(seed)


def uniforms(seed, rep_start, count, n, stream=STREAM_STEP):
    """Uniform(0, 1) draws of shape ``(count, n)``.

    Row ``i`` belongs to replicate ``rep_start + i`` and column ``k`` to step
    ``k`` (0-based).
    """
    ua = np.empty((count, n))
    ub = np.empty((count, n))
    _uniform_block(_check_seed(seed), rep_start, count, n, stream, ua, ub)
    return ua


def normals(seed, rep_start, count, n, stream=STREAM_FILL):
    """Standard normal draws of shape ``(count, n)`` (Box-Muller, one per counter)."""
    ua = np.empty((count, n))
    ub = np.empty((count, n))
    _uniform_block(_check_seed(seed), rep_start, count, n, stream, ua, ub)
    out = np.empty((count, n))
    _box_muller(ua, ub, out)
    return out
