"""Slow, obviously correct reference implementations used only by tests."""

import numba as nb
import numpy as np


@nb.njit(cache=True)
def naive_cyclic(a, b):
    """``c_k = sum_i a_i b_{(k - i) mod n}`` mod 2, one bit at a time."""
    n = a.size
    out = np.zeros(n, np.uint8)
    for k in range(n):
        acc = 0
        for i in range(n):
            acc ^= a[i] & b[(k - i) % n]
        out[k] = acc
    return out


@nb.njit(cache=True)
def _parity64(x):
    x ^= x >> np.uint64(32)
    x ^= x >> np.uint64(16)
    x ^= x >> np.uint64(8)
    x ^= x >> np.uint64(4)
    x ^= x >> np.uint64(2)
    x ^= x >> np.uint64(1)
    return x & np.uint64(1)


@nb.njit(cache=True)
def _bitset_cyclic(a_words, rr_words, n):
    nw = a_words.size
    out = np.zeros(n, np.uint8)
    for k in range(n):
        s = n - k
        base = s >> 6
        shift = np.uint64(s & 63)
        acc = np.uint64(0)
        for j in range(nw):
            w = rr_words[base + j] >> shift
            if shift:
                w |= rr_words[base + j + 1] << (np.uint64(64) - shift)
            acc ^= w & a_words[j]
        out[k] = _parity64(acc)
    return out


def _pack64(bits, words):
    padded = np.zeros(words * 64, np.uint8)
    padded[: bits.size] = bits
    return np.packbits(padded, bitorder="little").view("<u8").astype(np.uint64)


def bitset_cyclic(a, b):
    """Same definition as :func:`naive_cyclic`, 64 products per word operation.

    With ``r_j = b_{-j mod n}`` doubled to ``rr``, ``c_k`` is the parity of
    ``a AND rr[n - k : 2n - k]``.
    """
    n = a.size
    r = np.roll(b[::-1], 1)
    rr = np.concatenate([r, r])
    nw = (n + 63) // 64
    return _bitset_cyclic(_pack64(a, nw), _pack64(rr, 2 * nw + 2), n)


def toeplitz_matrix(seed_bits, m_S):
    m2 = seed_bits.size
    i = np.arange(m_S)[:, None]
    j = np.arange(m2)[None, :]
    return seed_bits[(i - j + m2 - 1) % m2].astype(np.uint8)


def ht_matrix_oracle(source_bits, seed_bits, m_S):
    """Explicit ``[I | T] s`` over GF(2)."""
    T = toeplitz_matrix(seed_bits, m_S)
    M = np.concatenate([np.eye(m_S, dtype=np.int64), T.astype(np.int64)], axis=1)
    return (M @ source_bits.astype(np.int64)) % 2


def sieve(limit):
    flags = np.ones(limit + 1, bool)
    flags[:2] = False
    for p in range(2, int(limit**0.5) + 1):
        if flags[p]:
            flags[p * p :: p] = False
    return np.flatnonzero(flags)


def order_of_two(p):
    k, x = 1, 2 % p
    while x != 1:
        x = x * 2 % p
        k += 1
    return k


def artin_primes_upto(limit):
    return [int(p) for p in sieve(limit) if p > 2 and order_of_two(int(p)) == p - 1]
