"""Exact GF(2) convolution through a number-theoretic transform.

Arithmetic is over the prime ``q = 2^64 - 2^32 + 1``. ``q - 1`` is divisible
by ``2^32``, so power-of-two transforms up to length ``2^32`` exist, and every
integer convolution coefficient of two bit vectors of length ``n <= 2^30`` is
below ``q``. The integer result is therefore exact before reduction mod 2.

Forward transforms are decimation-in-frequency (natural order in, bit-reversed
out) and the inverse is decimation-in-time (bit-reversed in, natural out), so
no explicit bit-reversal permutation is ever done.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numba as nb
import numpy as np

from .bitstore import BitString

MODULUS = 0xFFFFFFFF00000001
GENERATOR = 7  # generates the full multiplicative group mod MODULUS
MAX_LOG2_LENGTH = 32
MAX_BLOCK = 1 << 30

_P = np.uint64(MODULUS)
_M32 = np.uint64(0xFFFFFFFF)
_EPS = np.uint64(0xFFFFFFFF)  # 2^64 mod q
_S32 = np.uint64(32)
_SMALL_HALF = 16


@nb.njit(inline="always")
def _mulmod(a, b):
    a_lo = a & _M32
    a_hi = a >> _S32
    b_lo = b & _M32
    b_hi = b >> _S32
    ll = a_lo * b_lo
    lh = a_lo * b_hi
    hl = a_hi * b_lo
    hh = a_hi * b_hi
    mid = (ll >> _S32) + (lh & _M32) + (hl & _M32)
    lo = (ll & _M32) | (mid << _S32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    # lo + 2^64 hi with 2^64 = 2^32 - 1 and 2^96 = -1 (mod q)
    hi_hi = hi >> _S32
    hi_lo = hi & _M32
    t0 = lo - hi_hi
    t0 -= _EPS * np.uint64(lo < hi_hi)
    t1 = hi_lo * _EPS
    t2 = t0 + t1
    t2 += _EPS * np.uint64(t2 < t1)
    t2 -= _P * np.uint64(t2 >= _P)
    return t2


@nb.njit(inline="always")
def _addmod(a, b):
    s = a + b
    s += _EPS * np.uint64(s < a)
    s -= _P * np.uint64(s >= _P)
    return s


@nb.njit(inline="always")
def _submod(a, b):
    return a - b + _P * np.uint64(a < b)


@nb.njit(cache=True)
def _powers(g, count):
    out = np.empty(count, np.uint64)
    x = np.uint64(1)
    for i in range(count):
        out[i] = x
        x = _mulmod(x, g)
    return out


@nb.njit(cache=True)
def _stage_twiddles(tw, step, half, inverse, out):
    # out[k] = w^(+-k*step); w^-j = -w^(N/2 - j) because w^(N/2) = -1
    half_n = tw.shape[0]
    out[0] = np.uint64(1)
    for k in range(1, half):
        if inverse:
            out[k] = _P - tw[half_n - k * step]
        else:
            out[k] = tw[k * step]


@nb.njit(cache=True)
def _dif_stage(a, w, half):
    n = a.shape[0]
    if half >= _SMALL_HALF:
        for start in range(0, n, 2 * half):
            x = a[start : start + half]
            y = a[start + half : start + 2 * half]
            for k in range(half):
                u = x[k]
                v = y[k]
                x[k] = _addmod(u, v)
                y[k] = _mulmod(_submod(u, v), w[k])
    else:
        for k in range(half):
            wk = w[k]
            for j in range(k, n, 2 * half):
                u = a[j]
                v = a[j + half]
                a[j] = _addmod(u, v)
                a[j + half] = _mulmod(_submod(u, v), wk)


@nb.njit(cache=True)
def _dit_stage(a, w, half):
    n = a.shape[0]
    if half >= _SMALL_HALF:
        for start in range(0, n, 2 * half):
            x = a[start : start + half]
            y = a[start + half : start + 2 * half]
            for k in range(half):
                u = x[k]
                v = _mulmod(y[k], w[k])
                x[k] = _addmod(u, v)
                y[k] = _submod(u, v)
    else:
        for k in range(half):
            wk = w[k]
            for j in range(k, n, 2 * half):
                u = a[j]
                v = _mulmod(a[j + half], wk)
                a[j] = _addmod(u, v)
                a[j + half] = _submod(u, v)


@nb.njit(cache=True)
def _first_stage_halfzero(a, tw):
    # Top half of a zero-padded input is zero: (u, 0) -> (u, u * w^k).
    half = a.shape[0] >> 1
    x = a[:half]
    y = a[half:]
    for k in range(half):
        y[k] = _mulmod(x[k], tw[k])


@nb.njit(cache=True)
def _forward(a, tw, buf, top_half_zero):
    n = a.shape[0]
    half = n >> 1
    step = 1
    if top_half_zero and half >= 1:
        _first_stage_halfzero(a, tw)
        half >>= 1
        step <<= 1
    while half >= 1:
        if step == 1:
            _dif_stage(a, tw, half)
        else:
            _stage_twiddles(tw, step, half, False, buf)
            _dif_stage(a, buf[:half], half)
        half >>= 1
        step <<= 1


@nb.njit(cache=True)
def _inverse(a, tw, buf):
    n = a.shape[0]
    half = 1
    step = n >> 1
    while half < n:
        _stage_twiddles(tw, step, half, True, buf)
        _dit_stage(a, buf[:half], half)
        half <<= 1
        step >>= 1


@nb.njit(cache=True)
def _pointwise(a, b):
    x = a
    y = b
    for i in range(x.shape[0]):
        x[i] = _mulmod(x[i], y[i])


@dataclass(frozen=True)
class NttPlan:
    """Transform of power-of-two ``length`` over :data:`MODULUS`.

    ``twiddles[k] = root^k`` for ``k < length / 2``; inverse twiddles are
    derived from the same table at transform time.
    """

    modulus: int
    length: int
    root: int
    root_inv: int
    length_inv: int
    twiddles: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        q, n = self.modulus, self.length
        if (q - 1) % n:
            raise ValueError(f"q - 1 is not divisible by transform length {n}")
        if pow(self.root, n, q) != 1:
            raise ValueError("root^N != 1")
        if n > 1 and pow(self.root, n // 2, q) != q - 1:
            raise ValueError("root is not a primitive N-th root of unity")
        if self.root * self.root_inv % q != 1 or self.length * self.length_inv % q != 1:
            raise ValueError("bad inverse in plan")

    def forward(self, a: np.ndarray, *, top_half_zero: bool = False) -> None:
        """In-place forward transform of ``uint64`` array ``a`` (output bit-reversed)."""
        _forward(a, self.twiddles, np.empty(max(1, self.length // 2), np.uint64), top_half_zero)

    def inverse(self, a: np.ndarray) -> None:
        """In-place unscaled inverse of :meth:`forward` (input bit-reversed)."""
        _inverse(a, self.twiddles, np.empty(max(1, self.length // 2), np.uint64))


@lru_cache(maxsize=2)
def make_plan(length: int) -> NttPlan:
    if length < 1 or length & (length - 1):
        raise ValueError("transform length must be a power of two")
    if length.bit_length() - 1 > MAX_LOG2_LENGTH:
        raise ValueError(f"no 2^k-th root of unity mod q for length {length}")
    q = MODULUS
    root = pow(GENERATOR, (q - 1) // length, q)
    tw = _powers(np.uint64(root), max(1, length // 2))
    return NttPlan(q, length, root, pow(root, q - 2, q), pow(length, q - 2, q), tw)


def transform_length(n: int) -> int:
    """Smallest power of two holding a linear convolution of two length-``n`` inputs."""
    need = max(2, 2 * n - 1)
    return 1 << (need - 1).bit_length()


def _linear_convolve_parity(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Parity of each coefficient of the integer linear convolution of bit arrays."""
    la, lb = a.size, b.size
    out_len = la + lb - 1
    if out_len > 2 * MAX_BLOCK:
        raise ValueError("convolution too long for an exact transform over q")
    length = max(2, 1 << (out_len - 1).bit_length())
    plan = make_plan(length)
    fa = np.zeros(length, np.uint64)
    # Scale one input by N^-1 so the inverse needs no separate pass.
    fa[:la] = np.where(a.astype(bool), np.uint64(plan.length_inv), np.uint64(0))
    fb = np.zeros(length, np.uint64)
    fb[:lb] = b
    half_zero = max(la, lb) <= length // 2
    plan.forward(fa, top_half_zero=half_zero)
    plan.forward(fb, top_half_zero=half_zero)
    _pointwise(fa, fb)
    del fb
    plan.inverse(fa)
    return (fa[:out_len] & np.uint64(1)).astype(np.uint8)


def linear_convolve_gf2(a: BitString, b: BitString) -> BitString:
    """GF(2) polynomial product of ``a`` and ``b`` (bit i = coefficient of X^i)."""
    if a.length == 0 or b.length == 0:
        return BitString.zeros(0)
    return BitString.from_bits(_linear_convolve_parity(a.to_bits(), b.to_bits()))


def cyclic_convolve_bits(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Array form of :func:`cyclic_convolve_gf2` on unpacked 0/1 ``uint8`` arrays."""
    n = a.size
    if b.size != n:
        raise ValueError(f"cyclic convolution needs equal lengths, got {n} and {b.size}")
    if n > MAX_BLOCK:
        raise ValueError(f"block length {n} exceeds 2^30; no exact plan over q")
    if n == 0:
        return np.zeros(0, np.uint8)
    lin = _linear_convolve_parity(a, b)
    out = lin[:n].copy()
    out[: n - 1] ^= lin[n:]
    return out


def cyclic_convolve_gf2(a: BitString, b: BitString) -> BitString:
    """``c_k = sum_i a_i b_{(k - i) mod n}  (mod 2)`` for equal-length ``a``, ``b``."""
    return BitString.from_bits(cyclic_convolve_bits(a.to_bits(), b.to_bits()))
