"""Quantum-proof randomness extractors and their output-size formulas.

Two-source (cyclic-shift) extractor
    Output is the first ``m2`` bits of the GF(2) cyclic convolution of the two
    ``n``-bit inputs, ``n`` an Artin prime.

Seeded (Toeplitz) extractor
    Source ``s = u || w`` with ``|u| = m_S`` and ``|w| = m2_seed``; output is
    ``u XOR T w`` where ``T`` is an ``m_S x m2_seed`` Toeplitz matrix whose
    ``m_S + m2_seed - 1`` diagonal parameters repeat the seed cyclically.
    ``T[i, j] = seed[(i - j + m2_seed - 1) mod m2_seed]``.

Raz-type two-source sizing is provided as a calculator only; there is no
bit-level implementation of that construction.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np

from .bitstore import BitString
from .ntt import _linear_convolve_parity, cyclic_convolve_bits
from .primes import is_artin_prime

Adversary = Literal["quantum", "classical"]

LOG2_3 = math.log2(3)
DODIS_CONSTANT = 10 - 4 * LOG2_3
RAZ_DIVISOR = 18.5


@dataclass(frozen=True)
class DodisParams:
    n: int
    m2: int
    eps_sec: float
    xi: float = 0.0
    adversary: Adversary = "quantum"

    def __post_init__(self):
        if not 0 < self.m2 <= self.n:
            raise ValueError(f"need 0 < m2 <= n, got m2={self.m2}, n={self.n}")
        if not 0 < self.eps_sec < 1:
            raise ValueError("eps_sec must lie in (0, 1)")
        if self.xi < 0:
            raise ValueError("xi must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HtParams:
    n_S: int
    m_S: int
    m2_seed: int
    alpha: int
    c: float
    eps_sec: float
    log2_eps_sec: float
    d_S: int = 0

    def __post_init__(self):
        if self.m_S + self.m2_seed != self.n_S:
            raise ValueError("m_S + m2_seed must equal n_S")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RazParams:
    delta: float
    m2: int
    eps_sec: float
    log2_eps_sec: float

    def to_dict(self) -> dict:
        return asdict(self)


def dodis_output_size(
    log2_pSV: float,
    log2_pQ: float,
    n: int,
    eps_sec: float,
    adversary: Adversary = "quantum",
) -> int:
    """Output length of the two-source extractor for ``n``-bit blocks.

    ``log2_pSV`` and ``log2_pQ`` are the (non-positive) log2 guessing
    probabilities of the two whole input blocks. Returns 0 when the formula
    is not positive.
    """
    if not 0 < eps_sec < 1:
        raise ValueError("eps_sec must lie in (0, 1)")
    inner = -log2_pSV - log2_pQ - 8 * math.log2(1 / eps_sec) + DODIS_CONSTANT - n
    if adversary == "classical":
        size = math.floor(inner)
    elif adversary == "quantum":
        size = math.floor(inner / 5)
    else:
        raise ValueError(f"unknown adversary model {adversary!r}")
    return max(0, size)


def dodis_rate(c_SV: float, c_Q: float, xi: float = 0.0) -> float:
    """Asymptotic output bits per input bit, ``(c_SV + c_Q - 1 - xi) / 5``, clamped at 0."""
    return max(0.0, (c_SV + c_Q - 1 - xi) / 5)


def dodis_extract(x: BitString, y: BitString, m2: int) -> BitString:
    n = x.length
    if y.length != n:
        raise ValueError(f"inputs must have equal length, got {n} and {y.length}")
    if n < 3 or not is_artin_prime(n):
        raise ValueError(f"block length {n} is not an Artin prime")
    if not 0 <= m2 <= n:
        raise ValueError(f"m2={m2} outside [0, {n}]")
    conv = cyclic_convolve_bits(x.to_bits(), y.to_bits())
    return BitString.from_bits(conv[:m2])


def ht_max_alpha(c: float) -> int:
    """Largest integer multiple with a strictly positive error exponent ``1 + alpha (c - 1)``."""
    if not 0.5 < c < 1:
        raise ValueError("source rate c must lie in (1/2, 1)")
    alpha = math.floor(1 / (1 - c))
    while alpha >= 1 and 1 + alpha * (c - 1) <= 1e-12:
        alpha -= 1
    return alpha


def ht_log2_error(m2_seed: int, alpha: int, c: float) -> float:
    exponent = 1 + alpha * (c - 1)
    return 0.5 * math.log2(alpha - 1) - m2_seed * exponent / 2 if alpha > 1 else -math.inf


def ht_params(n_S: int, c: float, alpha: int) -> HtParams:
    """Size the seeded extractor for an ``n_S``-bit source of min-entropy rate ``c``.

    The seed takes ``n_S // (alpha + 1)`` bits and the output ``alpha`` times
    that; ``n_S`` is trimmed so the two add up exactly.
    """
    if not 0.5 < c < 1:
        raise ValueError("source rate c must lie in (1/2, 1)")
    if not isinstance(alpha, (int, np.integer)) or alpha < 2:
        raise ValueError("alpha must be an integer >= 2")
    limit = ht_max_alpha(c)
    if alpha > limit:
        raise ValueError(f"alpha={alpha} exceeds the largest usable multiple {limit} for c={c}")
    m2_seed = n_S // (alpha + 1)
    if m2_seed < 1:
        raise ValueError(f"source of {n_S} bits too short for alpha={alpha}")
    m_S = alpha * m2_seed
    log2_eps = ht_log2_error(m2_seed, alpha, c)
    return HtParams(
        n_S=m_S + m2_seed,
        m_S=m_S,
        m2_seed=m2_seed,
        alpha=int(alpha),
        c=c,
        eps_sec=2.0**log2_eps,
        log2_eps_sec=log2_eps,
    )


def ht_output_size(log2_p: float, n_S: int, m2_seed: int, eps_sec: float, d_S: int = 0) -> int:
    """General output length ``-log p - 2 log(1/eps) - log ceil((n_S - d_S) / m2)``."""
    size = -log2_p - 2 * math.log2(1 / eps_sec) - math.log2(math.ceil((n_S - d_S) / m2_seed))
    return max(0, math.floor(size))


def toeplitz_diagonals(seed: BitString, m_S: int) -> np.ndarray:
    """The ``m_S + m2_seed - 1`` diagonal parameters, seed repeated cyclically."""
    bits = seed.to_bits()
    total = m_S + bits.size - 1
    reps = -(-total // bits.size)
    return np.tile(bits, reps)[:total]


def ht_extract(source: BitString, seed: BitString, m_S: int) -> BitString:
    m2 = seed.length
    if m2 < 1 or m_S < 0 or source.length != m_S + m2:
        raise ValueError(
            f"need source length m_S + seed length, got {source.length} != {m_S} + {m2}"
        )
    bits = source.to_bits()
    u, w = bits[:m_S], bits[m_S:]
    if m_S == 0:
        return BitString.zeros(0)
    t = toeplitz_diagonals(seed, m_S)
    # (T w)_i = sum_j t[i + m2 - 1 - j] w_j, i.e. entries m2-1 .. m2-2+m_S of t * w.
    lin = _linear_convolve_parity(t, w)
    return BitString.from_bits(u ^ lin[m2 - 1 : m2 - 1 + m_S])


def raz_params(c_SV: float, log2_pQ: float) -> RazParams:
    delta = c_SV - 0.5
    if delta <= 0:
        m2 = 0
    else:
        m2 = max(0, math.floor(delta / RAZ_DIVISOR * -log2_pQ))
    log2_eps = 0.5 * LOG2_3 - 0.125 - m2 / 8
    return RazParams(delta=delta, m2=m2, eps_sec=2.0**log2_eps, log2_eps_sec=log2_eps)


def raz_min_output(eps_sec: float) -> int:
    """Smallest Raz output length whose error bound is at most ``eps_sec``."""
    return max(0, math.ceil(8 * (0.5 * LOG2_3 - 0.125 + math.log2(1 / eps_sec))))
