"""Deterministic primality testing and Artin-prime search.

An Artin prime here is a prime ``n`` for which 2 generates the multiplicative
group mod ``n``; these are the block lengths the cyclic-shift extractor needs.
"""

from __future__ import annotations

import logging
import math
import os
from functools import lru_cache
from pathlib import Path

log = logging.getLogger(__name__)

# Witness set that makes Miller-Rabin deterministic for every n < 2^64.
_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
_SMALL_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)
TRIAL_LIMIT = 10**6
DEFAULT_SEARCH_CAP = 10**7
CACHE_ENV = "RANDAMP_ARTIN_CACHE"


class FactorizationError(ArithmeticError):
    pass


class SearchLimitError(RuntimeError):
    pass


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    if n >= 1 << 64:
        raise ValueError("deterministic test only covers n < 2^64")
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _pollard_brent(n: int, max_iter: int = 1 << 20) -> int:
    """Return a non-trivial factor of composite odd ``n`` (Brent's variant)."""
    for c in range(1, 64):
        y, m, g, r, q = 2, 128, 1, 1, 1
        x = ys = y
        f = lambda v: (v * v + c) % n  # noqa: E731
        it = 0
        while g == 1 and it < max_iter:
            x = y
            for _ in range(r):
                y = f(y)
            k = 0
            while k < r and g == 1:
                ys = y
                for _ in range(min(m, r - k)):
                    y = f(y)
                    q = q * abs(x - y) % n
                g = math.gcd(q, n)
                k += m
            r *= 2
            it += r
        if g == n:
            g = 1
            while g == 1:
                ys = f(ys)
                g = math.gcd(abs(x - ys), n)
        if 1 < g < n:
            return g
    raise FactorizationError(f"Pollard rho failed to split {n}")


def prime_factors(n: int) -> list[int]:
    """Distinct prime factors of ``n >= 1``, ascending."""
    factors: set[int] = set()
    m = n
    while m % 2 == 0:
        factors.add(2)
        m //= 2
    p = 3
    limit = min(TRIAL_LIMIT, math.isqrt(m) + 1)
    while p <= limit and m > 1:
        if m % p == 0:
            factors.add(p)
            while m % p == 0:
                m //= p
            limit = min(TRIAL_LIMIT, math.isqrt(m) + 1)
        p += 2
    stack = [m] if m > 1 else []
    while stack:
        k = stack.pop()
        if is_prime(k):
            factors.add(k)
            continue
        d = _pollard_brent(k)
        stack.extend((d, k // d))
    return sorted(factors)


def is_artin_prime(n: int) -> bool:
    """True iff ``n`` is prime and 2 has multiplicative order ``n - 1`` mod ``n``."""
    if n < 3:
        raise ValueError("Artin-prime test needs n >= 3")
    if not is_prime(n):
        return False
    return all(pow(2, (n - 1) // p, n) != 1 for p in prime_factors(n - 1))


def default_cache_path() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    base = os.environ.get("XDG_CACHE_HOME") or Path.home() / ".cache"
    return Path(base) / "randamp" / "artin_primes.txt"


def _load_cache(path: Path) -> dict[int, int]:
    table: dict[int, int] = {}
    try:
        text = path.read_text()
    except OSError:
        return table
    for line in text.splitlines():
        parts = line.split()
        if len(parts) != 2:
            continue
        try:
            key, value = int(parts[0]), int(parts[1])
        except ValueError:
            continue
        table[key] = value
    return table


def _search(n_min: int, cap: int) -> int:
    n = n_min
    while n < n_min + cap:
        # 2 is a quadratic non-residue only for primes that are 3 or 5 mod 8.
        if n % 8 in (3, 5) and is_artin_prime(n):
            return n
        n += 1
    raise SearchLimitError(f"no Artin prime in [{n_min}, {n_min + cap})")


@lru_cache(maxsize=256)
def _next_artin_prime_uncached(n_min: int, cap: int) -> int:
    return _search(n_min, cap)


def next_artin_prime(n_min: int, *, cap: int = DEFAULT_SEARCH_CAP, cache: bool | Path | str = True) -> int:
    """Smallest Artin prime ``>= n_min``.

    Results are remembered in a small text table (``n_min prime`` per line)
    at :func:`default_cache_path` unless ``cache`` is False or another path.
    Cached entries are re-checked with :func:`is_artin_prime` on load.
    """
    if not 3 <= n_min <= 1 << 31:
        raise ValueError("n_min must lie in [3, 2^31]")
    path = None
    if cache:
        path = default_cache_path() if cache is True else Path(cache)
        hit = _load_cache(path).get(n_min)
        if hit is not None and hit >= n_min and is_artin_prime(hit):
            return hit
    result = _next_artin_prime_uncached(n_min, cap)
    if path is not None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("a") as fh:
                fh.write(f"{n_min} {result}\n")
        except OSError as exc:
            log.debug("could not write Artin cache %s: %s", path, exc)
    return result
