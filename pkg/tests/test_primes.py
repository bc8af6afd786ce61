import pytest

from randamp import primes
from randamp.primes import SearchLimitError, is_artin_prime, is_prime, next_artin_prime, prime_factors

from oracles import artin_primes_upto, sieve


@pytest.mark.parametrize("n, expected", [(2, True), (561, False), (10000019, True), (1, False), (0, False), (97, True)])
def test_is_prime_examples(n, expected):
    assert is_prime(n) is expected


def test_is_prime_matches_sieve():
    table = set(sieve(20000).tolist())
    assert [n for n in range(20001) if is_prime(n)] == sorted(table)


def test_is_prime_strong_pseudoprimes():
    # strong pseudoprimes to several small bases
    for n in (2047, 3215031751, 3825123056546413051):
        assert not is_prime(n)
    assert is_prime(2**61 - 1)
    with pytest.raises(ValueError):
        is_prime(2**64 + 13)


@pytest.mark.parametrize("n, expected", [(11, True), (7, False), (13, True), (3, True), (17, False)])
def test_is_artin_prime_examples(n, expected):
    assert is_artin_prime(n) is expected


def test_is_artin_prime_matches_order_oracle():
    assert [n for n in range(3, 5000) if is_artin_prime(n)] == artin_primes_upto(4999)


def test_is_artin_prime_rejects_small():
    with pytest.raises(ValueError):
        is_artin_prime(2)


def test_prime_factors():
    assert prime_factors(1) == []
    assert prime_factors(360) == [2, 3, 5]
    big = 1000003 * 1000033  # both above the trial-division limit
    assert prime_factors(big * 4) == [2, 1000003, 1000033]


@pytest.mark.parametrize("n_min, expected", [(3, 3), (6, 11), (12, 13), (14, 19)])
def test_next_artin_prime_examples(n_min, expected, tmp_path):
    assert next_artin_prime(n_min, cache=tmp_path / "c.txt") == expected


def test_next_artin_prime_ten_million_matches_brute_force(tmp_path):
    got = next_artin_prime(10**7, cache=tmp_path / "c.txt")
    n = 10**7
    # brute force: every candidate prime below the answer fails the order test
    while n < got:
        assert not (is_prime(n) and pow(2, (n - 1) // 2, n) != 1 and is_artin_prime(n))
        n += 1
    assert is_artin_prime(got)


def test_cache_is_written_and_validated(tmp_path):
    path = tmp_path / "c.txt"
    first = min(p for p in artin_primes_upto(2000) if p >= 1000)
    assert next_artin_prime(1000, cache=path) == first
    assert path.read_text().split() == ["1000", str(first)]
    # a corrupt entry is ignored and recomputed
    path.write_text("2000 2001\n")
    expected = min(p for p in artin_primes_upto(3000) if p >= 2000)
    assert next_artin_prime(2000, cache=path) == expected


def test_search_cap_and_range():
    primes._next_artin_prime_uncached.cache_clear()
    with pytest.raises(SearchLimitError):
        next_artin_prime(8, cap=2, cache=False)
    with pytest.raises(ValueError):
        next_artin_prime(2)
    with pytest.raises(ValueError):
        next_artin_prime(2**31 + 1)


def test_env_cache_path(monkeypatch, tmp_path):
    monkeypatch.setenv(primes.CACHE_ENV, str(tmp_path / "x.txt"))
    assert primes.default_cache_path() == tmp_path / "x.txt"
