"""Scalar entropy and rate calculus for Mermin-based randomness amplification.

All logarithms are base 2. A device round yields two extractor bits ``(a, b)``;
``log2_pQ`` always refers to the guessing probability of the whole ``2n``-bit
device string.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Literal, Optional

from . import extractors
from .primes import next_artin_prime

SV_RAZ_CAP = 2**-0.5 - 0.5  # largest eps_SV with c_SV > 1/2
SOLVER_TOL = 1e-4
BITS_PER_ROUND = 2

ExtractorName = Literal["dodis", "raz"]


def sv_rate(eps_SV: float) -> float:
    """Per-bit min-entropy rate ``-log2(1/2 + eps_SV)`` of an SV source."""
    if not 0 <= eps_SV <= 0.5:
        raise ValueError(f"eps_SV={eps_SV} outside [0, 1/2]")
    return -math.log2(0.5 + eps_SV)


def mermin_guessing_prob(M: float) -> float:
    """Maximal probability of guessing the pair ``(a, b)`` given Mermin value ``M``."""
    if M > 4 + 1e-12:
        raise ValueError(f"Mermin value {M} exceeds the algebraic maximum 4")
    if M <= 2:
        return 1.0
    if M >= 3:
        M = min(M, 4.0)
        return 0.75 - M / 8 + math.sqrt(3) * math.sqrt(max(0.0, (M / 8) * (0.5 - M / 8)))
    return 1.5 - M / 4


def adjust_mermin(M_obs: float, eps_SV: float, Delta_f: float) -> float:
    """Lower bound on the Mermin value a uniform-input test would have shown."""
    if not 0 <= eps_SV < 0.5:
        raise ValueError("eps_SV must lie in [0, 1/2); deterministic inputs certify nothing")
    return 4 - (4 - M_obs + Delta_f) / (8 * (0.5 - eps_SV) ** 3)


@dataclass(frozen=True)
class AccumulationMode:
    """IID product bound, or the memory-attack bound ``2^(-n t + v sqrt(n))``.

    For ``MBQA`` the per-round rate ``t`` defaults to ``-log2 P_g`` when left
    as ``None``; ``v`` must come from configuration (see :func:`calibrate_v`).
    """

    kind: Literal["IID", "MBQA"] = "IID"
    v: float = 0.0
    t: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("IID", "MBQA"):
            raise ValueError(f"unknown accumulation mode {self.kind!r}")
        if self.v < 0 or (self.t is not None and self.t < 0):
            raise ValueError("t and v must be non-negative")

    @classmethod
    def iid(cls) -> "AccumulationMode":
        return cls("IID")

    @classmethod
    def mbqa(cls, v: float, t: Optional[float] = None) -> "AccumulationMode":
        return cls("MBQA", v, t)

    def to_dict(self) -> dict:
        return asdict(self)


IID = AccumulationMode.iid()


def accumulate(P_g: float, n: float, mode: AccumulationMode = IID) -> float:
    """``log2`` of the guessing probability of ``n`` rounds' outcome pairs."""
    if not 0 < P_g <= 1:
        raise ValueError("P_g must lie in (0, 1]")
    if n < 1:
        raise ValueError("need at least one round")
    if mode.kind == "IID":
        return n * math.log2(P_g)
    t = -math.log2(P_g) if mode.t is None else mode.t
    return min(0.0, -n * t + mode.v * math.sqrt(n))


def confidence_width(n: int, eps_est: float) -> float:
    """Hoeffding width for the Mermin estimate; per-round increments span a range of 8."""
    if n < 1 or not 0 < eps_est < 1:
        raise ValueError("need n >= 1 and eps_est in (0, 1)")
    return 8 * math.sqrt(math.log(2 / eps_est) / (2 * n))


def certified_MU(M_obs: float, eps_SV: float, Delta_f: float) -> float:
    return adjust_mermin(M_obs, eps_SV, Delta_f) if eps_SV < 0.5 else -math.inf


def _pg_of(M_U: float) -> float:
    return mermin_guessing_prob(M_U) if M_U > 2 else 1.0


@dataclass(frozen=True)
class RateReport:
    M_obs: float
    eps_SV: float
    M_U: float
    Delta_f: float
    P_g: float
    c_SV: float
    c_Q: float
    log2_pQ: float
    log2_pSV: float
    block_length: Optional[int]
    m2: int
    eta: float
    n_rounds: Optional[int]
    extractor: str
    mode: str
    below_classical: bool

    def to_dict(self) -> dict:
        return asdict(self)


def _finite_dodis_m2(c_SV: float, log2_pQ: float, n_rounds: int, eps_sec: float, pad: bool) -> tuple[int, int]:
    bits = BITS_PER_ROUND * n_rounds
    block = next_artin_prime(bits) if pad else bits
    m2 = extractors.dodis_output_size(-bits * c_SV, log2_pQ, block, eps_sec)
    return m2, block


def efficiency(
    M_obs: float,
    eps_SV: float,
    n_rounds: Optional[int] = None,
    Delta_f: float = 0.0,
    eps_sec: float = 1e-7,
    extractor: ExtractorName = "dodis",
    mode: AccumulationMode = IID,
    *,
    pad_to_artin: bool = True,
) -> RateReport:
    """Output bits per device round.

    ``n_rounds=None`` is the asymptotic IID limit: finite-size constants in the
    output-size formula are dropped and the rate is taken per round.
    Otherwise the two-source block is ``2 n_rounds`` bits, zero-padded to the
    next Artin prime, and the security constants are kept.
    """
    c_SV = sv_rate(eps_SV)
    M_U = certified_MU(M_obs, eps_SV, Delta_f)
    below = M_U <= 2
    P_g = _pg_of(M_U)
    asymptotic = n_rounds is None
    if asymptotic and mode.kind != "IID":
        raise ValueError("the asymptotic limit is only defined for IID accumulation")
    n_eff = 1 if asymptotic else n_rounds
    log2_pQ = 0.0 if below else accumulate(P_g, n_eff, mode)
    c_Q = -log2_pQ / (BITS_PER_ROUND * n_eff)
    log2_pSV = -BITS_PER_ROUND * n_eff * c_SV
    block = None
    if below:
        m2, eta = 0, 0.0
    elif extractor == "dodis":
        if asymptotic:
            eta = BITS_PER_ROUND * extractors.dodis_rate(c_SV, c_Q)
            m2 = 0
        else:
            m2, block = _finite_dodis_m2(c_SV, log2_pQ, n_rounds, eps_sec, pad_to_artin)
            eta = m2 / n_rounds
    elif extractor == "raz":
        if asymptotic:
            eta = (c_SV - 0.5) / extractors.RAZ_DIVISOR * -log2_pQ if c_SV > 0.5 else 0.0
            m2 = 0
        else:
            raz = extractors.raz_params(c_SV, log2_pQ)
            m2 = raz.m2 if raz.eps_sec <= eps_sec else 0
            eta = m2 / n_rounds
    else:
        raise ValueError(f"unknown extractor {extractor!r}")
    return RateReport(
        M_obs=M_obs,
        eps_SV=eps_SV,
        M_U=M_U,
        Delta_f=Delta_f,
        P_g=P_g,
        c_SV=c_SV,
        c_Q=c_Q,
        log2_pQ=log2_pQ,
        log2_pSV=log2_pSV,
        block_length=block,
        m2=m2,
        eta=eta,
        n_rounds=n_rounds,
        extractor=extractor,
        mode=mode.kind,
        below_classical=below,
    )


def _feasible(
    eps: float,
    M_obs: float,
    Delta_f: float,
    extractor: ExtractorName,
    mode: AccumulationMode,
    n_rounds: Optional[int],
    eps_sec: float,
) -> bool:
    M_U = certified_MU(M_obs, eps, Delta_f)
    if M_U <= 2:
        return False
    c_SV = sv_rate(eps)
    P_g = mermin_guessing_prob(M_U)
    if extractor == "raz":
        if c_SV <= 0.5:
            return False
        if n_rounds is None:
            return True
        log2_pQ = accumulate(P_g, n_rounds, mode)
        return extractors.raz_params(c_SV, log2_pQ).m2 >= max(1, extractors.raz_min_output(eps_sec))
    if extractor != "dodis":
        raise ValueError(f"unknown extractor {extractor!r}")
    if n_rounds is None:
        return c_SV - math.log2(P_g) / BITS_PER_ROUND > 1
    log2_pQ = accumulate(P_g, n_rounds, mode)
    bits = BITS_PER_ROUND * n_rounds
    return extractors.dodis_output_size(-bits * c_SV, log2_pQ, bits, eps_sec) > 0


def max_sv_solver(
    M_obs: float,
    Delta_f: float,
    extractor: ExtractorName = "dodis",
    mode: AccumulationMode = IID,
    n_rounds: Optional[int] = None,
    eps_sec: float = 1e-7,
    tol: float = SOLVER_TOL,
) -> float:
    """Largest ``eps_SV`` (to within ``tol``) that still yields a positive output.

    ``n_rounds=None`` gives the asymptotic criterion: for the cyclic-shift
    extractor ``c_SV + c_Q > 1`` per bit, for the Raz sizing ``c_SV > 1/2``
    together with ``M_U > 2``. With finite ``n_rounds`` the full output-size
    formula (security constants and accumulation penalty included) must be
    positive; for Raz it must also reach ``eps_sec``.
    """
    if M_obs > 4:
        raise ValueError("Mermin value above 4")
    if M_obs - 2 <= Delta_f or not _feasible(0.0, M_obs, Delta_f, extractor, mode, n_rounds, eps_sec):
        return 0.0
    lo, hi = 0.0, 0.5
    if extractor == "raz":
        hi = SV_RAZ_CAP
    while hi - lo > tol / 4:
        mid = 0.5 * (lo + hi)
        if _feasible(mid, M_obs, Delta_f, extractor, mode, n_rounds, eps_sec):
            lo = mid
        else:
            hi = mid
    return lo


def calibrate_v(
    target_eps: float,
    M_obs: float,
    Delta_f: float,
    n_rounds: int,
    extractor: ExtractorName = "dodis",
    eps_sec: float = 1e-7,
    v_max: float = 1e5,
) -> float:
    """Penalty coefficient ``v`` whose MBQA solver result equals ``target_eps``.

    The memory-attack constants are not derived here; this fits a single ``v``
    to one reference entry so it can be reused for others.
    """

    def solve(v: float) -> float:
        return max_sv_solver(M_obs, Delta_f, extractor, AccumulationMode.mbqa(v), n_rounds, eps_sec, tol=1e-6)

    lo, hi = 0.0, v_max
    if solve(lo) < target_eps:
        raise ValueError("target is above the IID value; no non-negative v reaches it")
    if solve(hi) > target_eps:
        raise ValueError("v_max too small to reach the target")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if solve(mid) >= target_eps:
            lo = mid
        else:
            hi = mid
    return lo


# Reference entry used to fit v: (target eps_SV, M_obs, Delta_f, n_rounds, extractor).
REFERENCE_MBQA = (0.067, 3.35, 1e-3, 10**7, "dodis")


@lru_cache(maxsize=1)
def reference_v() -> float:
    """``v`` fitted to :data:`REFERENCE_MBQA`; the default whenever none is configured."""
    target, M_obs, Delta_f, n, extractor = REFERENCE_MBQA
    return calibrate_v(target, M_obs, Delta_f, n, extractor)


def assumption_a_entropy(M_obs: float, n_s: float, n: float) -> float:
    """Total IID min-entropy ``-n (1 - n_s) log2 P_g(M_obs / (1 - n_s))`` under random signalling."""
    if not 0 <= n_s < 1:
        raise ValueError("n_s must lie in [0, 1)")
    M_hat = M_obs / (1 - n_s)
    if M_hat > 4 + 1e-12:
        raise ValueError(f"n_s={n_s} exceeds the consistency limit 1 - M_obs/4")
    return -n * (1 - n_s) * math.log2(mermin_guessing_prob(M_hat))


def assumption_b_mermin(M_obs: float, n_s: float) -> float:
    """Worst-case Mermin value of the non-signalling rounds under fixed signalling."""
    if not 0 <= n_s < 1:
        raise ValueError("n_s must lie in [0, 1)")
    return (M_obs - 4 * n_s) / (1 - n_s)
