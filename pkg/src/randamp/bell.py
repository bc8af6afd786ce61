"""Behaviour estimation, Mermin evaluation and signalling analysis.

Settings and outcomes are indexed ``4x + 2y + z`` and ``4a + 2b + c``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from . import entropy
from .bitstore import RoundLog
from .entropy import AccumulationMode

Assumption = Literal["A", "B", "C"]

PARTIES = ("A", "B", "C")
# Ordered (sender, receiver) pairs; position in this tuple is the tie-break order.
PARTY_PAIRS = (("A", "B"), ("A", "C"), ("B", "A"), ("B", "C"), ("C", "A"), ("C", "B"))
MERMIN_TERMS = (((0, 1, 1), 1), ((1, 0, 1), 1), ((1, 1, 0), 1), ((0, 0, 0), -1))
SIGNALLING_FACTOR = 6
DEFAULT_CI_EPS = 1e-6


class MissingSettingError(ValueError):
    def __init__(self, setting: tuple[int, int, int]):
        self.setting = setting
        super().__init__(f"input setting (x,y,z)={setting} never observed")


class SignallingInconsistency(ValueError):
    pass


def setting_index(x: int, y: int, z: int) -> int:
    return 4 * x + 2 * y + z


def _bits3(i: int) -> tuple[int, int, int]:
    return (i >> 2) & 1, (i >> 1) & 1, i & 1


_PARITY = np.array([bin(o).count("1") & 1 for o in range(8)])


@dataclass(eq=False)
class BehaviorTable:
    """Outcome counts per input setting; ``counts[s, o]``."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.shape != (8, 8) or (self.counts < 0).any():
            raise ValueError("counts must be a non-negative 8x8 table")

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def check_complete(self) -> None:
        for s, total in enumerate(self.totals):
            if total == 0:
                raise MissingSettingError(_bits3(s))

    @property
    def probabilities(self) -> np.ndarray:
        self.check_complete()
        return self.counts / self.totals[:, None]

    def p(self, abc: tuple[int, int, int], xyz: tuple[int, int, int]) -> float:
        return float(self.probabilities[setting_index(*xyz), setting_index(*abc)])

    def to_dict(self) -> dict:
        return {"counts": self.counts.tolist(), "totals": self.totals.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "BehaviorTable":
        table = cls(np.array(data["counts"]))
        if "totals" in data and list(data["totals"]) != table.totals.tolist():
            raise ValueError("totals do not match the counts")
        return table

    @classmethod
    def from_probabilities(cls, probs: np.ndarray, per_setting: int = 1) -> "BehaviorTable":
        """Scale an exact distribution into a table (used for analytic checks)."""
        return _ProbabilityTable(np.asarray(probs, dtype=float), per_setting)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, BehaviorTable) and bool(np.array_equal(self.counts, other.counts))


class _ProbabilityTable(BehaviorTable):
    """Table backed by exact probabilities instead of counts."""

    def __init__(self, probs: np.ndarray, per_setting: int):
        if probs.shape != (8, 8) or not np.allclose(probs.sum(axis=1), 1):
            raise ValueError("probabilities must be an 8x8 row-stochastic table")
        self._probs = probs
        self.counts = np.rint(probs * per_setting).astype(np.int64)
        self._per_setting = per_setting

    @property
    def totals(self) -> np.ndarray:
        return np.full(8, self._per_setting, dtype=np.int64)

    @property
    def probabilities(self) -> np.ndarray:
        return self._probs


def estimate_behavior(log: RoundLog) -> BehaviorTable:
    packed = log.packed.astype(np.int64)
    # bits 0..2 are (x, y, z) and 3..5 are (a, b, c), least significant first
    s = 4 * (packed & 1) + 2 * ((packed >> 1) & 1) + ((packed >> 2) & 1)
    o = 4 * ((packed >> 3) & 1) + 2 * ((packed >> 4) & 1) + ((packed >> 5) & 1)
    counts = np.bincount(s * 8 + o, minlength=64).reshape(8, 8)
    table = BehaviorTable(counts)
    table.check_complete()
    return table


def correlator(table: BehaviorTable, x: int, y: int, z: int) -> float:
    row = table.probabilities[setting_index(x, y, z)]
    return float(row[_PARITY == 0].sum() - row[_PARITY == 1].sum())


def correlators(table: BehaviorTable) -> dict[str, float]:
    return {f"{x}{y}{z}": correlator(table, x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)}


def mermin_value(table: BehaviorTable) -> float:
    return sum(sign * correlator(table, *xyz) for xyz, sign in MERMIN_TERMS)


def mermin_sigma(table: BehaviorTable) -> float:
    """Binomial standard error of :func:`mermin_value`."""
    var = 0.0
    totals = table.totals
    for xyz, _ in MERMIN_TERMS:
        e = correlator(table, *xyz)
        var += (1 - e * e) / totals[setting_index(*xyz)]
    return math.sqrt(var)


@dataclass(frozen=True)
class PairSignalling:
    sender: str
    receiver: str
    s: float
    alpha: int  # receiver output
    beta: int  # receiver input
    gamma: int  # input of the traced-out party
    ci: float


@dataclass(frozen=True)
class SignallingReport:
    pairwise: tuple[PairSignalling, ...]
    max_pair: int
    s_max: float
    n_s: float
    n_s_debiased: float
    ci_eps: float
    factor: int = SIGNALLING_FACTOR

    @property
    def ci(self) -> float:
        return self.pairwise[self.max_pair].ci

    def to_dict(self) -> dict:
        out = asdict(self)
        out["pairwise"] = [asdict(p) for p in self.pairwise]
        return out


def _receiver_marginal(probs: np.ndarray, receiver: int) -> np.ndarray:
    """``marg[s, alpha]`` = probability that the receiver outputs ``alpha`` in setting ``s``."""
    bit = 2 - receiver
    out = np.zeros((8, 2))
    for o in range(8):
        out[:, (o >> bit) & 1] += probs[:, o]
    return out


def _setting(sender: int, receiver: int, xi: int, beta: int, gamma: int) -> int:
    inputs = [0, 0, 0]
    third = 3 - sender - receiver
    inputs[sender], inputs[receiver], inputs[third] = xi, beta, gamma
    return setting_index(*inputs)


def signalling_fraction(table: BehaviorTable, ci_eps: float = DEFAULT_CI_EPS) -> SignallingReport:
    """Pairwise signalling quantifiers and the aggregate fraction ``n_s = 6 max s``.

    Each ``ci`` is a Hoeffding half-width for the difference of two empirical
    frequencies, union-bounded over all cells searched.
    """
    probs = table.probabilities
    totals = table.totals.astype(float)
    cells = len(PARTY_PAIRS) * 8
    log_term = math.log(2 * cells / ci_eps)
    pairs = []
    best, best_s = 0, -1.0
    for idx, (snd, rcv) in enumerate(PARTY_PAIRS):
        i, j = PARTIES.index(snd), PARTIES.index(rcv)
        marg = _receiver_marginal(probs, j)
        pair_best = None
        for alpha in (0, 1):
            for beta in (0, 1):
                for gamma in (0, 1):
                    s0 = _setting(i, j, 0, beta, gamma)
                    s1 = _setting(i, j, 1, beta, gamma)
                    s = abs(marg[s0, alpha] - marg[s1, alpha])
                    if pair_best is None or s > pair_best[0]:
                        ci = math.sqrt(log_term * (1 / totals[s0] + 1 / totals[s1]) / 2)
                        pair_best = (s, alpha, beta, gamma, ci)
        s, alpha, beta, gamma, ci = pair_best
        pairs.append(PairSignalling(snd, rcv, float(s), alpha, beta, gamma, float(ci)))
        if s > best_s:
            best, best_s = idx, s
    s_max = pairs[best].s
    n_s = min(1.0, SIGNALLING_FACTOR * s_max)
    n_s_deb = min(1.0, SIGNALLING_FACTOR * max(0.0, s_max - pairs[best].ci))
    return SignallingReport(tuple(pairs), best, s_max, n_s, n_s_deb, ci_eps)


@dataclass(frozen=True)
class CertifiedEntropy:
    assumption: str
    n_s: float
    M_obs: float
    M_hat_ns: float
    usable_rounds: float
    M_U: float
    P_g: float
    log2_pQ: float
    certified: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def certify_entropy(
    M_obs: float,
    n: int,
    n_s: float,
    assumption: Assumption,
    eps_SV: float,
    Delta_f: float,
    mode: AccumulationMode = entropy.IID,
) -> CertifiedEntropy:
    """Certified ``log2 p_Q`` for ``n`` rounds given the signalling fraction ``n_s``.

    Under A the signalling rounds are assumed not to occur (their effect only
    raises the certifiable entropy). Under B, and C taken at its worst case,
    signalling rounds are counted as Mermin value 4 and dropped.
    """
    if not 0 <= n_s <= 1:
        raise ValueError("n_s must lie in [0, 1]")
    if assumption == "A":
        if n_s > 1 - M_obs / 4 + 1e-12:
            raise SignallingInconsistency(f"n_s={n_s:.4g} exceeds 1 - M_obs/4 = {1 - M_obs / 4:.4g}")
        M_hat, usable = M_obs, float(n)
    elif assumption in ("B", "C"):
        if n_s >= 1:
            return CertifiedEntropy(assumption, n_s, M_obs, -4.0, 0.0, -math.inf, 1.0, 0.0, False, "all rounds may signal")
        M_hat = entropy.assumption_b_mermin(M_obs, n_s)
        usable = n * (1 - n_s)
    else:
        raise ValueError(f"unknown assumption {assumption!r}")
    if M_hat <= 2:
        return CertifiedEntropy(assumption, n_s, M_obs, M_hat, usable, -math.inf, 1.0, 0.0, False, "adjusted Mermin value at or below the classical bound")
    M_U = entropy.certified_MU(M_hat, eps_SV, Delta_f)
    if M_U <= 2:
        return CertifiedEntropy(assumption, n_s, M_obs, M_hat, usable, M_U, 1.0, 0.0, False, "Mermin value after input correction at or below the classical bound")
    P_g = entropy.mermin_guessing_prob(M_U)
    log2_pQ = entropy.accumulate(P_g, usable, mode) if usable >= 1 else 0.0
    ok = log2_pQ < 0
    return CertifiedEntropy(assumption, n_s, M_obs, M_hat, usable, M_U, P_g, log2_pQ, ok, "" if ok else "no accumulated entropy")
