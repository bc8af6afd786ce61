"""Simulated three-party GHZ device and Santha-Vazirani input source.

The device samples from the white-noise GHZ behaviour analytically rather
than simulating a statevector each round. Input 0 measures Pauli Y and
input 1 Pauli X on ``(|000> + i|111>)/sqrt(2)``; with that mapping the three
positive Mermin terms have correlator +1 and ``<YYY>`` is -1.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np

from .bitstore import RoundLog

SvStrategy = Literal["honest", "constant-bias", "adversarial-pattern"]
SV_STRATEGIES = ("honest", "constant-bias", "adversarial-pattern")

# Ideal correlators E[xyz] for the input mapping above.
IDEAL_CORRELATORS = {(0, 1, 1): 1, (1, 0, 1): 1, (1, 1, 0): 1, (0, 0, 0): -1}
ADVERSARIAL_TARGET = (0, 0, 0)
INPUT_BASES = ("Y", "X")


@dataclass(frozen=True)
class SvSimConfig:
    eps_SV: float = 0.0
    strategy: SvStrategy = "honest"

    def __post_init__(self):
        if not 0 <= self.eps_SV <= 0.5:
            raise ValueError("eps_SV must lie in [0, 1/2]")
        if self.strategy not in SV_STRATEGIES:
            raise ValueError(f"unknown SV strategy {self.strategy!r}")


@dataclass(frozen=True)
class SimConfig:
    visibility: float = 1.0
    frac_fixed_signalling: float = 0.0
    frac_random_signalling: float = 0.0
    rng_seed: int = 0
    input_source: SvSimConfig = field(default_factory=SvSimConfig)

    def __post_init__(self):
        if not 0 <= self.visibility <= 1:
            raise ValueError("visibility must lie in [0, 1]")
        ff, fr = self.frac_fixed_signalling, self.frac_random_signalling
        if not (0 <= ff <= 1 and 0 <= fr <= 1 and ff + fr <= 1):
            raise ValueError("signalling fractions must be in [0, 1] and sum to at most 1")
        if not 0 <= self.rng_seed < 1 << 64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        data = dict(data)
        data["input_source"] = SvSimConfig(**data.get("input_source", {}))
        return cls(**data)


def ghz_conditional(x: int, y: int, z: int, a: int, b: int, c: int, v):
    """``p(abc|xyz)`` of the visibility-``v`` GHZ box; exact when ``v`` is a Fraction."""
    e = IDEAL_CORRELATORS.get((x, y, z), 0)
    sign = -1 if (a ^ b ^ c) else 1
    return (1 + v * sign * e) / 8


def ghz_table(v) -> np.ndarray:
    """8x8 table ``p[4x+2y+z, 4a+2b+c]`` as floats."""
    out = np.empty((8, 8))
    for s, o in itertools.product(range(8), range(8)):
        out[s, o] = ghz_conditional(s >> 2, (s >> 1) & 1, s & 1, o >> 2, (o >> 1) & 1, o & 1, v)
    return out


def statevector_table(v: float = 1.0) -> np.ndarray:
    """Independent check of :func:`ghz_table` from the three-qubit state and projectors."""
    psi = np.zeros(8, complex)
    psi[0], psi[7] = 1 / np.sqrt(2), 1j / np.sqrt(2)
    rho = v * np.outer(psi, psi.conj()) + (1 - v) * np.eye(8) / 8
    paulis = {"X": np.array([[0, 1], [1, 0]], complex), "Y": np.array([[0, -1j], [1j, 0]])}
    out = np.empty((8, 8))
    for s, o in itertools.product(range(8), range(8)):
        inputs = (s >> 2, (s >> 1) & 1, s & 1)
        outputs = (o >> 2, (o >> 1) & 1, o & 1)
        proj = np.ones((1, 1), complex)
        for inp, outp in zip(inputs, outputs):
            # outcome 0 is the +1 eigenspace
            sign = 1 - 2 * outp
            proj = np.kron(proj, (np.eye(2) + sign * paulis[INPUT_BASES[inp]]) / 2)
        out[s, o] = float(np.real(np.trace(proj @ rho)))
    return out


def fixed_signalling_box(x: int, y: int, z: int) -> tuple[int, int, int]:
    """Deterministic box: ``a = b = 0``, ``c = 1`` only on input ``000``."""
    return 0, 0, int((x, y, z) == (0, 0, 0))


def fixed_signalling_table() -> np.ndarray:
    out = np.zeros((8, 8))
    for s in range(8):
        a, b, c = fixed_signalling_box(s >> 2, (s >> 1) & 1, s & 1)
        out[s, 4 * a + 2 * b + c] = 1.0
    return out


def _role_rngs(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(3)
    return {
        role: np.random.Generator(np.random.Philox(child))
        for role, child in zip(("inputs", "device", "injection"), children)
    }


def sample_round(x: int, y: int, z: int, config: SimConfig, rng: np.random.Generator) -> tuple[int, int, int]:
    """One round with a single generator; :class:`SimulatedDevice` is the batched equivalent."""
    u = rng.random()
    if u < config.frac_fixed_signalling:
        return fixed_signalling_box(x, y, z)
    if u < config.frac_fixed_signalling + config.frac_random_signalling:
        mask = rng.integers(0, 8)
        return x ^ (mask >> 2), y ^ ((mask >> 1) & 1), z ^ (mask & 1)
    a, b = (int(v) for v in rng.integers(0, 2, size=2))
    e = IDEAL_CORRELATORS.get((x, y, z), 0)
    parity = int(rng.random() >= (1 + config.visibility * e) / 2)
    return a, b, a ^ b ^ parity


def sv_bit_probability(config: SvSimConfig, history) -> float:
    """Probability that the next bit is 0 given previously drawn bits."""
    eps = config.eps_SV
    if config.strategy == "honest":
        return 0.5
    if config.strategy == "constant-bias":
        return 0.5 + eps
    pos = len(history) % 3
    prefix = tuple(history[len(history) - pos :]) if pos else ()
    if prefix != ADVERSARIAL_TARGET[:pos]:
        return 0.5
    return 0.5 + eps if ADVERSARIAL_TARGET[pos] == 0 else 0.5 - eps


def sample_sv_bit(config: SvSimConfig, history, rng: np.random.Generator) -> int:
    return int(rng.random() >= sv_bit_probability(config, history))


class SvSource:
    """Stream of SV bits; ``draw`` continues where the previous call stopped.

    Bits are ``u >= P(0)`` for one uniform ``u`` per bit, so the stream does
    not depend on how draws are chunked.
    """

    def __init__(self, config: SvSimConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.consumed = 0
        self._prefix: list[int] = []  # bits of the unfinished triple

    def draw(self, k: int) -> np.ndarray:
        u = self.rng.random(k)
        if self.config.strategy != "adversarial-pattern":
            out = (u >= sv_bit_probability(self.config, ())).astype(np.uint8)
        else:
            out = self._draw_pattern(u)
        self.consumed += k
        return out

    def _draw_pattern(self, u: np.ndarray) -> np.ndarray:
        out = np.empty(u.size, np.uint8)
        i = 0
        while i < u.size and self._prefix:
            out[i] = self._one(u[i])
            i += 1
        full = (u.size - i) // 3 * 3
        if full:
            trip = u[i : i + full].reshape(-1, 3)
            eps = self.config.eps_SV
            match = np.ones(trip.shape[0], bool)
            bits = np.empty(trip.shape, np.uint8)
            for pos, target in enumerate(ADVERSARIAL_TARGET):
                bias = eps if target == 0 else -eps
                p0 = np.where(match, 0.5 + bias, 0.5)
                bits[:, pos] = trip[:, pos] >= p0
                match &= bits[:, pos] == target
            out[i : i + full] = bits.ravel()
            i += full
        while i < u.size:
            out[i] = self._one(u[i])
            i += 1
        return out

    def _one(self, u: float) -> int:
        bit = int(u >= sv_bit_probability(self.config, self._prefix))
        self._prefix.append(bit)
        if len(self._prefix) == 3:
            self._prefix = []
        return bit


class SimulatedDevice:
    """Batched GHZ device with optional signalling injection."""

    def __init__(self, config: SimConfig, rngs: dict[str, np.random.Generator] | None = None):
        self.config = config
        rngs = rngs or _role_rngs(config.rng_seed)
        self._rng = rngs["device"]
        self._inject = rngs["injection"]

    def respond(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        cfg = self.config
        n = x.size
        x, y, z = (np.asarray(v, np.uint8) for v in (x, y, z))
        # Every draw happens regardless of configuration so streams stay aligned.
        route = self._inject.random(n)
        mask = self._inject.integers(0, 8, size=n, dtype=np.uint8)
        ab = self._rng.integers(0, 4, size=n, dtype=np.uint8)
        u = self._rng.random(n)
        a, b = ab >> 1, ab & 1
        e = np.zeros(n)
        setting = 4 * x + 2 * y + z
        for (sx, sy, sz), val in IDEAL_CORRELATORS.items():
            e[setting == 4 * sx + 2 * sy + sz] = val
        parity = (u >= (1 + cfg.visibility * e) / 2).astype(np.uint8)
        c = a ^ b ^ parity

        fixed = route < cfg.frac_fixed_signalling
        rand = ~fixed & (route < cfg.frac_fixed_signalling + cfg.frac_random_signalling)
        a = np.where(fixed, 0, np.where(rand, x ^ (mask >> 2), a)).astype(np.uint8)
        b = np.where(fixed, 0, np.where(rand, y ^ ((mask >> 1) & 1), b)).astype(np.uint8)
        c = np.where(fixed, setting == 0, np.where(rand, z ^ (mask & 1), c)).astype(np.uint8)
        return a, b, c


def make_sources(config: SimConfig) -> tuple[SimulatedDevice, SvSource]:
    rngs = _role_rngs(config.rng_seed)
    return SimulatedDevice(config, rngs), SvSource(config.input_source, rngs["inputs"])


def collect_rounds(device, sv, n: int, metadata: dict | None = None) -> RoundLog:
    """Draw ``3n`` input bits from ``sv`` and query ``device`` once per triple."""
    if n < 1:
        raise ValueError("need at least one round")
    inputs = sv.draw(3 * n).reshape(n, 3)
    x, y, z = inputs[:, 0], inputs[:, 1], inputs[:, 2]
    a, b, c = device.respond(x, y, z)
    return RoundLog.from_arrays(x, y, z, a, b, c, metadata)


def run_rounds(config: SimConfig, n: int) -> RoundLog:
    device, sv = make_sources(config)
    return collect_rounds(device, sv, n, {"sim_config": config.to_dict()})
