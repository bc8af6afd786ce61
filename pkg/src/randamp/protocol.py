"""End-to-end protocol: collect rounds, verify, extract, certify.

A run writes four artifacts next to each other::

    <out>            final output bits (bitstore format)
    <out>.rounds     round log
    <out>.sv         SV bits consumed after the round inputs
    <out>.cert.json  canonical certificate

:func:`verify_certificate` replays the protocol from the artifacts and
compares every certificate field.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np

from . import bell, device, entropy, extractors
from .bitstore import BitString, CorruptFileError, RoundLog, concat, parse_bits, parse_roundlog, write_bits, write_roundlog
from .entropy import AccumulationMode
from .primes import next_artin_prime

CERT_FORMAT = "randamp-certificate/1"
FLOAT_DIGITS = 12
Flow = Literal["amplify", "privatize"]


@dataclass(frozen=True)
class ProtocolConfig:
    """Protocol parameters.

    ``Delta_f=None`` derives the Mermin confidence width from ``n_rounds``
    and ``eps_est``; ``M_threshold=None`` means ``2 + Delta_f``.
    """

    n_rounds: int
    eps_SV: float
    eps_sec: float = 1e-7
    Delta_f: Optional[float] = None
    eps_est: float = 1e-7
    M_threshold: Optional[float] = None
    assumption: bell.Assumption = "B"
    mode: AccumulationMode = entropy.IID
    flow: Flow = "privatize"
    extension: bool = False
    alpha: int = 2
    nonce: str = ""

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be positive")
        if not 0 <= self.eps_SV < 0.5:
            raise ValueError("eps_SV must lie in [0, 1/2)")
        if not 0 < self.eps_sec < 1:
            raise ValueError("eps_sec must lie in (0, 1)")
        if self.Delta_f is not None and self.Delta_f < 0:
            raise ValueError("Delta_f must be non-negative")
        if self.M_threshold is not None and self.M_threshold <= 2:
            raise ValueError("M_threshold must exceed the classical bound 2")
        if self.assumption not in ("A", "B", "C"):
            raise ValueError(f"unknown assumption {self.assumption!r}")
        if self.flow not in ("amplify", "privatize"):
            raise ValueError(f"unknown flow {self.flow!r}")
        if self.alpha < 2:
            raise ValueError("alpha must be at least 2")

    @property
    def delta_f(self) -> float:
        if self.Delta_f is not None:
            return self.Delta_f
        return entropy.confidence_width(self.n_rounds, self.eps_est)

    @property
    def threshold(self) -> float:
        return self.M_threshold if self.M_threshold is not None else 2 + self.delta_f

    def to_dict(self) -> dict:
        out = asdict(self)
        out["mode"] = self.mode.to_dict()
        out["Delta_f_resolved"] = self.delta_f
        out["M_threshold_resolved"] = self.threshold
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ProtocolConfig":
        data = {k: v for k, v in data.items() if not k.endswith("_resolved")}
        data["mode"] = AccumulationMode(**data["mode"])
        return cls(**data)


@dataclass(frozen=True)
class Abort:
    reason: str
    M_obs: Optional[float] = None
    detail: str = ""

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True)
class Verification:
    table: bell.BehaviorTable
    M_obs: float
    signalling: bell.SignallingReport
    entropy: bell.CertifiedEntropy


@dataclass
class RunResult:
    output: BitString
    certificate: dict
    log: RoundLog
    sv_bits: BitString


def verify(table: bell.BehaviorTable, config: ProtocolConfig, n: Optional[int] = None) -> Union[Verification, Abort]:
    """Mermin test, signalling analysis and entropy certification.

    Certification uses the raw signalling fraction. Under Assumption A the
    only use of ``n_s`` is the consistency limit, checked with the debiased
    value so that sampling noise alone cannot trigger it.
    """
    n = int(table.totals.sum()) if n is None else n
    M_obs = bell.mermin_value(table)
    report = bell.signalling_fraction(table)
    if M_obs < config.threshold:
        return Abort("Mermin below threshold", M_obs, f"M_obs={M_obs:.6g} < {config.threshold:.6g}")
    n_s = report.n_s_debiased if config.assumption == "A" else report.n_s
    try:
        cert = bell.certify_entropy(M_obs, n, n_s, config.assumption, config.eps_SV, config.delta_f, config.mode)
    except bell.SignallingInconsistency as exc:
        return Abort("signalling inconsistency", M_obs, str(exc))
    if not cert.certified:
        return Abort("no certifiable randomness", M_obs, cert.reason)
    return Verification(table, M_obs, report, cert)


class RecordedDevice:
    """Device oracle that answers from a stored round log."""

    def __init__(self, log: RoundLog):
        self.log = log
        self.pos = 0

    def respond(self, x, y, z):
        k = len(x)
        if self.pos + k > len(self.log):
            raise ValueError("round log exhausted")
        part = self.log.packed[self.pos : self.pos + k]
        self.pos += k
        logged = RoundLog(part)
        if not (np.array_equal(logged.x, x) and np.array_equal(logged.y, y) and np.array_equal(logged.z, z)):
            raise ValueError("inputs differ from those recorded in the round log")
        return logged.a, logged.b, logged.c


class ReplaySvSource:
    """SV oracle that replays fixed bits, e.g. a log's inputs followed by a raw file."""

    def __init__(self, *parts):
        self.bits = np.concatenate([np.asarray(p, np.uint8) for p in parts]) if parts else np.zeros(0, np.uint8)
        self.consumed = 0

    def draw(self, k: int) -> np.ndarray:
        if self.consumed + k > self.bits.size:
            raise ValueError(f"SV bits exhausted: need {self.consumed + k}, have {self.bits.size}")
        out = self.bits[self.consumed : self.consumed + k]
        self.consumed += k
        return out.copy()


def _device_string(log: RoundLog) -> np.ndarray:
    """Outcomes ``a0 b0 a1 b1 ...``."""
    return np.stack([log.a, log.b], axis=1).ravel().astype(np.uint8)


def _extension(config, sv, dev_bits, seed, c_SV, log2_pQ):
    """Seeded extension; returns (bits or None, params dict or None, skip reason, drawn SV bits)."""
    m2 = seed.length
    empty = np.zeros(0, np.uint8)
    if config.flow == "amplify":
        c = c_SV
    else:
        c = -log2_pQ / dev_bits.size
    n_S = (config.alpha + 1) * m2
    if not 0.5 < c < 1:
        return None, None, f"source rate {c:.6g} outside (1/2, 1)", empty
    try:
        params = extractors.ht_params(n_S, c, config.alpha)
    except ValueError as exc:
        return None, None, str(exc), empty
    if params.log2_eps_sec > math.log2(config.eps_sec):
        return None, None, f"seeded error bound 2^{params.log2_eps_sec:.6g} above eps_sec", empty
    if config.flow == "amplify":
        source = sv.draw(n_S)
        drawn = source
    else:
        if n_S > dev_bits.size:
            return None, None, f"device string of {dev_bits.size} bits shorter than {n_S}", empty
        source = dev_bits[:n_S]
        drawn = empty
    out = extractors.ht_extract(BitString.from_bits(source), seed, params.m_S)
    return out, params.to_dict(), "", drawn


def run_protocol(config: ProtocolConfig, device_oracle, sv_oracle) -> Union[RunResult, Abort]:
    n = config.n_rounds
    log = device.collect_rounds(device_oracle, sv_oracle, n)
    table = bell.estimate_behavior(log)
    ver = verify(table, config, n)
    if isinstance(ver, Abort):
        return ver

    bits = entropy.BITS_PER_ROUND * n
    c_SV = entropy.sv_rate(config.eps_SV)
    log2_pSV = -bits * c_SV
    log2_pQ = ver.entropy.log2_pQ
    block = next_artin_prime(bits)
    m2 = extractors.dodis_output_size(log2_pSV, log2_pQ, block, config.eps_sec)
    if m2 == 0:
        return Abort("zero output size", ver.M_obs, f"log2_pQ={log2_pQ:.6g}, block={block}")
    dodis = extractors.DodisParams(block, m2, config.eps_sec)

    dev_bits = _device_string(log)
    sv_main = sv_oracle.draw(bits)
    first = extractors.dodis_extract(
        BitString.from_bits(dev_bits).padded(block), BitString.from_bits(sv_main).padded(block), m2
    )
    ht_out, ht, skipped, sv_extra = None, None, "", np.zeros(0, np.uint8)
    if config.extension:
        ht_out, ht, skipped, sv_extra = _extension(config, sv_oracle, dev_bits, first, c_SV, log2_pQ)
    output = concat(first, ht_out) if ht_out is not None else first
    sv_bits = BitString.from_bits(np.concatenate([sv_main, sv_extra]))

    cert = {
        "format": CERT_FORMAT,
        "config": config.to_dict(),
        "device_model": {"input_bases": {"0": "Y", "1": "X"}, "signalling_fraction": "6 * max pairwise s"},
        "behavior": table.to_dict(),
        "correlators": bell.correlators(table),
        "M_obs": ver.M_obs,
        "M_sigma": bell.mermin_sigma(table),
        "signalling": ver.signalling.to_dict(),
        "entropy": ver.entropy.to_dict(),
        "c_SV": c_SV,
        "log2_pSV": log2_pSV,
        "log2_pQ": log2_pQ,
        "M_U": ver.entropy.M_U,
        "extractors": {
            "dodis": {**dodis.to_dict(), "input_bits": bits},
            "seeded": ht,
            "seeded_skipped": skipped or None,
        },
        "m2": m2,
        "m_S": ht["m_S"] if ht else 0,
        "output_length": output.length,
        "sv_bits_consumed": sv_oracle.consumed if hasattr(sv_oracle, "consumed") else None,
        "created_utc": None,
    }
    return RunResult(output, cert, log, sv_bits)


# -- certificates -----------------------------------------------------------


def _normalize(obj):
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return repr(x)
        return float(f"{x:.{FLOAT_DIGITS}g}")
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_normalize(obj), sort_keys=True, indent=2) + "\n"


def artifact_paths(out: Path) -> dict[str, Path]:
    out = Path(out)
    return {
        "output": out,
        "rounds": out.with_name(out.name + ".rounds"),
        "sv": out.with_name(out.name + ".sv"),
        "certificate": out.with_name(out.name + ".cert.json"),
    }


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def attach_artifacts(result: RunResult, out: Path, timestamp: bool = False) -> dict:
    paths = artifact_paths(out)
    cert = dict(result.certificate)
    cert["artifacts"] = {
        "output": {"file": paths["output"].name, "sha256": result.output.digest()},
        "rounds": {"file": paths["rounds"].name, "sha256": result.log.digest()},
        "sv": {"file": paths["sv"].name, "sha256": result.sv_bits.digest()},
    }
    if timestamp:
        cert["created_utc"] = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return cert


def write_certificate(result: RunResult, out: Path, timestamp: bool = False) -> dict:
    """Write all four artifacts; returns the certificate as written."""
    paths = artifact_paths(out)
    cert = attach_artifacts(result, out, timestamp)
    write_bits(paths["output"], result.output)
    write_roundlog(paths["rounds"], result.log)
    write_bits(paths["sv"], result.sv_bits)
    paths["certificate"].write_text(canonical_json(cert))
    return cert


@dataclass(frozen=True)
class VerifyOutcome:
    ok: bool
    code: int
    field: str = ""
    message: str = ""


def _first_difference(a, b, prefix: str = "") -> Optional[str]:
    if isinstance(a, dict) and isinstance(b, dict):
        for key in sorted(set(a) | set(b)):
            path = f"{prefix}.{key}" if prefix else key
            if key not in a or key not in b:
                return path
            diff = _first_difference(a[key], b[key], path)
            if diff:
                return diff
        return None
    if isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            return prefix
        for i, (x, y) in enumerate(zip(a, b)):
            diff = _first_difference(x, y, f"{prefix}[{i}]")
            if diff:
                return diff
        return None
    if type(a) is not type(b) or a != b:
        return prefix or "<root>"
    return None


def verify_certificate(cert_path: Path) -> VerifyOutcome:
    """Check digests, then replay the protocol and compare every field.

    Exit-code convention: 0 pass, 4 mismatch or malformed certificate.
    Missing or unreadable artifacts raise ``OSError``.
    """
    cert_path = Path(cert_path)
    raw = cert_path.read_bytes()
    try:
        cert = json.loads(raw)
        arts = cert["artifacts"]
        names = {k: arts[k]["file"] for k in ("output", "rounds", "sv")}
        digests = {k: arts[k]["sha256"] for k in ("output", "rounds", "sv")}
        config = ProtocolConfig.from_dict(cert["config"])
    except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
        return VerifyOutcome(False, 4, "<certificate>", f"malformed certificate: {exc}")
    for key, name in names.items():
        if not isinstance(name, str) or Path(name).name != name:
            return VerifyOutcome(False, 4, f"artifacts.{key}.file", "artifact name must be a bare file name")
    data = {k: (cert_path.parent / name).read_bytes() for k, name in names.items()}
    for key in ("output", "rounds", "sv"):
        if _sha256(data[key]) != digests[key]:
            return VerifyOutcome(False, 4, f"artifacts.{key}.sha256", f"digest mismatch for {names[key]}")
    try:
        log = parse_roundlog(data["rounds"])
        sv_bits = parse_bits(data["sv"])
        output = parse_bits(data["output"])
    except CorruptFileError as exc:
        return VerifyOutcome(False, 4, "<artifact>", str(exc))

    try:
        replay = run_protocol(config, RecordedDevice(log), ReplaySvSource(log.inputs_bits(), sv_bits.to_bits()))
    except (ValueError, bell.MissingSettingError) as exc:
        return VerifyOutcome(False, 4, "<replay>", str(exc))
    if isinstance(replay, Abort):
        return VerifyOutcome(False, 4, "<replay>", f"replay aborted: {replay.reason}")
    if replay.output != output:
        return VerifyOutcome(False, 4, "artifacts.output", "replayed output differs")
    expected = attach_artifacts(replay, cert_path.parent / names["output"])
    expected["created_utc"] = cert.get("created_utc")
    expected = json.loads(canonical_json(expected))
    diff = _first_difference(expected, cert)
    if diff:
        return VerifyOutcome(False, 4, diff, f"field {diff} does not match the recomputation")
    return VerifyOutcome(True, 0)
