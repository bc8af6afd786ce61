"""Randomness and privacy amplification from imperfect sources with a GHZ Bell test."""

from .bitstore import BitString, RoundLog
from .protocol import Abort, ProtocolConfig, run_protocol, verify_certificate

__all__ = ["Abort", "BitString", "ProtocolConfig", "RoundLog", "run_protocol", "verify_certificate"]
__version__ = "0.1.0"
