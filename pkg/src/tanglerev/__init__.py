"""Ledger-backed certificate revocation for vehicular PKI.

Revocations are published as zero-value transactions at ledger addresses
derived from the whole-certificate hash, so a receiving station checks a
sender with a single address lookup.
"""

from tanglerev.certkit import (
    CertKind,
    Certificate,
    HashedId,
    KeyPair,
    canonical_decode,
    canonical_encode,
    generate_keypair,
    sign,
    verify,
    whole_certificate_hash,
)
from tanglerev.tangle import (
    Ledger,
    LatencyModel,
    RevocationPayload,
    ZeroValueTransaction,
    byte_to_trytes,
    derive_address,
)

__version__ = "0.1.0"

__all__ = [
    "CertKind",
    "Certificate",
    "HashedId",
    "KeyPair",
    "LatencyModel",
    "Ledger",
    "RevocationPayload",
    "ZeroValueTransaction",
    "byte_to_trytes",
    "canonical_decode",
    "canonical_encode",
    "derive_address",
    "generate_keypair",
    "sign",
    "verify",
    "whole_certificate_hash",
]
