"""Certificates, canonical encoding, signatures and whole-certificate hashing.

The byte encoding is a deterministic stand-in for the ASN.1 form used by
IEEE 1609.2: a one-byte kind tag, then every field in declaration order,
variable-length fields prefixed with a 2-byte big-endian length and
timestamps as 8-byte big-endian integers.
"""

from __future__ import annotations

import enum
import hashlib
import os
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

HASHED_ID_LENGTHS = (3, 8, 10)
DEFAULT_HASHED_ID_LENGTH = 8
MAX_FIELD_LEN = 0xFFFF

_U16 = struct.Struct(">H")
_U64 = struct.Struct(">Q")


class EncodingOverflow(ValueError):
    """A variable-length field does not fit its 2-byte length prefix."""


class DecodeError(ValueError):
    pass


class CertKind(enum.IntEnum):
    ROOT = 1
    AUTHORITY = 2
    LTC = 3
    STC = 4


@dataclass(frozen=True)
class HashedId:
    """Truncated whole-certificate hash (3, 8 or 10 bytes)."""

    bytes: bytes

    def __post_init__(self):
        if len(self.bytes) not in HASHED_ID_LENGTHS:
            raise ValueError(f"HashedId must be 3, 8 or 10 bytes, got {len(self.bytes)}")

    @property
    def length(self) -> int:
        return len(self.bytes)

    def hex(self) -> str:
        return self.bytes.hex()

    @classmethod
    def from_hex(cls, text: str) -> HashedId:
        return cls(bytes.fromhex(text))

    @classmethod
    def zero(cls, length: int = DEFAULT_HASHED_ID_LENGTH) -> HashedId:
        return cls(bytes(length))

    def __str__(self) -> str:
        return self.hex()


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    private_key: bytes = field(repr=False)


@dataclass(frozen=True)
class Certificate:
    kind: CertKind
    subject_id: bytes
    public_key: bytes
    not_before: int
    not_after: int
    permissions: frozenset[str]
    issuer_hash: HashedId
    signature: bytes = b""

    def __post_init__(self):
        if self.not_before >= self.not_after:
            raise ValueError("not_before must precede not_after")
        if not isinstance(self.permissions, frozenset):
            object.__setattr__(self, "permissions", frozenset(self.permissions))

    def valid_at(self, t: int) -> bool:
        return self.not_before <= t < self.not_after

    def to_be_signed(self) -> Certificate:
        return replace(self, signature=b"")

    @cached_property
    def encoded(self) -> bytes:
        return canonical_encode(self)

    @cached_property
    def _digest(self) -> bytes:
        return hashlib.sha256(self.encoded).digest()

    def hashed_id(self, length: int = DEFAULT_HASHED_ID_LENGTH) -> HashedId:
        return whole_certificate_hash(self, length)


def _pack_var(data: bytes) -> bytes:
    if len(data) > MAX_FIELD_LEN:
        raise EncodingOverflow(f"field of {len(data)} bytes exceeds {MAX_FIELD_LEN}")
    return _U16.pack(len(data)) + data


def canonical_encode(cert: Certificate) -> bytes:
    perms = sorted(p.encode("utf-8") for p in cert.permissions)
    if len(perms) > MAX_FIELD_LEN:
        raise EncodingOverflow(f"{len(perms)} permissions exceed {MAX_FIELD_LEN}")
    parts = [
        bytes([int(cert.kind)]),
        _pack_var(cert.subject_id),
        _pack_var(cert.public_key),
        _U64.pack(cert.not_before),
        _U64.pack(cert.not_after),
        _U16.pack(len(perms)),
        *(_pack_var(p) for p in perms),
        _pack_var(cert.issuer_hash.bytes),
        _pack_var(cert.signature),
    ]
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError("truncated certificate encoding")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u16(self) -> int:
        return _U16.unpack(self.take(2))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def var(self) -> bytes:
        return self.take(self.u16())


def canonical_decode(data: bytes) -> Certificate:
    r = _Reader(data)
    try:
        kind = CertKind(r.take(1)[0])
    except ValueError as exc:
        raise DecodeError(str(exc)) from None
    subject_id = r.var()
    public_key = r.var()
    not_before = r.u64()
    not_after = r.u64()
    perms = frozenset(r.var().decode("utf-8") for _ in range(r.u16()))
    try:
        issuer_hash = HashedId(r.var())
        signature = r.var()
        if r.pos != len(data):
            raise DecodeError("trailing bytes after certificate")
        return Certificate(kind, subject_id, public_key, not_before, not_after,
                           perms, issuer_hash, signature)
    except DecodeError:
        raise
    except ValueError as exc:
        raise DecodeError(str(exc)) from None


def hash_bytes(data: bytes, length: int = DEFAULT_HASHED_ID_LENGTH) -> HashedId:
    """SHA-256 of ``data`` truncated to its lowest-order ``length`` bytes."""
    if length not in HASHED_ID_LENGTHS:
        raise ValueError(f"unsupported HashedId length {length}")
    return HashedId(hashlib.sha256(data).digest()[-length:])


def whole_certificate_hash(cert: Certificate, length: int = DEFAULT_HASHED_ID_LENGTH) -> HashedId:
    if length not in HASHED_ID_LENGTHS:
        raise ValueError(f"unsupported HashedId length {length}")
    return HashedId(cert._digest[-length:])


# -- signatures --------------------------------------------------------------
# Ed25519: deterministic, ~128-bit security, 32-byte keys, 64-byte signatures.


def generate_keypair(seed: bytes | None = None) -> KeyPair:
    """Ed25519 keypair; a given ``seed`` always yields the same keys."""
    if seed is None:
        raw = os.urandom(32)
    else:
        raw = hashlib.sha256(b"tanglerev-keypair\x00" + seed).digest()
    sk = Ed25519PrivateKey.from_private_bytes(raw)
    pk = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    priv = sk.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())
    return KeyPair(public_key=pk, private_key=priv)


@lru_cache(maxsize=4096)
def _private(raw: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(raw)


@lru_cache(maxsize=4096)
def _public(raw: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(raw)


def sign(private_key: bytes, message: bytes) -> bytes:
    return _private(private_key).sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    """Never raises; malformed keys or signatures simply fail."""
    try:
        _public(bytes(public_key)).verify(bytes(signature), bytes(message))
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


def sign_certificate(cert: Certificate, issuer_private_key: bytes) -> Certificate:
    tbs = cert.to_be_signed()
    return replace(tbs, signature=sign(issuer_private_key, canonical_encode(tbs)))


def verify_issued_by(cert: Certificate, issuer: Certificate) -> bool:
    """True if ``cert`` names ``issuer`` and carries a valid issuer signature."""
    if cert.kind is CertKind.ROOT:
        # self-signed: the only valid issuer is the root itself
        if cert.issuer_hash != HashedId.zero() or issuer != cert:
            return False
    elif cert.issuer_hash != issuer.hashed_id(DEFAULT_HASHED_ID_LENGTH):
        return False
    return verify(issuer.public_key, canonical_encode(cert.to_be_signed()), cert.signature)
