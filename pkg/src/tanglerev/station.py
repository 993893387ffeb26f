"""OBU/RSU runtime: signing, receive pipeline and ledger revocation checks."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Mapping

from tanglerev.certkit import (
    DEFAULT_HASHED_ID_LENGTH,
    CertKind,
    Certificate,
    HashedId,
    KeyPair,
    sign,
    verify,
    verify_issued_by,
)
from tanglerev.tangle import Ledger, PayloadError, derive_address

_TIME = struct.Struct(">Q")


class StationError(Exception):
    pass


class NoCredential(StationError):
    pass


class ExpiredCredential(StationError):
    pass


class NeighborUnreachable(StationError):
    pass


class Connectivity(enum.Enum):
    DIRECT = "direct"
    P2P_ONLY = "p2p_only"
    OFFLINE = "offline"


class RevocationStatus(enum.Enum):
    VALID = "valid"
    REVOKED = "revoked"
    UNKNOWN = "unknown"


class ReceiveResult(enum.Enum):
    ACCEPTED = "accepted"
    IGNORED_REVOKED = "ignored_revoked"
    IGNORED_UNKNOWN = "ignored_unknown"
    IGNORED_BAD_SIGNATURE = "ignored_bad_signature"


@dataclass(frozen=True)
class SecuredMessage:
    payload: bytes
    generation_time: int
    signer_cert: Certificate
    signature: bytes

    @staticmethod
    def signed_bytes(payload: bytes, generation_time: int, signer_cert: Certificate) -> bytes:
        return payload + _TIME.pack(generation_time) + signer_cert.hashed_id().bytes

    def verify_signature(self) -> bool:
        data = self.signed_bytes(self.payload, self.generation_time, self.signer_cert)
        return verify(self.signer_cert.public_key, data, self.signature)


def sign_message(stc: Certificate, keys: KeyPair, payload: bytes, time_ms: int) -> SecuredMessage:
    sig = sign(keys.private_key, SecuredMessage.signed_bytes(payload, time_ms, stc))
    return SecuredMessage(payload, time_ms, stc, sig)


@dataclass
class StationConfig:
    id: str
    root_cert: Certificate
    ra_cert: Certificate
    authority_certs: tuple[Certificate, ...] = ()
    connectivity: Connectivity = Connectivity.DIRECT
    neighbor_ids: list[str] = field(default_factory=list)
    hash_length: int = DEFAULT_HASHED_ID_LENGTH
    # revocation lookup runs before the (costlier) signature checks
    check_before_verify: bool = True


class Station:
    """A station bound to a shared ledger and, optionally, a neighbourhood.

    ``network`` maps station ids to stations reachable over P2P; an id
    missing from it (or a station with ``reachable = False``) is unreachable.
    Times are Unix milliseconds.
    """

    def __init__(self, config: StationConfig, ledger: Ledger | None = None,
                 network: Mapping[str, Station] | None = None):
        self.config = config
        self.ledger = ledger
        self.network = network if network is not None else {}
        self.reachable = True
        self.ledger_queries = 0
        self._credential: tuple[Certificate, KeyPair] | None = None
        self._ra_hash = config.ra_cert.hashed_id()
        self._issuers = {
            c.hashed_id(): c for c in config.authority_certs
            if verify_issued_by(c, config.root_cert)
        }

    @property
    def id(self) -> str:
        return self.config.id

    def set_credential(self, stc: Certificate, keys: KeyPair) -> None:
        self._credential = (stc, keys)

    # -- sending ----------------------------------------------------------

    def send(self, payload: bytes, time_ms: int) -> SecuredMessage:
        if self._credential is None:
            raise NoCredential(f"station {self.id} holds no STC")
        stc, keys = self._credential
        if not stc.valid_at(time_ms // 1000):
            raise ExpiredCredential(f"STC not valid at {time_ms} ms")
        return sign_message(stc, keys, payload, time_ms)

    # -- revocation checking ---------------------------------------------

    def _lookup(self, cert_hash: HashedId, time_ms: int) -> RevocationStatus:
        self.ledger_queries += 1
        for tx in self.ledger.find_transactions(derive_address(cert_hash), at=time_ms):
            try:
                payload = tx.revocation()
            except PayloadError:
                continue
            if (payload.revoked_hash == cert_hash
                    and payload.ra_cert_hash == self._ra_hash
                    and payload.verify(self.config.ra_cert.public_key)):
                return RevocationStatus.REVOKED
        return RevocationStatus.VALID

    def _has_ledger(self) -> bool:
        return self.config.connectivity is Connectivity.DIRECT and self.ledger is not None

    def check_hash(self, cert_hash: HashedId, time_ms: int) -> RevocationStatus:
        if self._has_ledger():
            return self._lookup(cert_hash, time_ms)
        if self.config.connectivity is Connectivity.P2P_ONLY:
            for nid in self.config.neighbor_ids:
                try:
                    status = self.delegate_check(nid, cert_hash, time_ms)
                except NeighborUnreachable:
                    continue
                if status is not RevocationStatus.UNKNOWN:
                    return status
        return RevocationStatus.UNKNOWN

    def check_revocation(self, cert: Certificate, time_ms: int) -> RevocationStatus:
        return self.check_hash(cert.hashed_id(self.config.hash_length), time_ms)

    def delegate_check(self, neighbor: str | Station, cert_hash: HashedId,
                       time_ms: int) -> RevocationStatus:
        """Ask one neighbour to look ``cert_hash`` up. Single hop only."""
        if isinstance(neighbor, str):
            neighbor = self.network.get(neighbor)
        if neighbor is None or not neighbor.reachable:
            raise NeighborUnreachable(f"neighbor unreachable from {self.id}")
        return neighbor.answer_delegated(cert_hash, time_ms)

    def answer_delegated(self, cert_hash: HashedId, time_ms: int) -> RevocationStatus:
        if not self._has_ledger():
            return RevocationStatus.UNKNOWN
        return self._lookup(cert_hash, time_ms)

    # -- receiving --------------------------------------------------------

    def verify_message(self, msg: SecuredMessage, time_ms: int) -> bool:
        cert = msg.signer_cert
        if cert.kind is not CertKind.STC or not cert.valid_at(time_ms // 1000):
            return False
        issuer = self._issuers.get(cert.issuer_hash)
        if issuer is None or not issuer.valid_at(time_ms // 1000):
            return False
        return verify_issued_by(cert, issuer) and msg.verify_signature()

    def receive(self, msg: SecuredMessage, time_ms: int) -> ReceiveResult:
        if not self.config.check_before_verify and not self.verify_message(msg, time_ms):
            return ReceiveResult.IGNORED_BAD_SIGNATURE
        status = self.check_revocation(msg.signer_cert, time_ms)
        if status is RevocationStatus.REVOKED:
            return ReceiveResult.IGNORED_REVOKED
        if status is RevocationStatus.UNKNOWN:
            return ReceiveResult.IGNORED_UNKNOWN
        if self.config.check_before_verify and not self.verify_message(msg, time_ms):
            return ReceiveResult.IGNORED_BAD_SIGNATURE
        return ReceiveResult.ACCEPTED
