"""Trust authorities: RootCA, LTCA, STCA, RA and MA.

Knowledge is split on purpose. The LTCA maps LTC hashes to canonical
identifiers, the STCA maps STC hashes to LTC hashes, and only the RA joins
the two when resolving a misbehaving vehicle.
"""

from __future__ import annotations

import logging
import random
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from tanglerev.certkit import (
    DEFAULT_HASHED_ID_LENGTH,
    CertKind,
    Certificate,
    HashedId,
    KeyPair,
    generate_keypair,
    sign_certificate,
    verify_issued_by,
)
from tanglerev.tangle import (
    Ledger,
    Receipt,
    RevocationPayload,
    ZeroValueTransaction,
    derive_address,
)

log = logging.getLogger(__name__)

YEAR = 365 * 24 * 3600
WEEK = 7 * 24 * 3600

AUTHORITY_VALIDITY = 20 * YEAR
LTC_VALIDITY = 3 * YEAR
STC_VALIDITY = WEEK
PSEUDONYM_LENGTH = 16

Journal = Callable[..., None]


class VpkiError(Exception):
    pass


class BannedSubject(VpkiError):
    pass


class NotPreRegistered(VpkiError):
    pass


class LtcaRejected(VpkiError):
    pass


class ExpiredLtc(VpkiError):
    pass


class BadChain(VpkiError):
    pass


class ResolutionFailed(VpkiError):
    pass


@dataclass(frozen=True)
class IssuanceRecord:
    issued_cert_hash: HashedId
    parent_ref: HashedId
    subject: Optional[bytes]
    issue_time: int


@dataclass(frozen=True)
class MisbehaviorReport:
    reported_stc_hash: HashedId
    evidence: bytes = b""
    reporter: str = ""
    report_time: int = 0

    def __post_init__(self):
        if self.reported_stc_hash.length != 8:
            raise ValueError("misbehavior reports reference a HashedId8")


class BanList:
    """Canonical identifiers that may never be (re-)credentialed."""

    def __init__(self):
        self._banned: dict[bytes, int] = {}

    def add(self, canonical_id: bytes, ban_time: int) -> bool:
        if canonical_id in self._banned:
            return False
        self._banned[canonical_id] = ban_time
        return True

    def __contains__(self, canonical_id: bytes) -> bool:
        return canonical_id in self._banned

    def __len__(self) -> int:
        return len(self._banned)

    def items(self):
        return self._banned.items()


class _Authority:
    name = "authority"

    def __init__(self, keys: KeyPair, cert: Certificate, journal: Journal | None = None):
        self.keys = keys
        self.cert = cert
        self.journal = journal
        self._lock = threading.RLock()

    @property
    def hashed_id(self) -> HashedId:
        return self.cert.hashed_id()

    def _emit(self, event: str, *fields) -> None:
        if self.journal is not None:
            self.journal(event, *fields)


class RootCA(_Authority):
    name = "root"

    def __init__(self, keys: KeyPair, domain: str, now: int, journal: Journal | None = None):
        cert = sign_certificate(
            Certificate(CertKind.ROOT, f"{domain}/RootCA".encode(), keys.public_key,
                        now, now + AUTHORITY_VALIDITY, frozenset({"root"}), HashedId.zero()),
            keys.private_key,
        )
        super().__init__(keys, cert, journal)
        self.domain = domain

    def issue_authority(self, role: str, public_key: bytes, permissions: set[str],
                        now: int) -> Certificate:
        tbs = Certificate(CertKind.AUTHORITY, f"{self.domain}/{role}".encode(), public_key,
                          now, now + AUTHORITY_VALIDITY, frozenset(permissions), self.hashed_id)
        return sign_certificate(tbs, self.keys.private_key)


class LTCA(_Authority):
    """Enrolment: binds canonical identifiers to long-term certificates."""

    name = "ltca"

    def __init__(self, keys, cert, journal=None):
        super().__init__(keys, cert, journal)
        self.preregistered: set[bytes] = set()
        self.records: dict[HashedId, IssuanceRecord] = {}
        self.bans = BanList()

    def preregister(self, canonical_id: bytes) -> None:
        if not canonical_id:
            raise ValueError("canonical identifier must be non-empty")
        with self._lock:
            if canonical_id not in self.preregistered:
                self.preregistered.add(canonical_id)
                self._emit("prereg", canonical_id)

    def enroll(self, canonical_id: bytes, vehicle_pk: bytes, now: int) -> Certificate:
        with self._lock:
            if canonical_id in self.bans:
                raise BannedSubject(f"{canonical_id!r} is banned")
            if canonical_id not in self.preregistered:
                raise NotPreRegistered(f"{canonical_id!r} is not pre-registered")
            ltc = sign_certificate(
                Certificate(CertKind.LTC, canonical_id, vehicle_pk, now, now + LTC_VALIDITY,
                            frozenset({"enrolment"}), self.hashed_id),
                self.keys.private_key,
            )
            rec = IssuanceRecord(ltc.hashed_id(), HashedId.zero(), canonical_id, now)
            self.records[rec.issued_cert_hash] = rec
            self._emit("issue", self.name, ltc, rec)
            return ltc

    def validate_ltc(self, ltc_hash: HashedId) -> bool:
        """STCA-facing check: the LTC is ours and its holder is not banned."""
        with self._lock:
            rec = self.records.get(ltc_hash)
            return rec is not None and rec.subject not in self.bans

    def canonical_id_for(self, ltc_hash: HashedId) -> bytes | None:
        with self._lock:
            rec = self.records.get(ltc_hash)
            return rec.subject if rec else None

    def ban(self, canonical_id: bytes, now: int) -> bool:
        with self._lock:
            added = self.bans.add(canonical_id, now)
            if added:
                self._emit("ban", canonical_id, now)
            return added


def _pseudonym(rng: random.Random, avoid: bytes) -> bytes:
    # draw only from byte values absent from the canonical id
    taken = set(avoid)
    allowed = [b for b in range(256) if b not in taken]
    return bytes(rng.choice(allowed) for _ in range(PSEUDONYM_LENGTH))


class STCA(_Authority):
    """Authorization: issues pseudonymous short-term certificates."""

    name = "stca"

    def __init__(self, keys, cert, ltca: LTCA, seed=None, journal=None):
        super().__init__(keys, cert, journal)
        self.ltca = ltca
        self.records: dict[HashedId, IssuanceRecord] = {}
        self.issued: dict[HashedId, Certificate] = {}
        self._rng = random.Random(seed)

    def authorize(self, ltc: Certificate, vehicle_pk: bytes, now: int,
                  permissions: frozenset[str] = frozenset({"cam", "denm"})) -> Certificate:
        if ltc.kind is not CertKind.LTC or not verify_issued_by(ltc, self.ltca.cert):
            raise BadChain("LTC does not verify against the LTCA")
        if not ltc.valid_at(now):
            raise ExpiredLtc("LTC outside its validity period")
        ltc_hash = ltc.hashed_id()
        if not self.ltca.validate_ltc(ltc_hash):
            raise LtcaRejected("LTCA refused the LTC")
        with self._lock:
            stc = sign_certificate(
                Certificate(CertKind.STC, _pseudonym(self._rng, ltc.subject_id), vehicle_pk,
                            now, now + STC_VALIDITY, permissions, self.hashed_id),
                self.keys.private_key,
            )
            rec = IssuanceRecord(stc.hashed_id(), ltc_hash, None, now)
            self.records[rec.issued_cert_hash] = rec
            self.issued[rec.issued_cert_hash] = stc
            self._emit("issue", self.name, stc, rec)
            return stc

    def certificate(self, stc_hash: HashedId) -> Certificate | None:
        with self._lock:
            return self.issued.get(stc_hash)

    def ltc_for(self, stc_hash: HashedId) -> HashedId | None:
        with self._lock:
            rec = self.records.get(stc_hash)
            return rec.parent_ref if rec else None


class RA(_Authority):
    """Publishes signed revocations and resolves pseudonyms to vehicles."""

    name = "ra"

    def __init__(self, keys, cert, ledger: Ledger, ltca: LTCA, stca: STCA,
                 hash_length: int = DEFAULT_HASHED_ID_LENGTH, journal=None):
        super().__init__(keys, cert, journal)
        self.ledger = ledger
        self.ltca = ltca
        self.stca = stca
        self.hash_length = hash_length

    def publish_revocation(self, cert_hash: HashedId, now_ms: int, delay_ms: float | None = None,
                           ledger: Ledger | None = None) -> tuple[ZeroValueTransaction, Receipt]:
        payload = RevocationPayload.create(cert_hash, now_ms // 1000, self.hashed_id,
                                           self.keys.private_key)
        tx = ZeroValueTransaction(derive_address(cert_hash), payload.encode(), now_ms)
        with self._lock:
            receipt = (self.ledger if ledger is None else ledger).attach(tx, delay_ms)
            self._emit("attach", tx, receipt.queryable_time)
        return tx, receipt

    def resolve_identity(self, stc_hash: HashedId, now: int) -> bytes:
        ltc_hash = self.stca.ltc_for(stc_hash)
        if ltc_hash is None:
            raise ResolutionFailed(f"STCA has no record of {stc_hash}")
        canonical_id = self.ltca.canonical_id_for(ltc_hash)
        if canonical_id is None:
            raise ResolutionFailed(f"LTCA has no record of {ltc_hash}")
        self.ltca.ban(canonical_id, now)
        return canonical_id

    def revoke_and_resolve(self, stc_hash: HashedId, now_ms: int,
                           delay_ms: float | None = None) -> tuple[Receipt, bytes | None]:
        # publish first so the vulnerability window does not include resolution
        addressed = stc_hash
        if self.hash_length != stc_hash.length:
            stc = self.stca.certificate(stc_hash)
            if stc is not None:
                addressed = stc.hashed_id(self.hash_length)
        _, receipt = self.publish_revocation(addressed, now_ms, delay_ms)
        try:
            canonical_id = self.resolve_identity(stc_hash, now_ms // 1000)
        except ResolutionFailed as exc:
            log.warning("revocation published but resolution failed: %s", exc)
            canonical_id = None
        return receipt, canonical_id


class MA(_Authority):
    """Accepts externally detected misbehaviour; detection itself is a stub."""

    name = "ma"

    def __init__(self, keys, cert, ra: RA, journal=None):
        super().__init__(keys, cert, journal)
        self.ra = ra
        self.handled: set[HashedId] = set()
        self.outcomes: dict[HashedId, tuple[Receipt, bytes | None]] = {}

    def report_misbehavior(self, report: MisbehaviorReport, now_ms: int,
                           delay_ms: float | None = None) -> tuple[Receipt, bytes | None] | None:
        """Forward to the RA once per reported hash.

        A repeat returns the first outcome, or None when that outcome
        predates a restart.
        """
        with self._lock:
            h = report.reported_stc_hash
            if h in self.handled:
                return self.outcomes.get(h)
            self.handled.add(h)
            self._emit("report", h)
            outcome = self.ra.revoke_and_resolve(h, now_ms, delay_ms)
            self.outcomes[h] = outcome
            return outcome


@dataclass
class TrustDomain:
    root: RootCA
    ltca: LTCA
    stca: STCA
    ra: RA
    ma: MA
    ledger: Ledger
    domain: str = "home"
    extras: dict = field(default_factory=dict)

    def certs(self) -> dict[str, Certificate]:
        return {
            "root_cert": self.root.cert,
            "ltca_cert": self.ltca.cert,
            "stca_cert": self.stca.cert,
            "ra_cert": self.ra.cert,
            "ma_cert": self.ma.cert,
        }

    def set_journal(self, journal: Journal | None) -> None:
        for auth in (self.root, self.ltca, self.stca, self.ra, self.ma):
            auth.journal = journal


def bootstrap_trust(seed: bytes | str | None = None, now: int = 0, ledger: Ledger | None = None,
                    domain: str = "home", hash_length: int = DEFAULT_HASHED_ID_LENGTH) -> TrustDomain:
    """Create a root and the four subordinate authorities of one domain.

    With a ``seed`` every key, and therefore every certificate, is reproducible.
    """
    if isinstance(seed, str):
        seed = seed.encode()

    def keys(role: str) -> KeyPair:
        return generate_keypair(None if seed is None else seed + b"/" + role.encode())

    ledger = ledger if ledger is not None else Ledger()
    root = RootCA(keys("root"), domain, now)

    def child(role, perms):
        k = keys(role)
        return k, root.issue_authority(role, k.public_key, perms, now)

    ltca = LTCA(*child("LTCA", {"enrol"}))
    stca = STCA(*child("STCA", {"authorize"}), ltca=ltca,
                seed=None if seed is None else seed + b"/pseudonyms")
    ra = RA(*child("RA", {"revoke"}), ledger=ledger, ltca=ltca, stca=stca, hash_length=hash_length)
    ma = MA(*child("MA", {"report"}), ra=ra)
    return TrustDomain(root, ltca, stca, ra, ma, ledger, domain)
