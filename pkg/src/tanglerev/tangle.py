"""Tryte addressing and an address-indexed store of zero-value transactions.

The store abstracts the Tangle as an append-only availability layer: no tip
selection, proof-of-work or gossip. Visibility of an attached transaction is
delayed by a pluggable latency model in simulated milliseconds.
"""

from __future__ import annotations

import math
import random
import struct
import threading
from dataclasses import dataclass, field
from os import PathLike
from statistics import NormalDist
from typing import Iterable

from tanglerev.certkit import HashedId, hash_bytes, sign, verify

TRYTE_ALPHABET = "9ABCDEFGHIJKLMNOPQRSTUVWXYZ"
ADDRESS_LENGTH = 81
_TRYTE_INDEX = {c: i for i, c in enumerate(TRYTE_ALPHABET)}


def byte_to_trytes(b: int) -> str:
    """Two trytes per byte: ``b mod 27`` first, then ``b // 27``."""
    if not 0 <= b <= 255:
        raise ValueError(f"byte out of range: {b}")
    return TRYTE_ALPHABET[b % 27] + TRYTE_ALPHABET[b // 27]


def trytes_to_byte(pair: str) -> int:
    lo, hi = _TRYTE_INDEX[pair[0]], _TRYTE_INDEX[pair[1]]
    value = lo + 27 * hi
    if value > 255:
        raise ValueError(f"tryte pair {pair!r} does not encode a byte")
    return value


def bytes_to_trytes(data: bytes) -> str:
    return "".join(byte_to_trytes(b) for b in data)


class TryteAddress(str):
    """81-character tryte string (no checksum)."""

    def __new__(cls, value: str):
        if len(value) != ADDRESS_LENGTH:
            raise ValueError(f"address must be {ADDRESS_LENGTH} trytes, got {len(value)}")
        if any(c not in _TRYTE_INDEX for c in value):
            raise ValueError("address contains characters outside the tryte alphabet")
        return super().__new__(cls, value)


def derive_address(h: HashedId) -> TryteAddress:
    return TryteAddress(bytes_to_trytes(h.bytes).ljust(ADDRESS_LENGTH, "9"))


def address_to_hashed_id(address: str, length: int = 8) -> HashedId:
    """Inverse of :func:`derive_address` given the HashedId length."""
    trytes = address[: 2 * length]
    return HashedId(bytes(trytes_to_byte(trytes[i : i + 2]) for i in range(0, len(trytes), 2)))


# -- revocation payloads -----------------------------------------------------

_PAYLOAD_HEAD = struct.Struct(">B")
_TIME = struct.Struct(">Q")


class PayloadError(ValueError):
    pass


@dataclass(frozen=True)
class RevocationPayload:
    revoked_hash: HashedId
    revocation_time: int
    ra_cert_hash: HashedId
    signature: bytes = b""

    def signed_bytes(self) -> bytes:
        return (
            _PAYLOAD_HEAD.pack(self.revoked_hash.length) + self.revoked_hash.bytes
            + _TIME.pack(self.revocation_time)
            + _PAYLOAD_HEAD.pack(self.ra_cert_hash.length) + self.ra_cert_hash.bytes
        )

    def encode(self) -> bytes:
        return self.signed_bytes() + self.signature

    @classmethod
    def decode(cls, data: bytes) -> RevocationPayload:
        try:
            n = data[0]
            revoked = HashedId(data[1 : 1 + n])
            pos = 1 + n
            (t,) = _TIME.unpack(data[pos : pos + 8])
            pos += 8
            m = data[pos]
            ra = HashedId(data[pos + 1 : pos + 1 + m])
            pos += 1 + m
        except (IndexError, struct.error, ValueError) as exc:
            raise PayloadError(f"malformed revocation payload: {exc}") from None
        return cls(revoked, t, ra, bytes(data[pos:]))

    @classmethod
    def create(cls, revoked_hash: HashedId, revocation_time: int, ra_cert_hash: HashedId,
               ra_private_key: bytes) -> RevocationPayload:
        unsigned = cls(revoked_hash, revocation_time, ra_cert_hash)
        return cls(revoked_hash, revocation_time, ra_cert_hash,
                   sign(ra_private_key, unsigned.signed_bytes()))

    def verify(self, ra_public_key: bytes) -> bool:
        return verify(ra_public_key, self.signed_bytes(), self.signature)


@dataclass(frozen=True)
class ZeroValueTransaction:
    """Data-only ledger entry. There is deliberately no amount field."""

    address: TryteAddress
    payload: bytes
    attach_time: int
    tx_id: HashedId = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        expected = hash_bytes(self.payload, 8)
        if self.tx_id is None:
            object.__setattr__(self, "tx_id", expected)
        elif self.tx_id != expected:
            raise ValueError("tx_id does not match payload hash")
        if not isinstance(self.address, TryteAddress):
            object.__setattr__(self, "address", TryteAddress(self.address))

    def revocation(self) -> RevocationPayload:
        return RevocationPayload.decode(self.payload)


@dataclass(frozen=True)
class Receipt:
    tx_id: HashedId
    queryable_time: int


# -- latency models ----------------------------------------------------------


@dataclass(frozen=True)
class LatencyModel:
    """Delay distribution in milliseconds.

    ``kind`` is one of ``zero``, ``constant`` (``params=(d,)``), ``uniform``
    (``(lo, hi)``) or ``lognormal`` (``(mu, sigma, cap)``, with mu and sigma
    on the natural-log-of-ms scale).
    """

    kind: str = "zero"
    params: tuple[float, ...] = ()

    def __post_init__(self):
        arity = {"zero": 0, "constant": 1, "uniform": 2, "lognormal": 3}
        if self.kind not in arity:
            raise ValueError(f"unknown latency model {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if len(self.params) != arity[self.kind]:
            raise ValueError(f"{self.kind} takes {arity[self.kind]} parameters")
        if any(p < 0 for p in self.params if self.kind != "lognormal"):
            raise ValueError("latency parameters must be non-negative")
        if self.kind == "uniform" and self.params[0] > self.params[1]:
            raise ValueError("uniform latency needs lo <= hi")
        if self.kind == "lognormal" and (self.params[1] < 0 or self.params[2] < 0):
            raise ValueError("lognormal sigma and cap must be non-negative")

    @classmethod
    def zero(cls) -> LatencyModel:
        return cls("zero")

    @classmethod
    def constant(cls, ms: float) -> LatencyModel:
        return cls("constant", (ms,))

    @classmethod
    def uniform(cls, lo: float, hi: float) -> LatencyModel:
        return cls("uniform", (lo, hi))

    @classmethod
    def lognormal(cls, mu: float, sigma: float, cap: float) -> LatencyModel:
        return cls("lognormal", (mu, sigma, cap))

    @classmethod
    def fit_lognormal(cls, mean_ms: float, p95_ms: float, cap_ms: float) -> LatencyModel:
        """Log-normal whose mean and 95th percentile match the targets.

        Solves ``mu + sigma**2 / 2 = ln(mean)`` and ``mu + z95 * sigma = ln(p95)``
        taking the smaller root for sigma.
        """
        if not 0 < mean_ms < p95_ms:
            raise ValueError("need 0 < mean < p95")
        z = NormalDist().inv_cdf(0.95)
        gap = math.log(p95_ms) - math.log(mean_ms)
        disc = z * z - 2 * gap
        if disc < 0:
            raise ValueError("no log-normal has this mean/p95 pair")
        sigma = z - math.sqrt(disc)
        mu = math.log(mean_ms) - sigma * sigma / 2
        return cls.lognormal(mu, sigma, cap_ms)

    def sample(self, rng: random.Random) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "uniform":
            return rng.uniform(*self.params)
        mu, sigma, cap = self.params
        return min(rng.lognormvariate(mu, sigma), cap)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, data: dict) -> LatencyModel:
        if "mean_ms" in data:
            return cls.fit_lognormal(data["mean_ms"], data["p95_ms"], data["cap_ms"])
        return cls(data["kind"], tuple(data.get("params", ())))


# -- ledger ------------------------------------------------------------------


@dataclass(frozen=True)
class _Entry:
    tx: ZeroValueTransaction
    queryable_time: int


class Ledger:
    """Append-only, address-indexed transaction store.

    The permanent log plays the permanode role: :meth:`snapshot_compact`
    wipes the node-side index the way a snapshot resets zero-value
    transactions, then rebuilds it from the log so no revocation is lost.
    """

    def __init__(self, latency: LatencyModel | None = None, seed: int | str | None = None):
        self.latency = latency or LatencyModel.zero()
        self._rng = random.Random(seed)
        self._log: list[_Entry] = []
        self._index: dict[str, list[_Entry]] = {}
        self._lock = threading.Lock()
        self.query_count = 0

    def __len__(self) -> int:
        return len(self._log)

    def attach(self, tx: ZeroValueTransaction, delay_ms: float | None = None) -> Receipt:
        with self._lock:
            if delay_ms is None:
                delay_ms = self.latency.sample(self._rng)
            entry = _Entry(tx, tx.attach_time + int(round(delay_ms)))
            self._log.append(entry)
            self._index.setdefault(tx.address, []).append(entry)
        return Receipt(tx.tx_id, entry.queryable_time)

    def find_transactions(self, address: str, at: float | None = None) -> list[ZeroValueTransaction]:
        """Transactions at ``address`` visible by time ``at`` (ms), attach-ordered."""
        with self._lock:
            self.query_count += 1
            entries = list(self._index.get(address, ()))
        if at is None:
            return [e.tx for e in entries]
        return [e.tx for e in entries if e.queryable_time <= at]

    def queryable_time(self, tx_id: HashedId) -> int | None:
        with self._lock:
            for entry in self._log:
                if entry.tx.tx_id == tx_id:
                    return entry.queryable_time
        return None

    def entries(self, address: str | None = None) -> list[tuple[ZeroValueTransaction, int]]:
        """(transaction, queryable_time) pairs, optionally for one address."""
        with self._lock:
            source = self._log if address is None else self._index.get(address, ())
            return [(e.tx, e.queryable_time) for e in source]

    def snapshot_compact(self) -> None:
        with self._lock:
            self._index = {}
            for entry in self._log:
                self._index.setdefault(entry.tx.address, []).append(entry)

    def _restore(self, tx: ZeroValueTransaction, queryable_time: int) -> None:
        entry = _Entry(tx, queryable_time)
        with self._lock:
            self._log.append(entry)
            self._index.setdefault(tx.address, []).append(entry)

    # text dump: address \t payload-hex \t attach_time \t queryable_time \t tx_id

    def dump_lines(self) -> Iterable[str]:
        for tx, qt in self.entries():
            yield f"{tx.address}\t{tx.payload.hex()}\t{tx.attach_time}\t{qt}\t{tx.tx_id.hex()}"

    def dump(self, path: str | PathLike) -> None:
        with open(path, "w", encoding="ascii") as fh:
            for line in self.dump_lines():
                fh.write(line + "\n")

    @classmethod
    def load(cls, path: str | PathLike, latency: LatencyModel | None = None) -> Ledger:
        ledger = cls(latency)
        with open(path, encoding="ascii") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) != 5:
                    raise ValueError(f"{path}:{lineno}: expected 5 fields, got {len(fields)}")
                address, payload, attach, queryable, tx_id = fields
                tx = ZeroValueTransaction(TryteAddress(address), bytes.fromhex(payload),
                                          int(attach), HashedId.from_hex(tx_id))
                ledger._restore(tx, int(queryable))
        return ledger
