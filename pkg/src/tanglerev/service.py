"""Single-process VPKI service with a write-through event journal.

Endpoints (JSON bodies, byte strings as lowercase hex)::

    GET  /trust                        authority certificates
    POST /preregister                  {"canonical_id"}
    POST /enroll                       {"canonical_id", "public_key"} -> {"ltc", "ltc_hash"}
    POST /authorize                    {"ltc", "public_key"} -> {"stc", "stc_hash"}
    POST /misbehavior-report           {"stc_hash", ["evidence"], ["reporter"]}
    POST /resolve                      {"stc_hash"} -> {"canonical_id"}
    GET  /revocation-status/<hash>     {"hash", "status": "valid" | "revoked"}
    GET  /ledger-address/<address>     {"address", "transactions": [...]}

Errors: 400 malformed request, 403 banned or rejected, 404 unknown
hash/address/path.

Journal lines are tab-separated with a leading event token::

    init     <format> <seed-hex> <hash-length> <domain> <created-s>
    prereg   <canonical-id-hex>
    issue    ltca|stca <cert-hex> <parent-hash-hex> <canonical-id-hex|-> <issue-time-s>
    ban      <canonical-id-hex> <ban-time-s>
    report   <stc-hash-hex>
    attach   <address> <payload-hex> <attach-time-ms> <queryable-time-ms> <tx-id-hex>
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable

from tanglerev.authorities import (
    BadChain,
    BannedSubject,
    ExpiredLtc,
    IssuanceRecord,
    LtcaRejected,
    MisbehaviorReport,
    NotPreRegistered,
    ResolutionFailed,
    TrustDomain,
    bootstrap_trust,
)
from tanglerev.certkit import (
    HASHED_ID_LENGTHS,
    DecodeError,
    HashedId,
    canonical_decode,
)
from tanglerev.station import Station, StationConfig
from tanglerev.tangle import (
    LatencyModel,
    Ledger,
    PayloadError,
    TryteAddress,
    ZeroValueTransaction,
)

log = logging.getLogger(__name__)

JOURNAL_FORMAT = "1"
JOURNAL_NAME = "journal.tsv"


class StoreMismatch(RuntimeError):
    pass


class BadRequest(ValueError):
    pass


class NotFound(LookupError):
    pass


@dataclass
class ServiceConfig:
    store_path: str = "vpki-store"
    listen_endpoint: str = "127.0.0.1:8080"
    hash_id_length: int = 8
    publish_latency_model: LatencyModel = field(default_factory=LatencyModel.zero)
    seed: str | None = None

    @classmethod
    def from_dict(cls, data: dict) -> ServiceConfig:
        data = dict(data)
        if "publish_latency_model" in data:
            data["publish_latency_model"] = LatencyModel.from_dict(data["publish_latency_model"])
        return cls(**data)

    @classmethod
    def load(cls, path) -> ServiceConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @property
    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen_endpoint.rpartition(":")
        return host or "127.0.0.1", int(port)


class Journal:
    """Append-only, line-per-event store file."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()
        self._fh = open(path, "a", encoding="ascii")

    def write(self, *fields) -> None:
        line = "\t".join(str(f) for f in fields)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()

    def record(self, event: str, *fields) -> None:
        """Journal sink handed to the authorities."""
        if event == "prereg":
            (cid,) = fields
            self.write("prereg", cid.hex())
        elif event == "issue":
            who, cert, rec = fields
            subject = rec.subject.hex() if rec.subject is not None else "-"
            self.write("issue", who, cert.encoded.hex(), rec.parent_ref.hex(), subject, rec.issue_time)
        elif event == "ban":
            cid, when = fields
            self.write("ban", cid.hex(), when)
        elif event == "report":
            (h,) = fields
            self.write("report", h.hex())
        elif event == "attach":
            tx, queryable = fields
            self.write("attach", tx.address, tx.payload.hex(), tx.attach_time, queryable, tx.tx_id.hex())
        else:
            raise ValueError(f"unknown journal event {event!r}")

    def close(self) -> None:
        with self._lock:
            self._fh.close()


def _replay(domain: TrustDomain, lines) -> None:
    for lineno, raw in enumerate(lines, 1):
        fields = raw.rstrip("\n").split("\t")
        event, args = fields[0], fields[1:]
        if event == "init" or not event:
            continue
        if event == "prereg":
            domain.ltca.preregistered.add(bytes.fromhex(args[0]))
        elif event == "issue":
            who, cert_hex, parent, subject, issued = args
            cert = canonical_decode(bytes.fromhex(cert_hex))
            rec = IssuanceRecord(cert.hashed_id(), HashedId.from_hex(parent),
                                 None if subject == "-" else bytes.fromhex(subject), int(issued))
            if who == "ltca":
                domain.ltca.records[rec.issued_cert_hash] = rec
            else:
                domain.stca.records[rec.issued_cert_hash] = rec
                domain.stca.issued[rec.issued_cert_hash] = cert
        elif event == "ban":
            domain.ltca.bans.add(bytes.fromhex(args[0]), int(args[1]))
        elif event == "report":
            domain.ma.handled.add(HashedId.from_hex(args[0]))
        elif event == "attach":
            address, payload, attached, queryable, tx_id = args
            tx = ZeroValueTransaction(TryteAddress(address), bytes.fromhex(payload),
                                      int(attached), HashedId.from_hex(tx_id))
            domain.ledger._restore(tx, int(queryable))
        else:
            raise StoreMismatch(f"journal line {lineno}: unknown event {event!r}")


class VpkiService:
    """All five authorities and the ledger behind one request dispatcher."""

    def __init__(self, config: ServiceConfig, clock: Callable[[], int] | None = None):
        self.config = config
        self.clock = clock or (lambda: int(time.time() * 1000))
        store = Path(config.store_path)
        store.mkdir(parents=True, exist_ok=True)
        journal_path = store / JOURNAL_NAME
        lines = journal_path.read_text(encoding="ascii").splitlines() if journal_path.exists() else []

        if lines:
            head = lines[0].split("\t")
            if head[0] != "init" or head[1] != JOURNAL_FORMAT:
                raise StoreMismatch(f"{journal_path} is not a journal of format {JOURNAL_FORMAT}")
            seed, hash_length, domain_name, created = bytes.fromhex(head[2]), int(head[3]), head[4], int(head[5])
            if hash_length != config.hash_id_length:
                raise StoreMismatch(
                    f"store uses HashedId{hash_length}, config asks for HashedId{config.hash_id_length}")
        else:
            if config.hash_id_length not in HASHED_ID_LENGTHS:
                raise ValueError(f"hash_id_length must be one of {HASHED_ID_LENGTHS}")
            seed = config.seed.encode() if config.seed is not None else os.urandom(32)
            hash_length, domain_name, created = config.hash_id_length, "home", self.clock() // 1000 - 60

        ledger = Ledger(config.publish_latency_model, seed=seed + b"/service-ledger")
        self.domain = bootstrap_trust(seed, now=created, ledger=ledger, domain=domain_name,
                                      hash_length=hash_length)
        _replay(self.domain, lines)

        self.journal = Journal(journal_path)
        if not lines:
            self.journal.write("init", JOURNAL_FORMAT, seed.hex(), hash_length, domain_name, created)
        self.domain.set_journal(self.journal.record)
        self.checker = Station(
            StationConfig("service", self.domain.root.cert, self.domain.ra.cert,
                          authority_certs=(self.domain.stca.cert,), hash_length=hash_length),
            ledger,
        )

    @property
    def ledger(self) -> Ledger:
        return self.domain.ledger

    def close(self) -> None:
        self.journal.close()

    # -- operations ----------------------------------------------------------

    def revocation_status(self, cert_hash: HashedId) -> str:
        return self.checker.check_hash(cert_hash, self.clock()).value

    def report(self, stc_hash: HashedId, evidence: bytes = b"", reporter: str = "") -> dict:
        now = self.clock()
        already = stc_hash in self.domain.ma.handled
        outcome = self.domain.ma.report_misbehavior(
            MisbehaviorReport(stc_hash, evidence, reporter, now // 1000), now)
        body = {"stc_hash": stc_hash.hex(), "duplicate": already}
        if outcome is not None:
            receipt, _ = outcome
            body.update(tx_id=receipt.tx_id.hex(), queryable_time=receipt.queryable_time)
        return body

    def resolve(self, stc_hash: HashedId) -> bytes:
        return self.domain.ra.resolve_identity(stc_hash, self.clock() // 1000)

    # -- request dispatch ----------------------------------------------------

    def handle(self, method: str, path: str, body: bytes = b"") -> tuple[int, bytes]:
        """Dispatch one request; returns (HTTP status, JSON body bytes)."""
        try:
            status, payload = HTTPStatus.OK, self._dispatch(method, path.rstrip("/"), body)
        except (BadRequest, DecodeError, PayloadError, ValueError, KeyError, TypeError) as exc:
            status, payload = HTTPStatus.BAD_REQUEST, {"error": str(exc) or type(exc).__name__}
        except (BannedSubject, LtcaRejected, NotPreRegistered, ExpiredLtc, BadChain) as exc:
            status, payload = HTTPStatus.FORBIDDEN, {"error": type(exc).__name__, "detail": str(exc)}
        except (NotFound, ResolutionFailed) as exc:
            status, payload = HTTPStatus.NOT_FOUND, {"error": type(exc).__name__, "detail": str(exc)}
        return int(status), json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()

    def _dispatch(self, method: str, path: str, body: bytes) -> dict:
        parts = path.lstrip("/").split("/")
        route = (method.upper(), parts[0])
        if route == ("GET", "revocation-status") and len(parts) == 2:
            h = HashedId.from_hex(parts[1])
            return {"hash": h.hex(), "status": self.revocation_status(h)}
        if route == ("GET", "ledger-address") and len(parts) == 2:
            return self._ledger_address(TryteAddress(parts[1]))
        if route == ("GET", "trust") and len(parts) == 1:
            return {k: c.encoded.hex() for k, c in self.domain.certs().items()}
        if method.upper() != "POST" or len(parts) != 1:
            raise NotFound(f"no route for {method} {path}")

        try:
            req = json.loads(body or b"{}")
        except json.JSONDecodeError as exc:
            raise BadRequest(f"body is not JSON: {exc}") from None
        if not isinstance(req, dict):
            raise BadRequest("body must be a JSON object")
        now_s = self.clock() // 1000
        name = parts[0]
        if name == "preregister":
            self.domain.ltca.preregister(bytes.fromhex(req["canonical_id"]))
            return {"canonical_id": req["canonical_id"]}
        if name == "enroll":
            ltc = self.domain.ltca.enroll(bytes.fromhex(req["canonical_id"]),
                                          bytes.fromhex(req["public_key"]), now_s)
            return {"ltc": ltc.encoded.hex(), "ltc_hash": ltc.hashed_id().hex()}
        if name == "authorize":
            ltc = canonical_decode(bytes.fromhex(req["ltc"]))
            stc = self.domain.stca.authorize(ltc, bytes.fromhex(req["public_key"]), now_s)
            return {"stc": stc.encoded.hex(), "stc_hash": stc.hashed_id().hex()}
        if name == "misbehavior-report":
            return self.report(HashedId.from_hex(req["stc_hash"]),
                               bytes.fromhex(req.get("evidence", "")), str(req.get("reporter", "")))
        if name == "resolve":
            cid = self.resolve(HashedId.from_hex(req["stc_hash"]))
            return {"canonical_id": cid.hex()}
        raise NotFound(f"no route for POST {path}")

    def _ledger_address(self, address: TryteAddress) -> dict:
        entries = self.ledger.entries(address)
        if not entries:
            raise NotFound(f"no transactions at {address}")
        ra_pk = self.domain.ra.cert.public_key
        txs = []
        for tx, qt in entries:
            item = {"tx_id": tx.tx_id.hex(), "payload": tx.payload.hex(),
                    "attach_time": tx.attach_time, "queryable_time": qt}
            try:
                item["ra_signed"] = tx.revocation().verify(ra_pk)
            except PayloadError:
                item["ra_signed"] = False
            txs.append(item)
        return {"address": str(address), "transactions": txs}


# -- HTTP front end -----------------------------------------------------------


def _handler_for(service: VpkiService):
    class Handler(BaseHTTPRequestHandler):
        def _respond(self, method: str) -> None:
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            status, out = service.handle(method, self.path, body)
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(out)))
            self.end_headers()
            self.wfile.write(out)

        def do_GET(self):
            self._respond("GET")

        def do_POST(self):
            self._respond("POST")

        def log_message(self, fmt, *args):
            log.debug("%s " + fmt, self.address_string(), *args)

    return Handler


def serve(config: ServiceConfig, service: VpkiService | None = None,
          background: bool = False) -> ThreadingHTTPServer:
    """Start the HTTP front end. With ``background`` it runs in a daemon thread."""
    service = service or VpkiService(config)
    server = ThreadingHTTPServer(config.host_port, _handler_for(service))
    server.service = service  # type: ignore[attr-defined]
    if background:
        threading.Thread(target=server.serve_forever, daemon=True).start()
    else:
        log.info("serving on %s:%d", *server.server_address[:2])
        try:
            server.serve_forever()
        finally:
            server.server_close()
            service.close()
    return server
