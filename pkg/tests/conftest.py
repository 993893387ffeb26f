import pytest

from tanglerev.authorities import bootstrap_trust
from tanglerev.certkit import generate_keypair
from tanglerev.harness import EPOCH
from tanglerev.tangle import Ledger

NOW = EPOCH
NOW_MS = EPOCH * 1000

_acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion, then assert it."""

    def record(number: int, name: str, ok: bool, detail: str = ""):
        _acceptance_lines.append(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {name}  {detail}")
        assert ok, f"criterion {number} ({name}) failed: {detail}"

    return record


@pytest.fixture
def ledger():
    return Ledger()


@pytest.fixture
def domain(ledger):
    return bootstrap_trust(b"test-domain", now=NOW - 3600, ledger=ledger)


@pytest.fixture
def enrolled(domain):
    """Factory: enroll + authorize a vehicle, returning (ltc, stc, stc_keys)."""

    def make(cid: bytes = b"V-0001", now: int = NOW):
        domain.ltca.preregister(cid)
        ltc = domain.ltca.enroll(cid, generate_keypair(cid + b"/ltc").public_key, now)
        keys = generate_keypair(cid + b"/stc/" + str(now).encode())
        stc = domain.stca.authorize(ltc, keys.public_key, now)
        return ltc, stc, keys

    return make
