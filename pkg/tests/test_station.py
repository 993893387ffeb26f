import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import NOW, NOW_MS
from tanglerev.authorities import MisbehaviorReport, bootstrap_trust
from tanglerev.certkit import HashedId, generate_keypair
from tanglerev.station import (
    Connectivity,
    ExpiredCredential,
    NeighborUnreachable,
    NoCredential,
    ReceiveResult,
    RevocationStatus,
    SecuredMessage,
    Station,
    StationConfig,
    sign_message,
)
from tanglerev.tangle import (
    LatencyModel,
    Ledger,
    RevocationPayload,
    ZeroValueTransaction,
    derive_address,
)


def station(domain, ledger=None, connectivity=Connectivity.DIRECT, neighbors=(), network=None,
            sid="obu", **kw):
    cfg = StationConfig(sid, domain.root.cert, domain.ra.cert, (domain.stca.cert,),
                        connectivity=connectivity, neighbor_ids=list(neighbors), **kw)
    return Station(cfg, ledger, network)


def revoke(domain, stc, at=NOW_MS):
    receipt, _ = domain.ma.report_misbehavior(MisbehaviorReport(stc.hashed_id()), at)
    return receipt


# -- send ------------------------------------------------------------------------

def test_send_produces_verifiable_message(domain, enrolled):
    _, stc, keys = enrolled()
    s = station(domain)
    s.set_credential(stc, keys)
    msg = s.send(b"CAM", NOW_MS)
    assert msg.verify_signature()
    assert s.verify_message(msg, NOW_MS)


def test_send_without_credential(domain):
    with pytest.raises(NoCredential):
        station(domain).send(b"x", NOW_MS)


def test_send_with_expired_stc(domain, enrolled):
    _, stc, keys = enrolled()
    s = station(domain)
    s.set_credential(stc, keys)
    with pytest.raises(ExpiredCredential):
        s.send(b"x", stc.not_after * 1000)


def test_generation_time_changes_signed_bytes(domain, enrolled):
    _, stc, keys = enrolled()
    s = station(domain)
    s.set_credential(stc, keys)
    a, b = s.send(b"same", NOW_MS), s.send(b"same", NOW_MS + 100)
    assert (SecuredMessage.signed_bytes(a.payload, a.generation_time, stc)
            != SecuredMessage.signed_bytes(b.payload, b.generation_time, stc))
    assert a.signature != b.signature


# -- check_revocation ------------------------------------------------------------

def test_never_revoked_is_valid(domain, ledger, enrolled):
    _, stc, _ = enrolled()
    assert station(domain, ledger).check_revocation(stc, NOW_MS) is RevocationStatus.VALID


def test_revoked_after_queryable_time(domain, enrolled):
    ledger = Ledger(LatencyModel.constant(8000))
    domain.ra.ledger = ledger
    _, stc, _ = enrolled()
    receipt = revoke(domain, stc)
    s = station(domain, ledger)
    assert s.check_revocation(stc, receipt.queryable_time - 1) is RevocationStatus.VALID
    assert s.check_revocation(stc, receipt.queryable_time) is RevocationStatus.REVOKED


def test_forged_transaction_is_ignored(domain, ledger, enrolled):
    _, stc, _ = enrolled()
    h = stc.hashed_id()
    mallory = generate_keypair(b"mallory")
    forged = RevocationPayload.create(h, NOW, domain.ra.cert.hashed_id(), mallory.private_key)
    ledger.attach(ZeroValueTransaction(derive_address(h), forged.encode(), NOW_MS))
    assert station(domain, ledger).check_revocation(stc, NOW_MS) is RevocationStatus.VALID


def test_genuine_payload_for_other_cert_replayed_is_ignored(domain, ledger, enrolled):
    _, victim, _ = enrolled(b"V-victim")
    _, other, _ = enrolled(b"V-other")
    tx, _ = domain.ra.publish_revocation(other.hashed_id(), NOW_MS)
    ledger.attach(ZeroValueTransaction(derive_address(victim.hashed_id()), tx.payload, NOW_MS))
    assert station(domain, ledger).check_revocation(victim, NOW_MS) is RevocationStatus.VALID


def test_one_ledger_query_per_check(domain, ledger, enrolled):
    _, stc, _ = enrolled()
    for i in range(200):
        domain.ra.publish_revocation(HashedId(i.to_bytes(8, "big")), NOW_MS)
    s = station(domain, ledger)
    before = ledger.query_count
    s.check_revocation(stc, NOW_MS)
    assert ledger.query_count - before == 1 and s.ledger_queries == 1


@settings(max_examples=15, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=12), st.integers(0, 2**32))
def test_status_agrees_with_ground_truth(flags, seed):
    ledger = Ledger()
    d = bootstrap_trust(b"prop", now=NOW - 10, ledger=ledger)
    truth, stcs = set(), []
    for i, revoked in enumerate(flags):
        cid = f"V{i}".encode()
        d.ltca.preregister(cid)
        ltc = d.ltca.enroll(cid, generate_keypair(cid).public_key, NOW)
        stc = d.stca.authorize(ltc, generate_keypair(cid + b"s").public_key, NOW)
        stcs.append(stc)
        if revoked:
            d.ma.report_misbehavior(MisbehaviorReport(stc.hashed_id()), NOW_MS)
            truth.add(stc.hashed_id())
    # attacker noise on random victims
    rng = random.Random(seed)
    mallory = generate_keypair(b"m")
    for stc in rng.sample(stcs, k=len(stcs) // 2):
        p = RevocationPayload.create(stc.hashed_id(), NOW, d.ra.cert.hashed_id(), mallory.private_key)
        ledger.attach(ZeroValueTransaction(derive_address(stc.hashed_id()), p.encode(), NOW_MS))
    s = station(d, ledger)
    got = {c.hashed_id() for c in stcs if s.check_revocation(c, NOW_MS) is RevocationStatus.REVOKED}
    assert got == truth


# -- delegation ------------------------------------------------------------------

@pytest.fixture
def revoked_stc(domain, enrolled):
    _, stc, keys = enrolled()
    revoke(domain, stc)
    return stc, keys


def test_p2p_delegation_revoked(domain, ledger, revoked_stc):
    stc, _ = revoked_stc
    net = {}
    net["rsu"] = station(domain, ledger, sid="rsu")
    obu = station(domain, None, Connectivity.P2P_ONLY, ["rsu"], net)
    assert obu.check_revocation(stc, NOW_MS) is RevocationStatus.REVOKED
    assert obu.delegate_check("rsu", stc.hashed_id(), NOW_MS) is RevocationStatus.REVOKED


def test_delegation_to_offline_neighbor_is_unknown(domain, revoked_stc):
    stc, _ = revoked_stc
    net = {"n": station(domain, None, Connectivity.OFFLINE, sid="n")}
    obu = station(domain, None, Connectivity.P2P_ONLY, ["n"], net)
    assert obu.delegate_check("n", stc.hashed_id(), NOW_MS) is RevocationStatus.UNKNOWN
    assert obu.check_revocation(stc, NOW_MS) is RevocationStatus.UNKNOWN


def test_delegation_falls_back_in_order(domain, ledger, revoked_stc):
    stc, _ = revoked_stc
    first = station(domain, ledger, sid="first")
    first.reachable = False
    second = station(domain, ledger, sid="second")
    third = station(domain, ledger, sid="third")
    net = {"first": first, "second": second, "third": third}
    obu = station(domain, None, Connectivity.P2P_ONLY, ["missing", "first", "second", "third"], net)
    with pytest.raises(NeighborUnreachable):
        obu.delegate_check("first", stc.hashed_id(), NOW_MS)
    assert obu.check_revocation(stc, NOW_MS) is RevocationStatus.REVOKED
    assert (first.ledger_queries, second.ledger_queries, third.ledger_queries) == (0, 1, 0)


def test_delegation_is_single_hop(domain, ledger, revoked_stc):
    stc, _ = revoked_stc
    net = {}
    net["direct"] = station(domain, ledger, sid="direct")
    net["relay"] = station(domain, None, Connectivity.P2P_ONLY, ["direct"], net, sid="relay")
    obu = station(domain, None, Connectivity.P2P_ONLY, ["relay"], net)
    assert obu.check_revocation(stc, NOW_MS) is RevocationStatus.UNKNOWN


def test_p2p_with_no_neighbors_behaves_offline(domain, revoked_stc):
    stc, _ = revoked_stc
    obu = station(domain, None, Connectivity.P2P_ONLY)
    assert obu.check_revocation(stc, NOW_MS) is RevocationStatus.UNKNOWN


# -- receive pipeline ------------------------------------------------------------

def test_receive_valid_sender(domain, ledger, enrolled):
    _, stc, keys = enrolled()
    assert station(domain, ledger).receive(sign_message(stc, keys, b"m", NOW_MS), NOW_MS) \
        is ReceiveResult.ACCEPTED


def test_receive_revoked_sender(domain, ledger, revoked_stc):
    stc, keys = revoked_stc
    assert station(domain, ledger).receive(sign_message(stc, keys, b"m", NOW_MS), NOW_MS) \
        is ReceiveResult.IGNORED_REVOKED


def test_receive_offline_is_ignored(domain, enrolled):
    _, stc, keys = enrolled()
    obu = station(domain, None, Connectivity.OFFLINE)
    assert obu.receive(sign_message(stc, keys, b"m", NOW_MS), NOW_MS) is ReceiveResult.IGNORED_UNKNOWN


def test_receive_bad_signature(domain, ledger, enrolled):
    _, stc, keys = enrolled()
    msg = sign_message(stc, keys, b"m", NOW_MS)
    tampered = SecuredMessage(b"M", msg.generation_time, stc, msg.signature)
    assert station(domain, ledger).receive(tampered, NOW_MS) is ReceiveResult.IGNORED_BAD_SIGNATURE


def test_receive_untrusted_issuer(domain, ledger):
    other = bootstrap_trust(b"rogue", now=NOW - 10)
    other.ltca.preregister(b"R")
    ltc = other.ltca.enroll(b"R", generate_keypair(b"r1").public_key, NOW)
    keys = generate_keypair(b"r2")
    stc = other.stca.authorize(ltc, keys.public_key, NOW)
    msg = sign_message(stc, keys, b"m", NOW_MS)
    assert station(domain, ledger).receive(msg, NOW_MS) is ReceiveResult.IGNORED_BAD_SIGNATURE


def test_receive_expired_stc(domain, ledger, enrolled):
    _, stc, keys = enrolled()
    t = stc.not_after * 1000
    assert station(domain, ledger).receive(sign_message(stc, keys, b"m", t), t) \
        is ReceiveResult.IGNORED_BAD_SIGNATURE


def test_pipeline_order_is_configurable(domain, ledger, revoked_stc):
    stc, keys = revoked_stc
    msg = sign_message(stc, keys, b"m", NOW_MS)
    tampered = SecuredMessage(b"X", msg.generation_time, stc, msg.signature)
    check_first = station(domain, ledger)
    verify_first = station(domain, ledger, check_before_verify=False)
    assert check_first.receive(tampered, NOW_MS) is ReceiveResult.IGNORED_REVOKED
    assert verify_first.receive(tampered, NOW_MS) is ReceiveResult.IGNORED_BAD_SIGNATURE
