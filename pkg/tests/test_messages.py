import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from peerlbs.credentials import PseudonymCertificate, RevocationList
from peerlbs.crypto import DecryptFailure, EcSuite, NullSuite, digest
from peerlbs.messages import (
    REPORT_RESPONSES,
    Authenticator,
    Beacon,
    Evidence,
    ExpiredPC,
    ExpiredServingPC,
    MisbehaviorReport,
    PeerQuery,
    PeerResponse,
    Query,
    RevokedPC,
    UnknownMessageKind,
    build_authenticator,
    decode,
    encode,
    open_query,
    open_response,
    seal_query,
    seal_response,
    sign_beacon,
    verify_authenticator,
    verify_beacon,
    verify_response,
)
from peerlbs.wire import MalformedBytes

u64 = st.integers(0, 2**64 - 1)
small = st.integers(0, 2**31 - 1)
blob = st.binary(max_size=40)
ts = st.floats(0, 1e7, allow_nan=False)


@st.composite
def pcs(draw):
    s = draw(st.integers(0, 1))
    group = draw(st.integers(0, 5)) if s else None
    start = draw(st.integers(0, 10**6))
    return PseudonymCertificate(draw(u64), draw(st.binary(min_size=33, max_size=33)), s, group,
                                start, start + draw(st.integers(1, 600)), draw(blob))


queries = st.builds(Query, small, st.lists(st.integers(0, 60000), min_size=1, max_size=5).map(tuple))
beacons = st.builds(Beacon, small, st.integers(0, 2**40), ts, pcs(), blob)
responses = st.builds(PeerResponse, blob, st.builds(Authenticator, ts, blob), ts, pcs(), blob)
peer_queries = st.builds(PeerQuery, blob, blob, ts, blob)
reports = st.builds(MisbehaviorReport, st.integers(0, 2), queries,
                    st.lists(st.builds(Evidence, blob, responses), max_size=3).map(tuple),
                    st.lists(beacons, max_size=3).map(tuple), pcs(), ts, blob)
crls = st.builds(RevocationList, u64, st.integers(0, 2**40), st.frozensets(u64, max_size=8),
                 st.frozensets(u64, max_size=4))


@pytest.mark.parametrize("strategy", [beacons, peer_queries, responses, reports, crls],
                         ids=["beacon", "peer_query", "peer_response", "report", "crl"])
@settings(max_examples=300, deadline=None)
@given(data=st.data())
def test_codec_roundtrip(strategy, data):
    msg = data.draw(strategy)
    raw = encode(msg)
    assert decode(raw) == msg
    assert encode(decode(raw)) == raw
    with pytest.raises(MalformedBytes):
        decode(raw[:-1])


@given(beacons, beacons)
def test_codec_injective(a, b):
    assert (encode(a) == encode(b)) == (a == b)


def test_unknown_kind():
    with pytest.raises(UnknownMessageKind):
        decode(b"\x09")
    with pytest.raises(UnknownMessageKind):
        encode(object())


def make_pc(suite, rng, serial=1, s=1, start=0, end=300):
    priv, pub = suite.keypair(rng)
    return PseudonymCertificate(serial, pub, s, 0 if s else None, start, end, b"x" * 64), priv


def test_flipped_signature_byte_decodes_but_fails(suite, rng):
    pc, sk = make_pc(suite, rng)
    b = sign_beacon(suite, 3, 1200, 10.0, pc, sk)
    raw = bytearray(encode(b))
    raw[-1] ^= 0xFF
    b2 = decode(bytes(raw))
    assert isinstance(b2, Beacon)
    assert verify_beacon(suite, b) and not verify_beacon(suite, b2)


def test_seal_open_roundtrip_and_wrong_key(suite, rng):
    q_pc, q_sk = make_pc(suite, rng, 1, s=0)
    s_pc, s_sk = make_pc(suite, rng, 2)
    other_pc, other_sk = make_pc(suite, rng, 3)
    query = Query(4, (2, 1))
    pq, key = seal_query(suite, 77, query, q_pc, q_sk, s_pc, rng, 10.0)
    opened = open_query(suite, pq, s_sk)
    assert (opened.qid, opened.query, opened.querier_pc, opened.session_key) == (77, query, q_pc, key)
    with pytest.raises(DecryptFailure):
        open_query(suite, pq, other_sk)
    pq2, _ = seal_query(suite, 77, query, q_pc, q_sk, s_pc, rng, 10.0)
    assert pq2.enc_body != pq.enc_body


def test_query_hides_querier_identity(suite, rng):
    q_pc, q_sk = make_pc(suite, rng, 123456789, s=0)
    s_pc, _ = make_pc(suite, rng, 2)
    pq, _ = seal_query(suite, 1, Query(4, (0,)), q_pc, q_sk, s_pc, rng, 10.0)
    raw = encode(pq)
    assert q_pc.public_key not in raw
    assert (123456789).to_bytes(8, "little") not in raw


def test_open_query_rejects_expired_and_revoked(rng):
    suite = NullSuite()
    q_pc, q_sk = make_pc(suite, rng, 1, s=0, start=0, end=300)
    s_pc, s_sk = make_pc(suite, rng, 2, start=0, end=900)
    pq, _ = seal_query(suite, 1, Query(4, (0,)), q_pc, q_sk, s_pc, rng, 400.0)
    with pytest.raises(ExpiredPC):
        open_query(suite, pq, s_sk)
    pq, _ = seal_query(suite, 1, Query(4, (0,)), q_pc, q_sk, s_pc, rng, 100.0)
    with pytest.raises(RevokedPC):
        open_query(suite, pq, s_sk, crl=RevocationList(1, 0, frozenset({1})))
    with pytest.raises(ExpiredServingPC):
        seal_query(suite, 1, Query(4, (0,)), q_pc, q_sk, s_pc, rng, 1000.0)


def test_authenticator_binding(suite, rng):
    pc, sk = make_pc(suite, rng)
    q = Query(1, (0,))
    auth = build_authenticator(suite, 9, q, b"resp", 5.0, sk)
    assert verify_authenticator(suite, auth, 9, q, digest(b"resp"), pc)
    assert not verify_authenticator(suite, auth, 9, q, digest(b"resq"), pc)
    assert not verify_authenticator(suite, auth, 10, q, digest(b"resp"), pc)
    assert not verify_authenticator(suite, auth, 9, Query(1, (1,)), digest(b"resp"), pc)


def test_response_roundtrip(suite, rng):
    pc, sk = make_pc(suite, rng)
    key = rng.bytes(32)
    q = Query(1, (0,))
    resp = seal_response(suite, 9, q, b"data", key, pc, sk, rng, 7.0)
    assert open_response(suite, resp, key) == (9, b"data")
    assert verify_response(suite, resp, 9, q, b"data")
    assert not verify_response(suite, resp, 9, q, b"date")
    with pytest.raises(DecryptFailure):
        open_response(suite, resp, rng.bytes(32))


def test_report_signature_over_everything(rng):
    from peerlbs.messages import sign_report, verify_report

    suite = EcSuite()
    pc, sk = make_pc(suite, rng)
    rep = sign_report(suite, REPORT_RESPONSES, Query(1, (0,)), (), (), pc, sk, 3.0)
    assert verify_report(suite, rep)
    assert verify_report(suite, decode(encode(rep)))
    forged = MisbehaviorReport(rep.kind, Query(2, (0,)), (), (), pc, 3.0, rep.sig)
    assert not verify_report(suite, forged)
