"""Protocol messages, the response authenticator and the canonical wire codec.

Layout rules: every message starts with a one-byte kind tag, fields follow
in declaration order, integers are little-endian fixed width, timestamps are
float64 seconds, byte strings and lists carry a u32 length prefix. There are
no optional fields, so each message value has exactly one encoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .credentials import PseudonymCertificate, RevocationList
from .crypto import DIGEST_SIZE, SESSION_KEY_SIZE, DecryptFailure, digest, random_bytes
from .wire import MalformedBytes, Reader, Writer

KIND_BEACON = 1
KIND_PEER_QUERY = 2
KIND_PEER_RESPONSE = 3
KIND_REPORT = 4
KIND_CRL = 5

REPORT_RESPONSES = 0
REPORT_NON_SERVING_BEACON = 1
REPORT_BEACON_RATE = 2


class ProtocolError(Exception):
    pass


class UnknownMessageKind(ProtocolError, ValueError):
    pass


class ExpiredServingPC(ProtocolError):
    pass


class BadSignature(ProtocolError):
    pass


class ExpiredPC(ProtocolError):
    pass


class RevokedPC(ProtocolError):
    pass


__all__ = [
    "Authenticator", "Beacon", "Evidence", "MisbehaviorReport", "PeerQuery", "PeerResponse",
    "Query", "OpenedQuery", "decode", "encode", "encoded_size", "seal_query", "open_query",
    "seal_response", "open_response", "build_authenticator", "verify_authenticator",
    "sign_beacon", "verify_beacon", "sign_report", "verify_report",
    "MalformedBytes", "DecryptFailure",
]


@dataclass(frozen=True)
class Query:
    rid: int
    poi_types: tuple

    def __post_init__(self):
        types = tuple(sorted(set(int(t) for t in self.poi_types)))
        if not types:
            raise ValueError("query needs at least one POI type")
        object.__setattr__(self, "poi_types", types)

    def encode_into(self, w: Writer) -> Writer:
        w.u32(self.rid).u32(len(self.poi_types))
        for t in self.poi_types:
            w.u16(t)
        return w

    @classmethod
    def decode_from(cls, r: Reader) -> "Query":
        rid = r.u32()
        n = r.u32()
        types = tuple(r.u16() for _ in range(n))
        if not types:
            raise MalformedBytes("empty query type list")
        return cls(rid, types)

    def to_bytes(self) -> bytes:
        return self.encode_into(Writer()).getvalue()


@dataclass(frozen=True)
class Beacon:
    rid: int
    t_exp: int
    timestamp: float
    sender_pc: PseudonymCertificate
    sig: bytes

    def tbs(self) -> bytes:
        return Writer().raw(b"BCN").u32(self.rid).i64(self.t_exp).f64(self.timestamp).getvalue()


@dataclass(frozen=True)
class PeerQuery:
    enc_body: bytes
    enc_session_key: bytes
    timestamp: float
    sig: bytes

    def tbs(self) -> bytes:
        return Writer().raw(b"PQ").blob(self.enc_body).blob(self.enc_session_key).f64(self.timestamp).getvalue()


@dataclass(frozen=True)
class Authenticator:
    timestamp: float
    sig: bytes


@dataclass(frozen=True)
class PeerResponse:
    enc_body: bytes
    auth: Authenticator
    timestamp: float
    sender_pc: PseudonymCertificate
    sig: bytes

    def tbs(self) -> bytes:
        return (Writer().raw(b"PR").blob(self.enc_body).f64(self.auth.timestamp).blob(self.auth.sig)
                .f64(self.timestamp).getvalue())


@dataclass(frozen=True)
class Evidence:
    session_key: bytes
    response: PeerResponse


@dataclass(frozen=True)
class MisbehaviorReport:
    kind: int
    query: Query
    evidence: tuple
    beacons: tuple
    reporter_pc: PseudonymCertificate
    timestamp: float
    sig: bytes = b""

    def tbs(self) -> bytes:
        w = Writer().raw(b"RPT").u8(self.kind)
        self.query.encode_into(w)
        _write_evidence(w, self.evidence)
        _write_beacons(w, self.beacons)
        self.reporter_pc.encode_into(w)
        w.f64(self.timestamp)
        return w.getvalue()


@dataclass(frozen=True)
class OpenedQuery:
    qid: int
    query: Query
    querier_pc: PseudonymCertificate
    session_key: bytes


# -- codec -------------------------------------------------------------------

def _write_beacon_fields(w: Writer, b: Beacon):
    w.u32(b.rid).i64(b.t_exp).f64(b.timestamp)
    b.sender_pc.encode_into(w)
    w.blob(b.sig)


def _read_beacon_fields(r: Reader) -> Beacon:
    rid, t_exp, ts = r.u32(), r.i64(), r.f64()
    pc = PseudonymCertificate.decode_from(r)
    return Beacon(rid, t_exp, ts, pc, r.blob())


def _write_response_fields(w: Writer, m: PeerResponse):
    w.blob(m.enc_body).f64(m.auth.timestamp).blob(m.auth.sig).f64(m.timestamp)
    m.sender_pc.encode_into(w)
    w.blob(m.sig)


def _read_response_fields(r: Reader) -> PeerResponse:
    body = r.blob()
    auth = Authenticator(r.f64(), r.blob())
    ts = r.f64()
    pc = PseudonymCertificate.decode_from(r)
    return PeerResponse(body, auth, ts, pc, r.blob())


def _write_evidence(w: Writer, evidence):
    w.u32(len(evidence))
    for ev in evidence:
        w.blob(ev.session_key)
        _write_response_fields(w, ev.response)


def _write_beacons(w: Writer, beacons):
    w.u32(len(beacons))
    for b in beacons:
        _write_beacon_fields(w, b)


def encode(message) -> bytes:
    w = Writer()
    if isinstance(message, Beacon):
        w.u8(KIND_BEACON)
        _write_beacon_fields(w, message)
    elif isinstance(message, PeerQuery):
        w.u8(KIND_PEER_QUERY).blob(message.enc_body).blob(message.enc_session_key)
        w.f64(message.timestamp).blob(message.sig)
    elif isinstance(message, PeerResponse):
        w.u8(KIND_PEER_RESPONSE)
        _write_response_fields(w, message)
    elif isinstance(message, MisbehaviorReport):
        w.u8(KIND_REPORT).u8(message.kind)
        message.query.encode_into(w)
        _write_evidence(w, message.evidence)
        _write_beacons(w, message.beacons)
        message.reporter_pc.encode_into(w)
        w.f64(message.timestamp).blob(message.sig)
    elif isinstance(message, RevocationList):
        w.u8(KIND_CRL).u64(message.version).i64(message.publish_time)
        pcs, ltcs = sorted(message.revoked_pc_serials), sorted(message.revoked_ltc_serials)
        w.u32(len(pcs))
        for s in pcs:
            w.u64(s)
        w.u32(len(ltcs))
        for s in ltcs:
            w.u64(s)
    else:
        raise UnknownMessageKind(type(message).__name__)
    return w.getvalue()


def decode(data: bytes):
    r = Reader(data)
    kind = r.u8()
    if kind == KIND_BEACON:
        msg = _read_beacon_fields(r)
    elif kind == KIND_PEER_QUERY:
        msg = PeerQuery(r.blob(), r.blob(), r.f64(), r.blob())
    elif kind == KIND_PEER_RESPONSE:
        msg = _read_response_fields(r)
    elif kind == KIND_REPORT:
        rkind = r.u8()
        query = Query.decode_from(r)
        evidence = tuple(Evidence(r.blob(), _read_response_fields(r)) for _ in range(r.u32()))
        beacons = tuple(_read_beacon_fields(r) for _ in range(r.u32()))
        pc = PseudonymCertificate.decode_from(r)
        msg = MisbehaviorReport(rkind, query, evidence, beacons, pc, r.f64(), r.blob())
    elif kind == KIND_CRL:
        version, t = r.u64(), r.i64()
        pcs = frozenset(r.u64() for _ in range(r.u32()))
        ltcs = frozenset(r.u64() for _ in range(r.u32()))
        msg = RevocationList(version, t, pcs, ltcs)
    else:
        raise UnknownMessageKind(kind)
    r.expect_end()
    return msg


def encoded_size(message) -> int:
    return len(encode(message))


# -- beacons -----------------------------------------------------------------

def sign_beacon(suite, rid: int, t_exp: int, timestamp: float, pc, sk) -> Beacon:
    unsigned = Beacon(rid, t_exp, timestamp, pc, b"")
    return Beacon(rid, t_exp, timestamp, pc, suite.sign(unsigned.tbs(), sk))


def verify_beacon(suite, beacon: Beacon) -> bool:
    return suite.verify(beacon.tbs(), beacon.sig, beacon.sender_pc.public_key)


# -- authenticator -----------------------------------------------------------

def _auth_tbs(qid: int, query: Query, resp_hash: bytes, timestamp: float) -> bytes:
    w = Writer().raw(b"AUTH").u64(qid)
    query.encode_into(w)
    return w.raw(resp_hash).f64(timestamp).getvalue()


def build_authenticator(suite, qid: int, query: Query, resp_bytes: bytes, timestamp: float,
                        serving_sk: bytes) -> Authenticator:
    return Authenticator(timestamp, suite.sign(_auth_tbs(qid, query, digest(resp_bytes), timestamp), serving_sk))


def verify_authenticator(suite, auth: Authenticator, qid: int, query: Query, resp_hash: bytes,
                         serving_pc: PseudonymCertificate) -> bool:
    if len(resp_hash) != DIGEST_SIZE:
        return False
    return suite.verify(_auth_tbs(qid, query, resp_hash, auth.timestamp), auth.sig, serving_pc.public_key)


# -- query sealing -----------------------------------------------------------

def _query_body(qid: int, query: Query, querier_pc: PseudonymCertificate) -> bytes:
    w = Writer().u64(qid).u32(query.rid)
    query.encode_into(w)
    querier_pc.encode_into(w)
    return w.getvalue()


def seal_query(suite, qid: int, query: Query, querier_pc, querier_sk, serving_pc, rng, now: float):
    """Encrypt ``query`` for one serving node. Returns ``(PeerQuery, session_key)``."""
    if not serving_pc.valid_at(now):
        raise ExpiredServingPC(f"PC {serving_pc.serial} not valid at {now}")
    session_key = random_bytes(rng, SESSION_KEY_SIZE)
    enc_body = suite.seal(session_key, _query_body(qid, query, querier_pc), rng)
    enc_key = suite.wrap_key(session_key, serving_pc.public_key, rng)
    unsigned = PeerQuery(enc_body, enc_key, now, b"")
    return PeerQuery(enc_body, enc_key, now, suite.sign(unsigned.tbs(), querier_sk)), session_key


def open_query(suite, peer_query: PeerQuery, serving_sk: bytes,
               crl: Optional[RevocationList] = None, verify_pc=None) -> OpenedQuery:
    session_key = suite.unwrap_key(peer_query.enc_session_key, serving_sk)
    r = Reader(suite.open(session_key, peer_query.enc_body))
    try:
        qid = r.u64()
        rid = r.u32()
        query = Query.decode_from(r)
        querier_pc = PseudonymCertificate.decode_from(r)
        r.expect_end()
    except (MalformedBytes, ValueError) as exc:
        raise DecryptFailure("body does not parse") from exc
    if query.rid != rid:
        raise DecryptFailure("inconsistent region in body")
    if not suite.verify(peer_query.tbs(), peer_query.sig, querier_pc.public_key):
        raise BadSignature("query signature")
    if verify_pc is not None and not verify_pc(querier_pc):
        raise BadSignature("querier PC not issued by PCA")
    if not querier_pc.valid_at(peer_query.timestamp):
        raise ExpiredPC(querier_pc.serial)
    if crl is not None and crl.is_revoked_pc(querier_pc.serial):
        raise RevokedPC(querier_pc.serial)
    return OpenedQuery(qid, query, querier_pc, session_key)


# -- responses ---------------------------------------------------------------

def seal_response(suite, qid: int, query: Query, resp_bytes: bytes, session_key: bytes,
                  serving_pc, serving_sk, rng, now: float) -> PeerResponse:
    auth = build_authenticator(suite, qid, query, resp_bytes, now, serving_sk)
    body = suite.seal(session_key, Writer().u64(qid).blob(resp_bytes).getvalue(), rng)
    unsigned = PeerResponse(body, auth, now, serving_pc, b"")
    return PeerResponse(body, auth, now, serving_pc, suite.sign(unsigned.tbs(), serving_sk))


def open_response(suite, response: PeerResponse, session_key: bytes) -> tuple[int, bytes]:
    """Decrypt a response body; returns ``(qid, resp_bytes)``."""
    r = Reader(suite.open(session_key, response.enc_body))
    try:
        qid = r.u64()
        resp = r.blob()
        r.expect_end()
    except MalformedBytes as exc:
        raise DecryptFailure("body does not parse") from exc
    return qid, resp


def verify_response(suite, response: PeerResponse, qid: int, query: Query, resp_bytes: bytes) -> bool:
    """Outer signature plus authenticator binding, both under the sender PC."""
    if not suite.verify(response.tbs(), response.sig, response.sender_pc.public_key):
        return False
    return verify_authenticator(suite, response.auth, qid, query, digest(resp_bytes), response.sender_pc)


# -- reports -----------------------------------------------------------------

def sign_report(suite, kind: int, query: Query, evidence, beacons, reporter_pc, reporter_sk,
                now: float) -> MisbehaviorReport:
    unsigned = MisbehaviorReport(kind, query, tuple(evidence), tuple(beacons), reporter_pc, now)
    return MisbehaviorReport(kind, query, tuple(evidence), tuple(beacons), reporter_pc, now,
                             suite.sign(unsigned.tbs(), reporter_sk))


def verify_report(suite, report: MisbehaviorReport) -> bool:
    return suite.verify(report.tbs(), report.sig, report.reporter_pc.public_key)
