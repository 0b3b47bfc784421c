"""The honest-but-curious LBS server and its per-epoch POI database."""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional

from .credentials import EMPTY_CRL, PseudonymCertificate
from .crypto import digest
from .messages import Authenticator, BadSignature, ExpiredPC, Query, RevokedPC, verify_authenticator
from .wire import Reader, Writer

ALL_GROUPS = -1


class BadRegion(ValueError):
    pass


class UnknownEpoch(ValueError):
    pass


class CheckResult(enum.Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"


@dataclass(frozen=True)
class PoiEntry:
    rid: int
    type_index: int
    entry_index: int
    payload: bytes


def encode_entries(entries) -> bytes:
    w = Writer().u32(len(entries))
    for e in entries:
        w.u32(e.rid).u16(e.type_index).u32(e.entry_index).blob(e.payload)
    return w.getvalue()


def decode_entries(data: bytes) -> list[PoiEntry]:
    r = Reader(data)
    out = [PoiEntry(r.u32(), r.u16(), r.u32(), r.blob()) for _ in range(r.u32())]
    r.expect_end()
    return out


def group_types(group: int, t_total: int, groups: int) -> range:
    """Types covered by ``group`` under the public contiguous-block partition."""
    if group == ALL_GROUPS or groups <= 1:
        return range(t_total)
    block = math.ceil(t_total / groups)
    return range(group * block, min((group + 1) * block, t_total))


def prf_bytes(key: bytes, label: bytes, n: int) -> bytes:
    """Keyed PRF expanded in counter mode (BLAKE2b-512 blocks)."""
    blocks = []
    for i in range(-(-n // 64)):
        blocks.append(hashlib.blake2b(label + i.to_bytes(4, "little"), key=key[:64]).digest())
    return b"".join(blocks)[:n]


@dataclass(frozen=True)
class PoiConfig:
    db_seed: int = 0
    T_POI: int = 1200
    T_total: int = 6
    E: int = 10
    payload_size: int = 500
    G: int = 1
    n_regions: int = 16
    entry_counts: tuple = ()  # ((rid, type), count) overrides of E

    def count(self, rid: int, type_index: int) -> int:
        for key, n in self.entry_counts:
            if key == (rid, type_index):
                return n
        return self.E


@dataclass(frozen=True)
class RegionalPoiData:
    rid: int
    epoch: int
    group: int
    t_exp: int
    entries: tuple
    lbs_sig: bytes = b""

    def tbs(self) -> bytes:
        return (Writer().raw(b"RPD").u32(self.rid).u64(self.epoch).i32(self.group).i64(self.t_exp)
                .blob(encode_entries(self.entries)).getvalue())

    def to_bytes(self) -> bytes:
        return self.tbs() + Writer().blob(self.lbs_sig).getvalue()


def search(entries, query: Query) -> bytes:
    """Canonical response bytes for ``query`` over a set of entries."""
    wanted = set(query.poi_types)
    hits = sorted((e for e in entries if e.rid == query.rid and e.type_index in wanted),
                  key=lambda e: (e.type_index, e.entry_index))
    return encode_entries(hits)


def response_is_empty(resp: bytes) -> bool:
    return resp[:4] == b"\x00\x00\x00\x00"


@dataclass(frozen=True)
class LbsAnswer:
    resp: bytes
    t_exp: int
    sig: bytes


@dataclass(frozen=True)
class ContactRecord:
    pc_serial: int
    rid: int
    time: float
    kind: str  # regional_fetch | direct_query | proactive_check
    nbytes: int = 0


@dataclass
class LbsServer:
    suite: object
    config: PoiConfig
    private_key: bytes
    public_key: bytes
    crl_source: object = None     # callable -> RevocationList
    verify_pc: object = None      # callable(pc) -> bool
    contact_log: list = field(default_factory=list)

    def __post_init__(self):
        self._key = self.config.db_seed.to_bytes(8, "little", signed=True) + b"peerlbs-db"
        self._entry_cache: dict = {}
        self._regional_cache: dict = {}

    @classmethod
    def create(cls, suite, rng, config: PoiConfig, crl_source=None, verify_pc=None) -> "LbsServer":
        priv, pub = suite.keypair(rng)
        return cls(suite, config, priv, pub, crl_source, verify_pc)

    # -- database -----------------------------------------------------------

    def refresh_epoch(self, now: float) -> int:
        return int(now // self.config.T_POI)

    def t_exp(self, epoch: int) -> int:
        return (epoch + 1) * self.config.T_POI

    def region_entries(self, rid: int, epoch: int) -> tuple:
        key = (rid, epoch)
        cached = self._entry_cache.get(key)
        if cached is None:
            cfg = self.config
            out = []
            for t in range(cfg.T_total):
                for i in range(cfg.count(rid, t)):
                    label = Writer().u32(rid).u64(epoch).u16(t).u32(i).getvalue()
                    out.append(PoiEntry(rid, t, i, prf_bytes(self._key, label, cfg.payload_size)))
            cached = self._entry_cache[key] = tuple(out)
        return cached

    def regional_data(self, rid: int, epoch: int, group: int = ALL_GROUPS) -> RegionalPoiData:
        self._check_region(rid)
        if self.config.G <= 1:
            group = ALL_GROUPS
        key = (rid, epoch, group)
        data = self._regional_cache.get(key)
        if data is None:
            types = set(group_types(group, self.config.T_total, self.config.G))
            entries = tuple(e for e in self.region_entries(rid, epoch) if e.type_index in types)
            unsigned = RegionalPoiData(rid, epoch, group, self.t_exp(epoch), entries)
            data = RegionalPoiData(rid, epoch, group, unsigned.t_exp, entries,
                                   self.suite.sign(unsigned.tbs(), self.private_key))
            self._regional_cache[key] = data
        return data

    def response_bytes(self, query: Query, epoch: int) -> bytes:
        self._check_region(query.rid)
        return search(self.region_entries(query.rid, epoch), query)

    def verify_regional(self, data: RegionalPoiData) -> bool:
        return self.suite.verify(data.tbs(), data.lbs_sig, self.public_key)

    # -- node-facing operations --------------------------------------------

    def get_regional(self, rid: int, group: int, requester_pc: PseudonymCertificate, now: float) -> RegionalPoiData:
        self._check_requester(requester_pc, now)
        data = self.regional_data(rid, self.refresh_epoch(now), group)
        self.contact_log.append(ContactRecord(requester_pc.serial, rid, now, "regional_fetch",
                                              len(data.to_bytes())))
        return data

    def answer_query(self, query: Query, requester_pc: PseudonymCertificate, now: float) -> LbsAnswer:
        self._check_requester(requester_pc, now)
        epoch = self.refresh_epoch(now)
        resp = self.response_bytes(query, epoch)
        self.contact_log.append(ContactRecord(requester_pc.serial, query.rid, now, "direct_query", len(resp)))
        sig = self.suite.sign(Writer().raw(b"LBSR").blob(query.to_bytes()).blob(resp).getvalue(), self.private_key)
        return LbsAnswer(resp, self.t_exp(epoch), sig)

    def check_authenticator(self, qid: int, query: Query, resp_hash: bytes, auth: Authenticator,
                            serving_pc: PseudonymCertificate, now: float) -> CheckResult:
        if not verify_authenticator(self.suite, auth, qid, query, resp_hash, serving_pc):
            raise BadSignature("authenticator does not verify under serving PC")
        epoch = self.refresh_epoch(auth.timestamp)
        if epoch < 0 or epoch > self.refresh_epoch(now):
            raise UnknownEpoch(epoch)
        # Only the serving node's PC reaches the server; the querier stays hidden.
        self.contact_log.append(ContactRecord(serving_pc.serial, query.rid, now, "proactive_check"))
        if digest(self.response_bytes(query, epoch)) == resp_hash:
            return CheckResult.POSITIVE
        return CheckResult.NEGATIVE

    # -- helpers ------------------------------------------------------------

    def _check_region(self, rid: int):
        if not 0 <= rid < self.config.n_regions:
            raise BadRegion(rid)

    def _check_requester(self, pc: PseudonymCertificate, now: float):
        if self.verify_pc is not None and not self.verify_pc(pc):
            raise BadSignature("requester PC")
        if not pc.valid_at(now):
            raise ExpiredPC(pc.serial)
        crl = self.crl_source() if self.crl_source else EMPTY_CRL
        if crl.is_revoked_pc(pc.serial):
            raise RevokedPC(pc.serial)
