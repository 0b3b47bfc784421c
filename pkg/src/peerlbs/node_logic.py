"""Per-node protocol state machine: beaconing, regional refresh, querying,
serving, response validation and CRL post-checking.

A ``Node`` never touches the network itself. It returns the messages it
wants to emit and the simulation engine decides who receives them. Calls to
the LBS server and the resolution authority go through ``Services`` and are
synchronous (the infrastructure is reached over a secure channel).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

from .credentials import EMPTY_CRL
from .crypto import DecryptFailure, digest
from .lbs_server import ALL_GROUPS, CheckResult, group_types, response_is_empty, search
from .messages import (
    REPORT_BEACON_RATE,
    REPORT_NON_SERVING_BEACON,
    REPORT_RESPONSES,
    Evidence,
    ProtocolError,
    Query,
    open_query,
    open_response,
    seal_query,
    seal_response,
    sign_beacon,
    sign_report,
    verify_beacon,
    verify_response,
)


class WrongRegion(ValueError):
    pass


# -- timing gate ---------------------------------------------------------------

@dataclass(frozen=True)
class Defer:
    until: float


@dataclass(frozen=True)
class Start:
    deadline: float


def timing_gate(now: float, t_exp: Optional[float], T_wait: float) -> Union[Defer, Start]:
    """Keep a query's listening window inside one POI epoch."""
    if t_exp is None or t_exp <= now:
        return Start(now + T_wait)
    remaining = t_exp - now
    if remaining < T_wait / 2:
        return Defer(t_exp)
    if remaining <= T_wait:
        return Start(t_exp)
    return Start(now + T_wait)


# -- state records -------------------------------------------------------------

@dataclass(frozen=True)
class NodeParams:
    T_wait: float = 60.0
    T_beacon: object = 10.0          # float, or (lo, hi) for uniform intervals
    N: int = 3
    Pr_check: float = 0.0
    G: int = 1
    T_total: int = 6
    rate_window: float = 60.0
    rate_limit: int = 12
    crl_post_check: bool = True

    @property
    def beacon_randomized(self) -> bool:
        return isinstance(self.T_beacon, tuple)

    @property
    def nominal_beacon_interval(self) -> float:
        if self.beacon_randomized:
            lo, hi = self.T_beacon
            return (lo + hi) / 2
        return float(self.T_beacon)


@dataclass
class Services:
    suite: object
    facility: object
    lbs: object
    report_sink: object = None      # callable(report, now) -> ReportVerdict | None

    @property
    def crl(self):
        return self.facility.crl if self.facility is not None else EMPTY_CRL

    def verify_pc(self, pc) -> bool:
        return self.facility.verify_pc(pc)


@dataclass
class Contacted:
    qid: int
    session_key: bytes
    serving_pc: object


@dataclass
class Collected:
    response: object
    session_key: bytes
    qid: int
    resp: bytes


@dataclass
class QueryAttempt:
    attempt_id: int
    query: Query
    requested_at: float
    started_at: float
    deadline: float
    N_target: int
    contacted: dict = field(default_factory=dict)     # serving PC serial -> Contacted
    responses: list = field(default_factory=list)     # [Collected]
    epoch_t_exp: Optional[int] = None
    state: str = "Listening"


@dataclass(frozen=True)
class CacheHit:
    requested_at: float


@dataclass(frozen=True)
class Deferred:
    until: float


@dataclass
class Concluded:
    """Final outcome of one query. ``source`` is local, peer, lbs or conflicted."""

    query: Query
    requested_at: float
    source: str
    attempt: Optional[QueryAttempt] = None
    accepted: Optional[bytes] = None
    checked: bool = False
    check_result: Optional[CheckResult] = None
    report: object = None


@dataclass
class HistoryEntry:
    attempt: QueryAttempt
    accepted: bytes
    concluded_at: float
    post_checked: bool = False
    detected: bool = False


class Node:
    def __init__(self, nid: str, wallet, params: NodeParams, services: Services, rng, beacon_rng=None):
        self.nid = nid
        self.wallet = wallet
        self.params = params
        self.services = services
        self.rng = rng
        self.beacon_rng = beacon_rng if beacon_rng is not None else rng
        self.rid: Optional[int] = None
        self.cache: dict = {}              # rid -> RegionalPoiData
        self.subset_cache: dict = {}       # (rid, type) -> t_exp
        self.attempt: Optional[QueryAttempt] = None
        self.seen_qids: set = set()
        self.issued_qids: set = set()
        self.known_t_exp: Optional[int] = None
        self.beacon_tracker: dict = {}     # PC serial -> deque of beacons
        self.reported_pcs: set = set()
        self.opened: list = []             # (querier PC serial, rid, time) for every query opened
        self.history: list = []
        self.reports: list = []
        self.online = True                 # False once the trip is over
        self._attempt_seq = 0
        self._crl_seen: frozenset = frozenset()

    # -- identity -------------------------------------------------------------

    def current_pc(self, now: float):
        pc = self.wallet.pc_at(now)
        if pc is None or self.services.crl.is_revoked_pc(pc.serial):
            return None
        return pc

    def is_serving(self, now: float) -> bool:
        pc = self.current_pc(now)
        return pc is not None and pc.s == 1

    def group(self, now: float) -> int:
        pc = self.current_pc(now)
        if pc is None or pc.group is None or self.params.G <= 1:
            return ALL_GROUPS
        return pc.group

    def _sk(self, pc) -> bytes:
        return self.wallet.key_for(pc)

    # -- cache ----------------------------------------------------------------

    def fresh_regional(self, rid: int, now: float):
        data = self.cache.get(rid)
        if data is not None and data.t_exp > now:
            return data
        return None

    def serving_data(self, now: float):
        """Fresh regional data for the current region in the current PC's group."""
        if self.rid is None:
            return None
        data = self.fresh_regional(self.rid, now)
        if data is None or (self.params.G > 1 and data.group != self.group(now)):
            return None
        return data

    def _covered(self, query: Query, now: float) -> bool:
        data = self.fresh_regional(query.rid, now)
        held = set(group_types(data.group, self.params.T_total, self.params.G)) if data is not None else set()
        for t in query.poi_types:
            if t in held:
                continue
            if self.subset_cache.get((query.rid, t), 0) > now:
                continue
            return False
        return True

    # -- beaconing ------------------------------------------------------------

    def beacon_tick(self, now: float):
        pc = self.current_pc(now)
        if pc is None or pc.s != 1:
            return None
        data = self.serving_data(now)
        if data is None:
            return None
        return sign_beacon(self.services.suite, self.rid, data.t_exp, now, pc, self._sk(pc))

    def next_beacon_delay(self) -> float:
        if self.params.beacon_randomized:
            lo, hi = self.params.T_beacon
            return float(self.beacon_rng.uniform(lo, hi))
        return float(self.params.T_beacon)

    # -- regional POI refresh -------------------------------------------------

    def maybe_fetch_regional(self, now: float):
        pc = self.current_pc(now)
        if pc is None or pc.s != 1 or self.rid is None:
            return None
        if self.serving_data(now) is not None:
            return None
        lbs = self.services.lbs
        data = lbs.get_regional(self.rid, self.group(now), pc, now)
        if not lbs.verify_regional(data):
            return None
        self.cache[self.rid] = data
        return data

    # -- querying -------------------------------------------------------------

    def initiate_query(self, query: Query, now: float, requested_at: Optional[float] = None):
        if query.rid != self.rid:
            raise WrongRegion(f"query for {query.rid} from region {self.rid}")
        requested_at = now if requested_at is None else requested_at
        if self._covered(query, now):
            return CacheHit(requested_at)
        pc = self.current_pc(now)
        if pc is not None and pc.s == 1:
            # Serving nodes already exposed themselves to the LBS; ask it directly.
            return self.query_lbs(query, now, requested_at)
        gate = timing_gate(now, self.known_t_exp, self.params.T_wait)
        if isinstance(gate, Defer):
            return Deferred(gate.until)
        self._attempt_seq += 1
        self.attempt = QueryAttempt(self._attempt_seq, query, requested_at, now, gate.deadline, self.params.N)
        return self.attempt

    def query_lbs(self, query: Query, now: float, requested_at: float) -> Concluded:
        pc = self.current_pc(now)
        # Direct answers are not cached: only data obtained from peers counts as a hit.
        answer = self.services.lbs.answer_query(query, pc, now)
        return Concluded(query, requested_at, "lbs", accepted=answer.resp)

    def _fresh_qid(self) -> int:
        while True:
            qid = int(self.rng.integers(0, 2**63, dtype="int64"))
            if qid not in self.issued_qids:
                self.issued_qids.add(qid)
                return qid

    def _track_beacon(self, beacon, now: float):
        pc = beacon.sender_pc
        q = self.beacon_tracker.setdefault(pc.serial, deque())
        q.append(beacon)
        while q and now - q[0].timestamp >= self.params.rate_window:
            q.popleft()
        if len(q) > self.params.rate_limit and pc.serial not in self.reported_pcs:
            self.reported_pcs.add(pc.serial)
            self.file_report(REPORT_BEACON_RATE, Query(beacon.rid, (0,)), (), tuple(q), now)

    def on_beacon(self, beacon, now: float):
        """Handle an overheard beacon; may return a PeerQuery for its sender."""
        suite = self.services.suite
        pc = beacon.sender_pc
        if not verify_beacon(suite, beacon) or not self.services.verify_pc(pc):
            return None
        if not pc.valid_at(beacon.timestamp) or self.services.crl.is_revoked_pc(pc.serial):
            return None
        self._track_beacon(beacon, now)
        if pc.s != 1:
            if pc.serial not in self.reported_pcs:
                self.reported_pcs.add(pc.serial)
                self.file_report(REPORT_NON_SERVING_BEACON, Query(beacon.rid, (0,)), (), (beacon,), now)
            return None
        if beacon.t_exp > now and (self.known_t_exp is None or beacon.t_exp > self.known_t_exp):
            self.known_t_exp = beacon.t_exp
        att = self.attempt
        if att is None or att.state != "Listening" or now >= att.deadline:
            return None
        if beacon.rid != att.query.rid or beacon.t_exp <= now:
            return None
        if att.epoch_t_exp is not None and beacon.t_exp != att.epoch_t_exp:
            return None
        if self.params.G > 1:
            held = group_types(pc.group if pc.group is not None else ALL_GROUPS, self.params.T_total, self.params.G)
            if any(t not in held for t in att.query.poi_types):
                return None
        if pc.serial in att.contacted or len(att.contacted) >= att.N_target:
            return None
        mine = self.current_pc(now)
        if mine is None:
            return None
        qid = self._fresh_qid()
        pq, key = seal_query(suite, qid, att.query, mine, self._sk(mine), pc, self.rng, now)
        att.contacted[pc.serial] = Contacted(qid, key, pc)
        att.epoch_t_exp = beacon.t_exp
        att.deadline = min(att.deadline, beacon.t_exp)
        return pq

    def on_response(self, response, now: float) -> bool:
        """Collect a peer response. Returns True once N responses are in."""
        att = self.attempt
        if att is None or att.state != "Listening":
            return False
        entry = att.contacted.get(response.sender_pc.serial)
        if entry is None or response.sender_pc != entry.serving_pc:
            return False
        try:
            qid, resp = open_response(self.services.suite, response, entry.session_key)
        except DecryptFailure:
            return False
        if qid != entry.qid or not verify_response(self.services.suite, response, qid, att.query, resp):
            return False
        if any(c.qid == qid for c in att.responses):
            return False
        att.responses.append(Collected(response, entry.session_key, qid, resp))
        return len(att.responses) >= att.N_target

    def conclude_attempt(self, now: float) -> Concluded:
        att = self.attempt
        self.attempt = None
        att.state = "Done"
        j = len(att.responses)
        if j == 0:
            return _attach(self.query_lbs(att.query, now, att.requested_at), att)
        if j == 1:
            first = att.responses[0]
            out = Concluded(att.query, att.requested_at, "peer", att)
            if self.rng.random() < self.params.Pr_check:
                out.checked = True
                out.check_result = self.services.lbs.check_authenticator(
                    first.qid, att.query, digest(first.resp), first.response.auth, first.response.sender_pc, now)
                if out.check_result is CheckResult.NEGATIVE:
                    out.source = "conflicted"
                    out.report = self.file_report(REPORT_RESPONSES, att.query, [_evidence(first)], (), now)
                    return out
            self._accept(att, first.resp, now)
            out.accepted = first.resp
            return out
        if all(c.resp == att.responses[0].resp for c in att.responses[1:]):
            self._accept(att, att.responses[0].resp, now)
            return Concluded(att.query, att.requested_at, "peer", att, accepted=att.responses[0].resp)
        report = self.file_report(REPORT_RESPONSES, att.query, [_evidence(c) for c in att.responses], (), now)
        return Concluded(att.query, att.requested_at, "conflicted", att, report=report)

    def _accept(self, att: QueryAttempt, resp: bytes, now: float):
        for t in att.query.poi_types:
            self.subset_cache[(att.query.rid, t)] = att.epoch_t_exp
        self.history.append(HistoryEntry(att, resp, now))

    def file_report(self, kind, query, evidence, beacons, now: float):
        pc = self.current_pc(now)
        if pc is None or not self.online:
            return None
        report = sign_report(self.services.suite, kind, query, evidence, beacons, pc, self._sk(pc), now)
        self.reports.append(report)
        if self.services.report_sink is not None:
            self.services.report_sink(report, now)
        return report

    # -- serving --------------------------------------------------------------

    def respond_bytes(self, query: Query, data, now: float) -> bytes:
        return search(data.entries, query)

    def serve_query(self, peer_query, now: float):
        pc = self.current_pc(now)
        if pc is None or pc.s != 1:
            return None
        data = self.serving_data(now)
        if data is None:
            return None
        suite = self.services.suite
        try:
            opened = open_query(suite, peer_query, self._sk(pc), self.services.crl, self.services.verify_pc)
        except (ProtocolError, DecryptFailure):
            return None
        self.opened.append((opened.querier_pc.serial, opened.query.rid, now))
        if opened.query.rid != self.rid or opened.qid in self.seen_qids:
            return None
        self.seen_qids.add(opened.qid)
        resp = self.respond_bytes(opened.query, data, now)
        if response_is_empty(resp):
            return None
        return seal_response(suite, opened.qid, opened.query, resp, opened.session_key, pc, self._sk(pc),
                             self.rng, now)

    # -- CRL post-checking ----------------------------------------------------

    def on_crl(self, crl, now: float, final: bool = False) -> list:
        """Re-validate past accepted answers whose responders are now revoked.

        Runs when the CRL grows; ``final`` forces a pass over the whole history
        (answers accepted after their responder was already listed).
        """
        newly = crl.revoked_pc_serials - self._crl_seen
        self._crl_seen = crl.revoked_pc_serials
        if not self.params.crl_post_check or not (newly or final):
            return []
        filed = []
        lbs = self.services.lbs
        for h in self.history:
            if h.post_checked:
                continue
            responders = {c.response.sender_pc.serial for c in h.attempt.responses}
            if not responders & crl.revoked_pc_serials:
                continue
            h.post_checked = True
            bad = []
            for c in h.attempt.responses:
                res = lbs.check_authenticator(c.qid, h.attempt.query, digest(c.resp), c.response.auth,
                                              c.response.sender_pc, now)
                if res is CheckResult.NEGATIVE:
                    h.detected = True
                    if not crl.is_revoked_pc(c.response.sender_pc.serial):
                        bad.append(_evidence(c))
            if h.detected:
                for t in h.attempt.query.poi_types:
                    self.subset_cache.pop((h.attempt.query.rid, t), None)
            if bad:
                report = self.file_report(REPORT_RESPONSES, h.attempt.query, bad, (), now)
                if report is not None:
                    filed.append(report)
        return filed


def _evidence(c: Collected) -> Evidence:
    return Evidence(c.session_key, c.response)


def _attach(outcome: Concluded, att: QueryAttempt) -> Concluded:
    outcome.attempt = att
    return outcome
