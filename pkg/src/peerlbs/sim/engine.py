"""Deterministic discrete-event simulator.

Time advances through a heap of ``(time, priority, seq)`` keyed events.
Mobility moves in 1 s ticks; every message is delivered on the tick it is
sent (zero latency, zero loss) to the nodes within ``comm_range``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..credentials import CredentialFacility, acquire_batch, enroll, next_gamma_boundary
from ..crypto import get_suite
from ..lbs_server import LbsServer, PoiConfig
from ..messages import Query, encoded_size
from ..node_logic import CacheHit, Concluded, Deferred, Node, NodeParams, QueryAttempt, Services
from ..wire import Writer
from ..resolution_authority import BadReporterSignature, ResolutionAuthority, RevokedReporter
from .adversary import Jammer, MaliciousNode
from .baseline import MobiNode
from .config import SimConfig
from .eventlog import EventLog
from .mobility import RandomWaypoint, TraceMobility, load_trace

# event priorities at equal times
P_TICK, P_RENEW, P_EPOCH, P_SAMPLE, P_DEADLINE, P_NODE = 0, 1, 2, 3, 4, 5

STREAMS = ("mobility", "roles", "keys", "adversary", "queries", "nodes", "beacons")


@dataclass
class Actor:
    nid: str
    slot: int
    kind: str                  # honest | curious | malicious | jammer
    node: object
    alive: bool = True
    busy: bool = False         # a query is listening or deferred
    query_seq: int = 0
    attempt_keys: dict = field(default_factory=dict)  # attempt id -> query key
    jammer: Optional[Jammer] = None


class Simulation:
    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.log = EventLog()
        seqs = np.random.SeedSequence(cfg.seed).spawn(len(STREAMS))
        self.rngs = {name: np.random.default_rng(s) for name, s in zip(STREAMS, seqs)}
        self._node_seeds = seqs[STREAMS.index("nodes")]
        self._beacon_seeds = seqs[STREAMS.index("beacons")]
        self.suite = get_suite(cfg.crypto)
        keys = self.rngs["keys"]
        self.facility = CredentialFacility(self.suite, keys, cfg.Gamma, cfg.tau)
        poi = PoiConfig(db_seed=cfg.seed, T_POI=cfg.T_POI, T_total=cfg.T_total, E=cfg.E,
                        payload_size=cfg.payload_size, G=cfg.G, n_regions=cfg.n_regions)
        self.lbs = LbsServer.create(self.suite, keys, poi, crl_source=lambda: self.facility.crl,
                                    verify_pc=self.facility.verify_pc)
        self.ra = ResolutionAuthority(self.suite, self.facility, self.lbs, rate_window=60.0,
                                      rate_limit=cfg.effective_rate_limit)
        self.params = NodeParams(T_wait=cfg.T_wait, T_beacon=cfg.T_beacon, N=cfg.N, Pr_check=cfg.Pr_check,
                                 G=cfg.G, T_total=cfg.T_total, rate_window=60.0,
                                 rate_limit=cfg.effective_rate_limit, crl_post_check=cfg.crl_post_check)
        self.adv_key = self.rngs["adversary"].bytes(32)
        self.end = cfg.duration + 2 * cfg.T_wait
        if cfg.mobility == "trace":
            self.mobility = TraceMobility(cfg, self.rngs["mobility"], load_trace(cfg.trace_path))
        else:
            self.mobility = RandomWaypoint(cfg, self.rngs["mobility"], cfg.duration)
        self.actors: dict[str, Actor] = {}
        self.by_slot: dict[int, Actor] = {}
        self.region = {}
        self._heap = []
        self._seq = 0
        self._spawned = 0
        self._contacts_seen = 0
        self._crl_version_seen = 0
        self._evictions: list = []
        self._revoked: set = set()
        self.mobicrowd = cfg.baseline == "mobicrowd"

    # -- scheduling ---------------------------------------------------------

    def at(self, time: float, prio: int, kind: str, *args):
        self._seq += 1
        heapq.heappush(self._heap, (float(time), prio, self._seq, kind, args))

    def run(self) -> EventLog:
        cfg = self.cfg
        for t in range(0, int(np.ceil(self.end)) + 1):
            self.at(t, P_TICK, "tick")
        t = 0
        while t <= self.end:
            self.at(t, P_EPOCH, "epoch")
            t += cfg.T_POI
        t = cfg.warmup
        while t < cfg.duration:
            self.at(t, P_SAMPLE, "sample")
            t += cfg.sample_interval
        while self._heap:
            now, _, _, kind, args = heapq.heappop(self._heap)
            if now > self.end:
                break
            getattr(self, "_on_" + kind)(now, *args)
            self._settle(now)
        self._finish()
        return self.log

    def _settle(self, now: float):
        """Drain LBS contacts, distribute new CRLs and apply evictions."""
        contacts = self.lbs.contact_log
        while self._contacts_seen < len(contacts):
            c = contacts[self._contacts_seen]
            self._contacts_seen += 1
            self.log.add(c.time, "lbs_contact", pc=c.pc_serial, rid=c.rid, contact=c.kind, nbytes=c.nbytes)
        while self.facility.crl.version != self._crl_version_seen:
            crl = self.facility.crl
            self._crl_version_seen = crl.version
            self.log.add(now, "crl", version=crl.version, pcs=len(crl.revoked_pc_serials),
                         ltcs=len(crl.revoked_ltc_serials))
            for nid in sorted(self.actors):
                node = self.actors[nid].node
                if isinstance(node, Node):
                    node.on_crl(crl, now)
            while self._evictions:
                self._evict(self._evictions.pop(0), now)
            while self._contacts_seen < len(contacts):
                c = contacts[self._contacts_seen]
                self._contacts_seen += 1
                self.log.add(c.time, "lbs_contact", pc=c.pc_serial, rid=c.rid, contact=c.kind, nbytes=c.nbytes)

    # -- node lifecycle -------------------------------------------------------

    def _rid_at(self, slot: int) -> int:
        cfg = self.cfg
        x, y = self.mobility.position(slot)
        col = min(int(x // cfg.L), cfg.n_cols - 1)
        row = min(int(y // cfg.L), cfg.n_rows - 1)
        return row * cfg.n_cols + col

    def _spawn(self, slot: int, now: float, kind: Optional[str] = None):
        cfg = self.cfg
        nid = f"n{self._spawned}"
        self._spawned += 1
        if kind is None:
            kind = cfg.adversary_kind if self.rngs["adversary"].random() < cfg.Ratio_adv else "honest"
        wallet = enroll(self.facility, nid, self.rngs["keys"])
        services = Services(self.suite, self.facility, self.lbs, self._on_report)
        node_rng = np.random.default_rng(self._node_seeds.spawn(1)[0])
        beacon_rng = np.random.default_rng(self._beacon_seeds.spawn(1)[0])
        if self.mobicrowd:
            node = MobiNode(nid, wallet, services, node_rng, cfg.Ratio_coop, cfg.T_wait, cfg.T_total)
        elif kind == "malicious":
            node = MaliciousNode(nid, wallet, self.params, services, node_rng, beacon_rng, adv_key=self.adv_key,
                                 payload_size=cfg.payload_size, entries_per_type=cfg.E,
                                 rogue_beacons=cfg.rogue_beacons)
        else:
            node = Node(nid, wallet, self.params, services, node_rng, beacon_rng)
        actor = Actor(nid, slot, kind, node)
        if kind == "jammer":
            actor.jammer = Jammer(cfg.jam_gate)
        self.actors[nid] = actor
        self.by_slot[slot] = actor
        rid = self._rid_at(slot)
        node.rid = rid
        self.region[nid] = rid
        self.log.add(now, "trip_start", nid=nid, kind=kind, slot=slot)
        self.log.add(now, "region", nid=nid, rid=rid)
        self._renew(actor, int(now))
        self.at(next_gamma_boundary(int(now), cfg.Gamma), P_RENEW, "renew", nid)
        self.at(now + self.rngs["queries"].uniform(0, cfg.T_query), P_NODE, "query", nid)
        if not self.mobicrowd:
            self.at(now + beacon_rng.uniform(0, cfg.nominal_beacon_interval), P_NODE, "beacon", nid)
        return actor

    def _renew(self, actor: Actor, now: int):
        cfg = self.cfg
        pr = 0.0 if self.mobicrowd else cfg.Pr_serve
        batch = acquire_batch(self.facility, actor.node.wallet, now, now, pr, cfg.G,
                              self.rngs["roles"], self.rngs["keys"])
        for pc in batch.pcs:
            self.log.add(now, "pc", nid=actor.nid, pc=pc.serial, ticket=batch.ticket_serial, s=pc.s,
                         group=pc.group, t_start=pc.t_start, t_end=pc.t_end)
        self._fetch(actor, now)

    def _fetch(self, actor: Actor, now: float):
        if isinstance(actor.node, Node) and actor.alive:
            data = actor.node.maybe_fetch_regional(now)
            if data is not None:
                self.log.add(now, "regional_fetch", nid=actor.nid, rid=data.rid, nbytes=len(data.to_bytes()))

    def _end_trip(self, actor: Actor, now: float, reason: str):
        actor.alive = False
        node = actor.node
        if isinstance(node, Node) and node.attempt is not None:
            key = actor.attempt_keys.get(node.attempt.attempt_id)
            if reason == "trip_end" and node.current_pc(now) is not None:
                self._record(actor, key, node.conclude_attempt(now), now)
            else:
                node.attempt = None
                self.log.add(now, "query_abandoned", nid=actor.nid, key=key)
        elif isinstance(node, MobiNode) and node.pending is not None:
            self.log.add(now, "query_abandoned", nid=actor.nid, key=node.pending.key)
            node.pending = None
        elif actor.busy:
            self.log.add(now, "query_abandoned", nid=actor.nid, key=(actor.nid, actor.query_seq))
        actor.busy = False
        node.online = False
        self.by_slot.pop(actor.slot, None)
        self.log.add(now, "trip_end", nid=actor.nid, reason=reason)

    def _evict(self, nid: str, now: float):
        actor = self.actors[nid]
        if not actor.alive:
            return
        self._end_trip(actor, now, "revoked")
        if self.cfg.recover_after_revocation:
            self._spawn(actor.slot, now, kind=actor.kind)
        else:
            self.mobility.remove(actor.slot)

    # -- event handlers -------------------------------------------------------

    def _on_tick(self, now: float):
        started, ended = self.mobility.tick(now)
        for slot in ended:
            actor = self.by_slot.get(slot)
            if actor is not None:
                self._end_trip(actor, now, "trip_end")
        for slot in started:
            self._spawn(slot, now)
        for slot, actor in list(self.by_slot.items()):
            rid = self._rid_at(slot)
            if rid != self.region[actor.nid]:
                self.region[actor.nid] = rid
                actor.node.rid = rid
                self.log.add(now, "region", nid=actor.nid, rid=rid)
                self._fetch(actor, now)

    def _on_renew(self, now: float, nid: str):
        actor = self.actors[nid]
        if not actor.alive:
            return
        self._renew(actor, int(now))
        self.at(now + self.cfg.Gamma, P_RENEW, "renew", nid)

    def _on_epoch(self, now: float):
        for nid in sorted(self.actors):
            actor = self.actors[nid]
            if actor.alive:
                self._fetch(actor, now)

    def _on_sample(self, now: float):
        serving = malicious = active_mal = 0
        for actor in self.actors.values():
            if not actor.alive or not isinstance(actor.node, Node) or not actor.node.is_serving(now):
                continue
            serving += 1
            if actor.kind == "malicious":
                malicious += 1
                if actor.node.serving_data(now) is not None:
                    active_mal += 1
        self.log.add(now, "sample", serving=serving, malicious=malicious, active_malicious=active_mal)

    def _in_range(self, slot: int) -> list[Actor]:
        m = self.mobility
        n = m.size
        dx = m.x[:n] - m.x[slot]
        dy = m.y[:n] - m.y[slot]
        close = m.active[:n] & (dx * dx + dy * dy <= self.cfg.comm_range ** 2)
        close[slot] = False
        return [self.by_slot[int(s)] for s in np.flatnonzero(close) if int(s) in self.by_slot]

    def _in_range_pair(self, a: Actor, b: Actor) -> bool:
        ax, ay = self.mobility.position(a.slot)
        bx, by = self.mobility.position(b.slot)
        return (ax - bx) ** 2 + (ay - by) ** 2 <= self.cfg.comm_range ** 2

    def _observe(self, observer: Actor, pc_serial: int, rid: int, now: float, via: str):
        self.log.add(now, "observation", observer=observer.nid, pc=pc_serial, rid=rid, via=via)

    def _on_beacon(self, now: float, nid: str):
        actor = self.actors[nid]
        if not actor.alive:
            return
        node = actor.node
        beacon = node.beacon_tick(now)
        if beacon is not None:
            self._broadcast_beacon(actor, beacon, now)
        self.at(now + node.next_beacon_delay(), P_NODE, "beacon", nid)

    def _broadcast_beacon(self, actor: Actor, beacon, now: float):
        size = encoded_size(beacon)
        receivers = self._in_range(actor.slot)
        jammers = [r for r in receivers if r.jammer is not None] if actor.jammer is None else []
        serial = beacon.sender_pc.serial
        eligible = any(j.jammer.can_predict(serial) for j in jammers)
        suppressed = any(j.jammer.predicts(serial, now) for j in jammers)
        for j in jammers:
            j.jammer.observe(serial, now)
        self.log.add(now, "msg", kind="beacon", sender=actor.nid, nbytes=size, receivers=len(receivers),
                     pc=serial, eligible=eligible, suppressed=suppressed, jammer_near=bool(jammers))
        if suppressed:
            return
        for r in receivers:
            if not r.alive:
                continue
            if r.kind == "curious":
                self._observe(r, serial, beacon.rid, now, "beacon")
            pq = r.node.on_beacon(beacon, now)
            if pq is not None:
                self._exchange(r, actor, pq, now)

    def _exchange(self, querier: Actor, server: Actor, pq, now: float):
        qnode = querier.node
        att = qnode.attempt
        self.log.add(now, "msg", kind="peer_query", sender=querier.nid, nbytes=encoded_size(pq))
        if att is not None and att.deadline > now:
            self.at(att.deadline, P_DEADLINE, "deadline", querier.nid, att.attempt_id)
        qpc = qnode.current_pc(now)
        if not self.cfg.p2p_encryption and qpc is not None:
            for r in self._in_range(querier.slot):
                if r.kind == "curious":
                    self._observe(r, qpc.serial, att.query.rid, now, "query")
        if not server.alive or not self._in_range_pair(querier, server):
            return
        opened_before = len(server.node.opened)
        resp = server.node.serve_query(pq, now)
        if server.kind == "curious" and self.cfg.p2p_encryption:
            for pc_serial, rid, t in server.node.opened[opened_before:]:
                self._observe(server, pc_serial, rid, t, "query")
        if resp is None:
            return
        self.log.add(now, "msg", kind="peer_response", sender=server.nid, nbytes=encoded_size(resp))
        if not querier.alive or not self._in_range_pair(querier, server):
            return
        if qnode.on_response(resp, now):
            self._conclude(querier, now)

    def _on_query(self, now: float, nid: str):
        actor = self.actors[nid]
        if not actor.alive or now >= self.cfg.duration:
            return
        self.at(now + self.cfg.T_query, P_NODE, "query", nid)
        if actor.busy:
            return
        actor.query_seq += 1
        key = (nid, actor.query_seq)
        ptype = int(self.rngs["queries"].integers(self.cfg.T_total))
        self.log.add(now, "query_initiated", nid=nid, key=key, rid=actor.node.rid, ptype=ptype,
                     honest=actor.kind in ("honest", "curious"))
        if self.mobicrowd:
            self._mc_start(actor, key, ptype, now, now)
        else:
            self._start(actor, key, ptype, now, now)

    def _start(self, actor: Actor, key, ptype: int, now: float, requested_at: float):
        node = actor.node
        query = Query(node.rid, (ptype,))
        out = node.initiate_query(query, now, requested_at)
        if isinstance(out, CacheHit):
            self.log.add(now, "query_answered", nid=actor.nid, key=key, source="local", false=False)
        elif isinstance(out, Concluded):
            self._record(actor, key, out, now)
        elif isinstance(out, Deferred):
            actor.busy = True
            self.at(out.until, P_NODE, "retry", actor.nid, key, ptype, requested_at)
        elif isinstance(out, QueryAttempt):
            actor.busy = True
            actor.attempt_keys[out.attempt_id] = key
            self.at(out.deadline, P_DEADLINE, "deadline", actor.nid, out.attempt_id)

    def _on_retry(self, now: float, nid: str, key, ptype: int, requested_at: float):
        actor = self.actors[nid]
        if not actor.alive:
            return
        actor.busy = False
        self._start(actor, key, ptype, now, requested_at)

    def _on_deadline(self, now: float, nid: str, attempt_id: int):
        actor = self.actors[nid]
        att = actor.node.attempt if isinstance(actor.node, Node) else None
        if not actor.alive or att is None or att.attempt_id != attempt_id:
            return
        if now >= att.deadline:
            self._conclude(actor, now)

    def _conclude(self, actor: Actor, now: float):
        att = actor.node.attempt
        key = actor.attempt_keys.get(att.attempt_id)
        self._record(actor, key, actor.node.conclude_attempt(now), now)

    def _record(self, actor: Actor, key, out: Concluded, now: float):
        actor.busy = False
        false = False
        if out.source == "peer" and out.attempt is not None:
            epoch = self.lbs.refresh_epoch(out.attempt.epoch_t_exp - 1)
            false = out.accepted != self.lbs.response_bytes(out.query, epoch)
            if out.attempt is not None:
                nbytes = sum(encoded_size(c.response) for c in out.attempt.responses)
                self.log.add(now, "peer_answer", nid=actor.nid, key=key, responses=len(out.attempt.responses),
                             nbytes=nbytes)
        if out.source == "lbs":
            self.log.add(now, "msg", kind="direct_query", sender=actor.nid, nbytes=len(out.accepted))
        self.log.add(now, "query_answered", nid=actor.nid, key=key, source=out.source, false=false,
                     checked=out.checked)

    def _on_report(self, report, now: float):
        self.log.add(now, "msg", kind="report", sender=None, nbytes=encoded_size(report))
        try:
            verdict = self.ra.process_report(report, now)
        except (BadReporterSignature, RevokedReporter) as exc:
            self.log.add(now, "report_rejected", reason=type(exc).__name__)
            return None
        self.log.add(now, "verdict", report_kind=report.kind, verdicts=[v.value for v in verdict.verdicts],
                     resolved=list(verdict.resolved_nids), spurious=verdict.spurious)
        for nid in verdict.resolved_nids:
            if nid in self._revoked:
                continue
            self._revoked.add(nid)
            self.log.add(now, "revoked", nid=nid, kind=self.actors[nid].kind if nid in self.actors else "?")
            self._evictions.append(nid)
        return verdict

    # -- MobiCrowd baseline ---------------------------------------------------

    def _mc_start(self, actor: Actor, key, ptype: int, now: float, requested_at: float):
        node = actor.node
        query = Query(node.rid, (ptype,))
        if node.start_query(key, query, now, requested_at):
            self.log.add(now, "query_answered", nid=actor.nid, key=key, source="local", false=False)
            return
        actor.busy = True
        self._on_mc_broadcast(now, actor.nid, key)

    def _on_mc_broadcast(self, now: float, nid: str, key):
        actor = self.actors[nid]
        node = actor.node
        p = node.pending
        if not actor.alive or p is None or p.key != key:
            return
        if now >= p.deadline:
            data = node.fetch_from_lbs(now)
            actor.busy = False
            self.log.add(now, "regional_fetch", nid=nid, rid=data.rid, nbytes=len(data.to_bytes()))
            self.log.add(now, "query_answered", nid=nid, key=key, source="lbs", false=False)
            return
        pc = node.current_pc(now)
        size = len(p.query.to_bytes()) + 4 + 8 + (len(pc.encode_into(Writer()).getvalue()) if pc is not None else 0)
        self.log.add(now, "msg", kind="mc_query", sender=nid, nbytes=size)
        for r in self._in_range(actor.slot):
            if not r.alive:
                continue
            if r.kind == "curious" and pc is not None:
                self._observe(r, pc.serial, p.query.rid, now, "query")
            data = r.node.on_query(p.query, now)
            if data is None:
                continue
            self.log.add(now, "mc_transfer", nid=nid, sender=r.nid, nbytes=len(data.to_bytes()))
            if node.pending is not None and node.on_data(data, now):
                actor.busy = False
                self.log.add(now, "query_answered", nid=nid, key=key, source="peer", false=False)
        if node.pending is not None:
            self.at(min(now + self.cfg.rebroadcast, p.deadline), P_NODE, "mc_broadcast", nid, key)

    # -- wrap-up --------------------------------------------------------------

    def _finish(self):
        now = self.end
        for nid in sorted(self.actors):
            actor = self.actors[nid]
            if actor.alive:
                self._end_trip(actor, now, "end_of_run")
            node = actor.node
            if isinstance(node, Node):
                node.on_crl(self.facility.crl, now, final=True)
                for h in node.history:
                    if h.detected:
                        self.log.add(now, "detected", nid=nid, key=actor.attempt_keys.get(h.attempt.attempt_id))
        self.log.add(now, "crl_final", text=self.facility.crl.to_text())


def simulate(cfg: SimConfig) -> Simulation:
    sim = Simulation(cfg)
    sim.run()
    return sim


def run(cfg: SimConfig):
    """Run one configuration; returns ``(EventLog, MetricsReport, final CRL text)``."""
    from .. import metrics

    sim = simulate(cfg)
    report = metrics.compute(sim.log, (cfg.warmup, cfg.duration))
    return sim.log, report, sim.facility.crl.to_text()


def run_mobicrowd_baseline(cfg: SimConfig):
    """Same as ``run`` with the broadcast baseline node logic; returns ``(EventLog, MetricsReport)``."""
    log, report, _ = run(cfg.replace(baseline="mobicrowd"))
    return log, report
