"""Resolution authority: confirms reported misbehavior against the LBS and revokes."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .credentials import RevocationList, UnknownPC
from .crypto import DecryptFailure, digest
from .messages import (
    REPORT_BEACON_RATE,
    REPORT_NON_SERVING_BEACON,
    REPORT_RESPONSES,
    MisbehaviorReport,
    open_response,
    verify_beacon,
    verify_report,
    verify_response,
)


class BadReporterSignature(Exception):
    pass


class RevokedReporter(Exception):
    pass


class Verdict(enum.Enum):
    DISHONEST = "dishonest"
    HONEST = "honest"
    UNVERIFIABLE = "unverifiable"


@dataclass(frozen=True)
class ReportVerdict:
    report_id: int
    verdicts: tuple
    resolved_nids: tuple
    crl_version_after: int

    @property
    def spurious(self) -> bool:
        return bool(self.verdicts) and all(v is Verdict.HONEST for v in self.verdicts)


def max_in_window(times, window: float) -> int:
    """Largest number of timestamps inside any half-open window of length ``window``."""
    ts = sorted(times)
    best, lo = 0, 0
    for hi, t in enumerate(ts):
        while t - ts[lo] >= window:
            lo += 1
        best = max(best, hi - lo + 1)
    return best


@dataclass
class ResolutionAuthority:
    suite: object
    facility: object
    lbs: object
    rate_window: float = 60.0
    rate_limit: int = 12
    verdicts: list = field(default_factory=list)
    resolutions: list = field(default_factory=list)   # (time, pc serial, nid)

    def __post_init__(self):
        self._published = self.facility.crl

    def process_report(self, report: MisbehaviorReport, now: float) -> ReportVerdict:
        if not verify_report(self.suite, report) or not self.facility.verify_pc(report.reporter_pc):
            raise BadReporterSignature()
        if not report.reporter_pc.valid_at(report.timestamp):
            raise BadReporterSignature("reporter PC not valid at report time")
        if self.facility.crl.is_revoked_pc(report.reporter_pc.serial):
            raise RevokedReporter(report.reporter_pc.serial)

        if report.kind == REPORT_RESPONSES:
            pairs = [self._judge_response(report, ev) for ev in report.evidence]
        elif report.kind == REPORT_NON_SERVING_BEACON:
            pairs = [self._judge_role(b) for b in report.beacons]
        elif report.kind == REPORT_BEACON_RATE:
            pairs = self._judge_rate(report.beacons)
        else:
            pairs = []

        dishonest_pcs = [pc for v, pc in pairs if v is Verdict.DISHONEST]
        nids = []
        for pc in dishonest_pcs:
            try:
                nid = self.facility.resolve(pc.serial)
            except UnknownPC:
                continue
            self.resolutions.append((now, pc.serial, nid))
            if nid not in nids:
                nids.append(nid)
        fresh = [nid for nid in nids
                 if self.facility.ltca.ltcs[nid].serial not in self.facility.crl.revoked_ltc_serials]
        if fresh:
            self.facility.revoke_nodes(fresh, int(now))
        crl = self.publish_crl(now) if nids else self._published
        verdict = ReportVerdict(len(self.verdicts), tuple(v for v, _ in pairs), tuple(nids), crl.version)
        self.verdicts.append(verdict)
        return verdict

    def publish_crl(self, now: float) -> RevocationList:
        if self.facility.crl is self._published:
            self.facility.republish(int(now))
        self._published = self.facility.crl
        return self._published

    # -- per-evidence judgements -----------------------------------------------

    def _judge_response(self, report, ev):
        resp_msg = ev.response
        pc = resp_msg.sender_pc
        if not self.facility.verify_pc(pc):
            return Verdict.UNVERIFIABLE, pc
        try:
            qid, resp = open_response(self.suite, resp_msg, ev.session_key)
        except DecryptFailure:
            return Verdict.UNVERIFIABLE, pc
        if not verify_response(self.suite, resp_msg, qid, report.query, resp):
            return Verdict.UNVERIFIABLE, pc
        epoch = self.lbs.refresh_epoch(resp_msg.auth.timestamp)
        honest = self.lbs.response_bytes(report.query, epoch)
        if digest(resp) != digest(honest):
            return Verdict.DISHONEST, pc
        return Verdict.HONEST, pc

    def _judge_role(self, beacon):
        pc = beacon.sender_pc
        if not (verify_beacon(self.suite, beacon) and self.facility.verify_pc(pc)):
            return Verdict.UNVERIFIABLE, pc
        return (Verdict.DISHONEST if pc.s != 1 else Verdict.HONEST), pc

    def _judge_rate(self, beacons):
        if not beacons:
            return []
        pc = beacons[0].sender_pc
        ok = all(b.sender_pc == pc and verify_beacon(self.suite, b) for b in beacons)
        if not ok or not self.facility.verify_pc(pc):
            return [(Verdict.UNVERIFIABLE, pc)]
        if max_in_window([b.timestamp for b in beacons], self.rate_window) > self.rate_limit:
            return [(Verdict.DISHONEST, pc)]
        return [(Verdict.HONEST, pc)]
