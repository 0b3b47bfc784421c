"""Evaluation quantities computed from a finished simulation's EventLog."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

CASES = ("C1", "C2", "C3")
OBSERVERS = ("lbs", "coalition")


# -- identity records ----------------------------------------------------------

@dataclass(frozen=True)
class PcInfo:
    serial: int
    ticket: int
    nid: str
    t_start: float
    t_end: float
    s: int = 0


@dataclass
class TripRecord:
    nid: str
    start: float
    end: float
    kind: str = "honest"
    regions: list = field(default_factory=list)   # [(rid, enter_time)]

    def regions_between(self, lo: float, hi: float) -> set:
        """Distinct regions occupied at some instant of [lo, hi)."""
        out = set()
        for i, (rid, t_in) in enumerate(self.regions):
            t_out = self.regions[i + 1][1] if i + 1 < len(self.regions) else self.end
            if t_in < hi and t_out > lo:
                out.add(rid)
        return out


@dataclass(frozen=True)
class ExposureRow:
    pc: int
    rid: int
    time: float


def class_key(info: PcInfo, case: str):
    if case == "C1":
        return ("pc", info.serial)
    if case == "C2":
        return ("ticket", info.ticket)
    if case == "C3":
        return ("ltc", info.nid)
    raise ValueError(f"unknown collusion case {case!r}")


def link_identities(rows: Iterable[ExposureRow], pcs: dict, case: str) -> dict:
    """Partition rows into linked identity classes for collusion ``case``."""
    classes = defaultdict(list)
    for row in rows:
        classes[class_key(pcs[row.pc], case)].append(row)
    return dict(classes)


def _overlap(a0, a1, b0, b1) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))


def expo_deg(trip: TripRecord, rows: Iterable[ExposureRow], pcs: dict, case: str,
             window: Optional[tuple] = None, own_pcs: Optional[list] = None) -> float:
    """Exposure degree of one trip, with T and R denominators taken over the trip."""
    lo, hi = (trip.start, trip.end)
    if window is not None:
        lo, hi = max(lo, window[0]), min(hi, window[1])
    total_t = hi - lo
    visited = trip.regions_between(lo, hi)
    if total_t <= 0 or not visited:
        return 0.0
    rows = [r for r in rows if lo <= r.time < hi]
    if not rows:
        return 0.0
    mine = own_pcs if own_pcs is not None else [p for p in pcs.values() if p.nid == trip.nid]
    value = 0.0
    for key, members in link_identities(rows, pcs, case).items():
        if case == "C3":
            t_i = total_t
        else:
            t_i = sum(_overlap(p.t_start, p.t_end, lo, hi) for p in mine if class_key(p, case) == key)
        r_h = len({r.rid for r in members})
        value += (t_i / total_t) * (r_h / len(visited))
    return value


# -- log extraction ------------------------------------------------------------

def trips_from_log(log) -> dict:
    trips = {}
    for ev in log.of("trip_start"):
        trips[ev.data["nid"]] = TripRecord(ev.data["nid"], ev.time, float("inf"), ev.data["kind"])
    for ev in log.of("trip_end"):
        trips[ev.data["nid"]].end = ev.time
    for ev in log.of("region"):
        trips[ev.data["nid"]].regions.append((ev.data["rid"], ev.time))
    return trips


def pcs_from_log(log) -> dict:
    return {ev.data["pc"]: PcInfo(ev.data["pc"], ev.data["ticket"], ev.data["nid"],
                                  ev.data["t_start"], ev.data["t_end"], ev.data["s"])
            for ev in log.of("pc")}


def exposure_rows(log, observer: str, pcs: dict, kinds: dict) -> dict:
    """nid -> rows seen by ``observer``. The coalition's own members are excluded."""
    out = defaultdict(list)
    if observer == "lbs":
        for ev in log.of("lbs_contact"):
            if ev.data["contact"] in ("regional_fetch", "direct_query"):
                info = pcs[ev.data["pc"]]
                out[info.nid].append(ExposureRow(info.serial, ev.data["rid"], ev.time))
    elif observer == "coalition":
        for ev in log.of("observation"):
            info = pcs[ev.data["pc"]]
            if kinds.get(info.nid) == "curious":
                continue
            out[info.nid].append(ExposureRow(info.serial, ev.data["rid"], ev.time))
    else:
        raise ValueError(f"unknown observer {observer!r}")
    return out


def per_node_expo(log, observer: str, case: str, window: tuple, trips=None, pcs=None) -> dict:
    trips = trips if trips is not None else trips_from_log(log)
    pcs = pcs if pcs is not None else pcs_from_log(log)
    kinds = {nid: t.kind for nid, t in trips.items()}
    rows = exposure_rows(log, observer, pcs, kinds)
    by_nid = defaultdict(list)
    for p in pcs.values():
        by_nid[p.nid].append(p)
    out = {}
    for nid, trip in trips.items():
        if observer == "coalition" and trip.kind == "curious":
            continue
        if min(trip.end, window[1]) - max(trip.start, window[0]) <= 0:
            continue
        out[nid] = expo_deg(trip, rows.get(nid, ()), pcs, case, window, by_nid[nid])
    return out


# -- query ratios --------------------------------------------------------------

def query_outcomes(log, window: tuple) -> dict:
    """key -> dict(source, false, honest, detected) for queries initiated in the window."""
    lo, hi = window
    out = {}
    for ev in log.of("query_initiated"):
        if lo <= ev.time < hi:
            out[ev.data["key"]] = {"source": None, "false": False, "honest": ev.data["honest"], "detected": False}
    for ev in log.of("query_answered"):
        q = out.get(ev.data["key"])
        if q is not None:
            q["source"], q["false"] = ev.data["source"], ev.data["false"]
    for ev in log.of("query_abandoned"):
        out.pop(ev.data["key"], None)
    for ev in log.of("detected"):
        q = out.get(ev.data["key"])
        if q is not None:
            q["detected"] = True
    return out


def hit_ratios(outcomes: dict) -> dict:
    answered = [q for q in outcomes.values() if q["source"] is not None]
    n = len(answered)
    counts = defaultdict(int)
    for q in answered:
        counts[q["source"]] += 1
    if n == 0:
        return {"peer_hit_ratio": 0.0, "local_hit_ratio": 0.0, "lbs_hit_ratio": 0.0, "conflicted_ratio": 0.0}
    return {
        "peer_hit_ratio": (counts["peer"] + counts["local"]) / n,
        "local_hit_ratio": counts["local"] / n,
        "lbs_hit_ratio": counts["lbs"] / n,
        "conflicted_ratio": counts["conflicted"] / n,
    }


def peer_hit_ratio(log, window: tuple) -> float:
    return hit_ratios(query_outcomes(log, window))["peer_hit_ratio"]


def resilience(outcomes: dict) -> dict:
    honest = [q for q in outcomes.values() if q["honest"] and q["source"] is not None]
    if not honest:
        return {"affected_query_ratio": 0.0, "attacked_query_ratio": 0.0}
    affected = [q for q in honest if q["false"]]
    attacked = [q for q in affected if not q["detected"]]
    return {"affected_query_ratio": len(affected) / len(honest),
            "attacked_query_ratio": len(attacked) / len(honest)}


def serving_timeseries(log) -> list:
    rows = []
    for ev in log.of("sample"):
        serving = ev.data["serving"]
        rows.append((ev.time, ev.data["malicious"] / serving if serving else 0.0,
                     ev.data["active_malicious"] / serving if serving else 0.0))
    return rows


def overhead(log, window: tuple, trips: dict, pcs: dict) -> dict:
    lo, hi = window
    present = {nid for nid, t in trips.items() if min(t.end, hi) - max(t.start, lo) > 0}
    serving = {p.nid for p in pcs.values() if p.s == 1 and p.nid in present
               and _overlap(p.t_start, p.t_end, max(trips[p.nid].start, lo), min(trips[p.nid].end, hi)) > 0}
    fetches = defaultdict(int)
    fetch_bytes = 0
    for ev in log.of("regional_fetch"):
        if lo <= ev.time < hi:
            fetches[ev.data["nid"]] += 1
            fetch_bytes += ev.data["nbytes"]
    transfers = defaultdict(int)
    for ev in log.of("mc_transfer"):
        if lo <= ev.time < hi:
            transfers[ev.data["nid"]] += 1
    msg_bytes = defaultdict(int)
    for ev in log.of("msg"):
        if lo <= ev.time < hi:
            msg_bytes[ev.data["kind"]] += ev.data["nbytes"]
    peer = [ev.data["nbytes"] for ev in log.of("peer_answer") if lo <= ev.time < hi]
    total_fetch = sum(fetches.values())
    return {
        "regional_fetches_per_serving_node": (sum(fetches[n] for n in serving) / len(serving)) if serving else 0.0,
        "regional_fetches_per_node": total_fetch / len(present) if present else 0.0,
        "regional_transfers_per_node": (total_fetch + sum(transfers.values())) / len(present) if present else 0.0,
        "mean_regional_fetch_bytes": fetch_bytes / total_fetch if total_fetch else 0.0,
        "mean_peer_path_bytes": sum(peer) / len(peer) if peer else 0.0,
        "bytes_by_kind": dict(sorted(msg_bytes.items())),
    }


# -- report --------------------------------------------------------------------

@dataclass
class MetricsReport:
    peer_hit_ratio: float
    local_hit_ratio: float
    lbs_hit_ratio: float
    conflicted_ratio: float
    expo_deg: dict                       # (observer, case) -> mean over nodes
    malicious_serving_ratio: list        # [(t, ratio)]
    active_malicious_ratio: list
    affected_query_ratio: float
    attacked_query_ratio: float
    spurious_report_count: int
    revoked_honest: int
    revoked_adversarial: int
    queries: int
    overhead: dict
    suppression: dict

    def mean_malicious_serving(self) -> float:
        v = [r for _, r in self.malicious_serving_ratio]
        return sum(v) / len(v) if v else 0.0

    def mean_active_malicious(self) -> float:
        v = [r for _, r in self.active_malicious_ratio]
        return sum(v) / len(v) if v else 0.0

    def row(self) -> dict:
        out = {
            "queries": self.queries,
            "peer_hit_ratio": self.peer_hit_ratio,
            "local_hit_ratio": self.local_hit_ratio,
            "lbs_hit_ratio": self.lbs_hit_ratio,
            "conflicted_ratio": self.conflicted_ratio,
        }
        for obs in OBSERVERS:
            for case in CASES:
                out[f"expo_{obs}_{case}"] = self.expo_deg[(obs, case)]
        out.update({
            "malicious_serving_ratio": self.mean_malicious_serving(),
            "active_malicious_ratio": self.mean_active_malicious(),
            "affected_query_ratio": self.affected_query_ratio,
            "attacked_query_ratio": self.attacked_query_ratio,
            "spurious_reports": self.spurious_report_count,
            "revoked_honest": self.revoked_honest,
            "revoked_adversarial": self.revoked_adversarial,
            "fetches_per_serving_node": self.overhead["regional_fetches_per_serving_node"],
            "fetches_per_node": self.overhead["regional_fetches_per_node"],
            "regional_transfers_per_node": self.overhead["regional_transfers_per_node"],
            "mean_fetch_bytes": self.overhead["mean_regional_fetch_bytes"],
            "mean_peer_path_bytes": self.overhead["mean_peer_path_bytes"],
            "beacons_jammable": self.suppression["eligible"],
            "beacons_suppressed": self.suppression["suppressed"],
            "suppression_rate": self.suppression["rate"],
        })
        return out


COLUMNS = list(MetricsReport(0, 0, 0, 0, {(o, c): 0.0 for o in OBSERVERS for c in CASES}, [], [], 0, 0, 0, 0, 0, 0,
                             defaultdict(float), {"eligible": 0, "suppressed": 0, "rate": 0.0}).row())


def suppression(log) -> dict:
    beacons = [ev for ev in log.of("msg") if ev.data["kind"] == "beacon"]
    eligible = [ev for ev in beacons if ev.data.get("eligible")]
    hit = sum(1 for ev in eligible if ev.data["suppressed"])
    return {"eligible": len(eligible), "suppressed": hit, "rate": hit / len(eligible) if eligible else 0.0}


def compute(log, window: tuple) -> MetricsReport:
    trips = trips_from_log(log)
    pcs = pcs_from_log(log)
    outcomes = query_outcomes(log, window)
    hits = hit_ratios(outcomes)
    res = resilience(outcomes)
    expo = {}
    for obs in OBSERVERS:
        for case in CASES:
            vals = per_node_expo(log, obs, case, window, trips, pcs)
            expo[(obs, case)] = sum(vals.values()) / len(vals) if vals else 0.0
    series = serving_timeseries(log)
    revoked = [ev.data["kind"] for ev in log.of("revoked")]
    return MetricsReport(
        hits["peer_hit_ratio"], hits["local_hit_ratio"], hits["lbs_hit_ratio"], hits["conflicted_ratio"],
        expo, [(t, m) for t, m, _ in series], [(t, a) for t, _, a in series],
        res["affected_query_ratio"], res["attacked_query_ratio"],
        sum(1 for ev in log.of("verdict") if ev.data["spurious"]),
        sum(1 for k in revoked if k in ("honest", "curious")),
        sum(1 for k in revoked if k not in ("honest", "curious")),
        sum(1 for q in outcomes.values() if q["source"] is not None),
        overhead(log, window, trips, pcs), suppression(log))
