import random
from collections import defaultdict

import pytest
from hypothesis import given, settings, strategies as st

from peerlbs import metrics
from peerlbs.metrics import ExposureRow, PcInfo, TripRecord, expo_deg, link_identities
from peerlbs.sim.eventlog import EventLog


# -- brute-force oracle -----------------------------------------------------------------

def oracle_expo(start, end, region_of_second, pcs, rows, case):
    """Materialise every second of the trip and every identity class explicitly."""
    seconds = list(range(start, end))
    visited = {region_of_second[s] for s in seconds}
    ident = {"C1": lambda p: p.serial, "C2": lambda p: p.ticket, "C3": lambda p: p.nid}[case]
    classes = defaultdict(set)
    for r in rows:
        if start <= r.time < end:
            classes[ident(pcs[r.pc])].add(r.rid)
    total = 0.0
    for cls, regions in classes.items():
        if case == "C3":
            t_i = len(seconds)
        else:
            t_i = sum(1 for s in seconds for p in pcs.values()
                      if p.t_start <= s < p.t_end and ident(p) == cls and p.nid == pcs[rows[0].pc].nid)
        total += t_i / len(seconds) * len(regions) / len(visited)
    return total


def random_world(rnd, n_nodes, n_rows):
    """Trips with integer times, contiguous PCs grouped into tickets, rows at valid PCs."""
    log = EventLog()
    truth = {}
    serial, ticket = 0, 0
    all_rows = []
    for i in range(n_nodes):
        nid = f"n{i}"
        start = rnd.randrange(0, 50)
        end = start + rnd.randrange(5, 80)
        log.add(start, "trip_start", nid=nid, kind="honest", slot=i)
        regions, t, region_of = [], start, {}
        while t < end:
            rid = rnd.randrange(0, 6)
            if not regions or regions[-1][0] != rid:
                regions.append((rid, t))
                log.add(t, "region", nid=nid, rid=rid)
            step = rnd.randrange(1, 15)
            for s in range(t, min(end, t + step)):
                region_of[s] = regions[-1][0]
            t += step
        log.add(end, "trip_end", nid=nid, reason="trip_end")
        pcs, t = [], start
        while t < end:
            ticket += 1
            t_stop = min(end, t + rnd.randrange(3, 30))
            while t < t_stop:
                p_end = min(t_stop, t + rnd.randrange(1, 10))
                serial += 1
                pc = PcInfo(serial, ticket, nid, t, p_end)
                pcs.append(pc)
                log.add(t, "pc", nid=nid, pc=serial, ticket=ticket, s=0, group=None, t_start=t, t_end=p_end)
                t = p_end
        truth[nid] = (start, end, region_of, pcs)
    for _ in range(n_rows):
        nid = f"n{rnd.randrange(n_nodes)}"
        start, end, region_of, pcs = truth[nid]
        t = rnd.randrange(start, end)
        pc = next(p for p in pcs if p.t_start <= t < p.t_end)
        # an observer may mislabel the region, but only with one the node did visit
        rid = region_of[t] if rnd.random() < 0.8 else rnd.choice(sorted(set(region_of.values())))
        log.add(t, "lbs_contact", pc=pc.serial, rid=rid, contact="direct_query", nbytes=0)
        all_rows.append(ExposureRow(pc.serial, rid, t))
    return log, truth, all_rows


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 5), st.integers(0, 20))
def test_expo_deg_matches_oracle(seed, n_nodes, n_rows):
    rnd = random.Random(seed)
    log, truth, rows = random_world(rnd, n_nodes, n_rows)
    pcs = {p.serial: p for _, _, _, ps in truth.values() for p in ps}
    for case in metrics.CASES:
        got = metrics.per_node_expo(log, "lbs", case, (0, 10_000))
        for nid, (start, end, region_of, _) in truth.items():
            mine = [r for r in rows if pcs[r.pc].nid == nid]
            want = oracle_expo(start, end, region_of, pcs, mine, case) if mine else 0.0
            assert got[nid] == pytest.approx(want, abs=1e-12)
            assert 0.0 <= got[nid] <= 1.0 + 1e-12
        if case == "C1":
            c1 = got
        elif case == "C2":
            c2 = got
            assert all(c1[n] <= c2[n] + 1e-12 for n in got)
        else:
            assert all(c2[n] <= got[n] + 1e-12 for n in got)


# -- hand examples ----------------------------------------------------------------------

def one_trip(regions, end=600):
    return TripRecord("a", 0, end, "honest", regions)


def test_expo_full_exposure_is_one():
    trip = one_trip([(0, 0), (1, 100), (2, 300)])
    pcs = {1: PcInfo(1, 1, "a", 0, 600)}
    rows = [ExposureRow(1, r, t) for r, t in ((0, 10), (1, 150), (2, 400))]
    for case in metrics.CASES:
        assert expo_deg(trip, rows, pcs, case) == 1.0


def test_expo_no_rows_is_zero():
    assert expo_deg(one_trip([(0, 0)]), [], {}, "C1") == 0.0


def test_expo_two_segments_quarter():
    trip = one_trip([(0, 0), (1, 150), (2, 300), (3, 450)])
    pcs = {1: PcInfo(1, 1, "a", 0, 300), 2: PcInfo(2, 2, "a", 300, 600)}
    rows = [ExposureRow(1, 0, 10), ExposureRow(2, 2, 310)]
    assert expo_deg(trip, rows, pcs, "C1") == pytest.approx(0.5 * 0.25 + 0.5 * 0.25)
    assert expo_deg(trip, rows, pcs, "C1") == 0.25


def test_link_identities_partitions():
    one_ticket = {i: PcInfo(i, 7, "a", 0, 10) for i in (1, 2, 3)}
    rows = [ExposureRow(i, 0, 0) for i in (1, 2, 3)]
    assert len(link_identities(rows, one_ticket, "C1")) == 3
    assert len(link_identities(rows, one_ticket, "C2")) == 1
    assert len(link_identities(rows, one_ticket, "C3")) == 1
    two_tickets = {1: PcInfo(1, 7, "a", 0, 10), 2: PcInfo(2, 8, "a", 10, 20)}
    rows2 = [ExposureRow(1, 0, 0), ExposureRow(2, 0, 15)]
    assert len(link_identities(rows2, two_tickets, "C2")) == 2
    assert len(link_identities(rows2, two_tickets, "C3")) == 1
    two_nodes = {1: PcInfo(1, 7, "a", 0, 10), 2: PcInfo(2, 7, "b", 0, 10)}
    assert len(link_identities(rows2, two_nodes, "C3")) == 2


def test_hit_ratio_hand_log():
    log = EventLog()
    sources = ["peer"] * 4 + ["local"] + ["lbs"] * 5
    for i, src in enumerate(sources):
        log.add(i, "query_initiated", nid="a", key=("a", i), rid=0, ptype=0, honest=True)
        log.add(i, "query_answered", nid="a", key=("a", i), source=src, false=False)
    assert metrics.peer_hit_ratio(log, (0, 100)) == 0.5
    hits = metrics.hit_ratios(metrics.query_outcomes(log, (0, 100)))
    assert hits["local_hit_ratio"] + hits["lbs_hit_ratio"] + hits["conflicted_ratio"] + 0.4 == pytest.approx(1.0)
    assert metrics.peer_hit_ratio(log, (100, 200)) == 0.0


def test_window_by_initiation_time():
    log = EventLog()
    log.add(99, "query_initiated", nid="a", key=1, rid=0, ptype=0, honest=True)
    log.add(130, "query_answered", nid="a", key=1, source="peer", false=False)
    assert metrics.peer_hit_ratio(log, (0, 100)) == 1.0


def test_resilience_ratios():
    log = EventLog()
    for i in range(10):
        log.add(i, "query_initiated", nid="a", key=i, rid=0, ptype=0, honest=True)
        log.add(i, "query_answered", nid="a", key=i, source="peer" if i < 2 else "lbs", false=i < 1)
    assert metrics.resilience(metrics.query_outcomes(log, (0, 100))) == {
        "affected_query_ratio": 0.1, "attacked_query_ratio": 0.1}
    log.add(50, "detected", nid="a", key=0)
    assert metrics.resilience(metrics.query_outcomes(log, (0, 100))) == {
        "affected_query_ratio": 0.1, "attacked_query_ratio": 0.0}


def test_zero_adversaries_zero_resilience_metrics():
    log = EventLog()
    log.add(0, "sample", serving=3, malicious=0, active_malicious=0)
    assert metrics.serving_timeseries(log) == [(0.0, 0.0, 0.0)]
    assert metrics.resilience({}) == {"affected_query_ratio": 0.0, "attacked_query_ratio": 0.0}


def test_overhead_counts_fetches():
    log = EventLog()
    log.add(0, "trip_start", nid="a", kind="honest", slot=0)
    log.add(0, "region", nid="a", rid=0)
    log.add(0, "pc", nid="a", pc=1, ticket=1, s=1, group=0, t_start=0, t_end=600)
    log.add(0, "trip_start", nid="b", kind="honest", slot=1)
    log.add(0, "region", nid="b", rid=0)
    log.add(0, "pc", nid="b", pc=2, ticket=2, s=0, group=None, t_start=0, t_end=600)
    for i, t in enumerate((10, 100, 200, 300)):
        log.add(t, "regional_fetch", nid="a", rid=i, nbytes=1000)
    log.add(600, "trip_end", nid="a", reason="x")
    log.add(600, "trip_end", nid="b", reason="x")
    trips, pcs = metrics.trips_from_log(log), metrics.pcs_from_log(log)
    ov = metrics.overhead(log, (0, 600), trips, pcs)
    assert ov["regional_fetches_per_serving_node"] == 4
    assert ov["regional_fetches_per_node"] == 2
