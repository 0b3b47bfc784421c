import pytest

from peerlbs.messages import (
    REPORT_BEACON_RATE,
    REPORT_NON_SERVING_BEACON,
    REPORT_RESPONSES,
    Evidence,
    Query,
    seal_query,
    sign_beacon,
    sign_report,
)
from peerlbs.resolution_authority import BadReporterSignature, RevokedReporter, Verdict, max_in_window


def exchange(world, querier, server, query, now):
    """Run one peer query/response by hand; returns the Evidence the querier holds."""
    pc = querier.current_pc(now)
    pq, key = seal_query(world.suite, 42, query, pc, querier.wallet.key_for(pc), server.current_pc(now),
                         querier.rng, now)
    resp = server.serve_query(pq, now)
    return Evidence(key, resp)


def report(world, node, kind, query, evidence=(), beacons=(), now=10.0):
    pc = node.current_pc(now)
    return sign_report(world.suite, kind, query, evidence, beacons, pc, node.wallet.key_for(pc), now)


def test_false_evidence_revokes_sender(world):
    q = Query(5, (0,))
    querier, bad = world.node(), world.malicious()
    ev = exchange(world, querier, bad, q, 10.0)
    v = world.ra.process_report(report(world, querier, REPORT_RESPONSES, q, [ev]), 10.0)
    assert v.verdicts == (Verdict.DISHONEST,) and v.resolved_nids == (bad.nid,)
    crl = world.facility.crl
    assert crl.version == 1 and bad.current_pc(10.0) is None
    assert ev.response.sender_pc.serial in crl.revoked_pc_serials


def test_spurious_report_no_revocation(world):
    q = Query(5, (0,))
    querier, good = world.node(), world.node(serving=True)
    ev = exchange(world, querier, good, q, 10.0)
    v = world.ra.process_report(report(world, querier, REPORT_RESPONSES, q, [ev]), 10.0)
    assert v.spurious and v.resolved_nids == () and world.facility.crl.version == 0
    assert querier.current_pc(10.0) is not None  # reporter is not punished


def test_undecryptable_evidence_unverifiable(world):
    q = Query(5, (0,))
    querier, bad = world.node(), world.malicious()
    ev = exchange(world, querier, bad, q, 10.0)
    broken = Evidence(b"\x00" * 32, ev.response)
    v = world.ra.process_report(report(world, querier, REPORT_RESPONSES, q, [broken]), 10.0)
    assert v.verdicts == (Verdict.UNVERIFIABLE,) and world.facility.crl.version == 0


def test_two_dishonest_in_one_version(world):
    q = Query(5, (0,))
    querier, a, b = world.node(), world.malicious(), world.malicious()
    evs = [exchange(world, querier, a, q, 10.0), exchange(world, querier, b, q, 10.0)]
    v = world.ra.process_report(report(world, querier, REPORT_RESPONSES, q, evs), 10.0)
    assert set(v.resolved_nids) == {a.nid, b.nid}
    assert world.facility.crl.version == 1


def test_republish_bumps_version_same_entries(world):
    q = Query(5, (0,))
    querier, bad = world.node(), world.malicious()
    world.ra.process_report(report(world, querier, REPORT_RESPONSES, q, [exchange(world, querier, bad, q, 10)]), 10)
    first = world.facility.crl
    again = world.ra.publish_crl(20)
    assert again.version == first.version + 1
    assert again.revoked_pc_serials == first.revoked_pc_serials


def test_non_serving_beacon_report(world):
    rogue = world.node()
    pc = rogue.current_pc(5)
    beacon = sign_beacon(world.suite, 5, 1200, 5.0, pc, rogue.wallet.key_for(pc))
    reporter = world.node()
    v = world.ra.process_report(report(world, reporter, REPORT_NON_SERVING_BEACON, Query(5, (0,)),
                                       beacons=[beacon]), 10)
    assert v.verdicts == (Verdict.DISHONEST,) and v.resolved_nids == (rogue.nid,)


def test_rate_report_thresholds(world):
    srv = world.node(serving=True)
    pc = srv.current_pc(0)
    sk = srv.wallet.key_for(pc)
    fast = [sign_beacon(world.suite, 5, 1200, float(t), pc, sk) for t in range(0, 60, 4)]  # 15 in 60 s
    slow = fast[::2]
    reporter = world.node()
    ok = world.ra.process_report(report(world, reporter, REPORT_BEACON_RATE, Query(5, (0,)), beacons=slow), 60)
    assert ok.verdicts == (Verdict.HONEST,)
    bad = world.ra.process_report(report(world, reporter, REPORT_BEACON_RATE, Query(5, (0,)), beacons=fast), 60)
    assert bad.verdicts == (Verdict.DISHONEST,) and bad.resolved_nids == (srv.nid,)


def test_reporter_checks(world):
    q = Query(5, (0,))
    querier, bad = world.node(), world.malicious()
    rep = report(world, querier, REPORT_RESPONSES, q, [exchange(world, querier, bad, q, 10.0)])
    forged = type(rep)(rep.kind, rep.query, rep.evidence, rep.beacons, rep.reporter_pc, rep.timestamp, b"\x00" * 64)
    with pytest.raises(BadReporterSignature):
        world.ra.process_report(forged, 10.0)
    world.facility.revoke_node(querier.nid, 10)
    with pytest.raises(RevokedReporter):
        world.ra.process_report(rep, 10.0)


@pytest.mark.parametrize("times,window,expected", [
    ([], 60, 0), ([0, 59.9, 60], 60, 2), ([0, 1, 2, 3], 60, 4), ([0, 30, 60, 90], 60, 2)])
def test_max_in_window(times, window, expected):
    assert max_in_window(times, window) == expected
