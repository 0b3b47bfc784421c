import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from peerlbs.crypto import NullSuite, digest
from peerlbs.lbs_server import (
    ALL_GROUPS,
    BadRegion,
    CheckResult,
    LbsServer,
    PoiConfig,
    UnknownEpoch,
    decode_entries,
    group_types,
    response_is_empty,
    search,
)
from peerlbs.messages import BadSignature, ExpiredPC, Query, RevokedPC, build_authenticator

from conftest import World


def server(**kw):
    return LbsServer.create(NullSuite(), np.random.default_rng(0), PoiConfig(**kw))


def groups_oracle(t_total, groups):
    size = -(-t_total // groups)
    types = list(range(t_total))
    return [types[i * size:(i + 1) * size] for i in range(groups)]


def test_refresh_epoch_floor():
    s = server(T_POI=1200)
    assert [s.refresh_epoch(t) for t in (0, 1199, 1200)] == [0, 0, 1]


def test_regional_data_deterministic_within_epoch_only():
    s = server()
    a, b = s.regional_data(7, s.refresh_epoch(100)), s.regional_data(7, s.refresh_epoch(1100))
    c = s.regional_data(7, s.refresh_epoch(1300))
    assert a.to_bytes() == b.to_bytes()
    assert [e.payload for e in a.entries] != [e.payload for e in c.entries]
    assert s.verify_regional(a) and s.verify_regional(c)
    # a fresh server with the same seed rebuilds identical bytes
    assert server().regional_data(7, 0).entries == a.entries


def test_group_partition_example():
    assert list(group_types(1, 9, 3)) == [3, 4, 5]
    s = server(G=3, T_total=9)
    data = s.regional_data(2, 0, group=1)
    assert {e.type_index for e in data.entries} == {3, 4, 5}
    assert {e.type_index for e in server().regional_data(2, 0).entries} == set(range(6))


@given(st.integers(1, 30), st.integers(1, 8))
def test_group_partition_matches_oracle(t_total, groups):
    got = [list(group_types(g, t_total, groups)) for g in range(groups)]
    assert got == groups_oracle(t_total, groups)
    assert sorted(t for block in got for t in block) == list(range(t_total))


def test_g2_halves_entries_for_even_types():
    full = len(server(G=1, T_total=6).regional_data(0, 0).entries)
    half = len(server(G=2, T_total=6).regional_data(0, 0, group=0).entries)
    assert half * 2 == full


def test_bad_region():
    with pytest.raises(BadRegion):
        server(n_regions=16).regional_data(16, 0)


def test_response_size_for_ten_entries():
    s = server(E=10, payload_size=500)
    resp = s.response_bytes(Query(3, (2,)), 0)
    entries = decode_entries(resp)
    assert len(entries) == 10
    assert sum(len(e.payload) for e in entries) == 5000
    # header: count u32; per entry rid u32, type u16, index u32, payload length u32
    assert len(resp) == 4 + 10 * (4 + 2 + 4 + 4 + 500)


def test_all_type_query_equals_regional_entries():
    s = server()
    resp = s.response_bytes(Query(1, tuple(range(6))), 0)
    assert decode_entries(resp) == list(s.regional_data(1, 0).entries)


def test_empty_type_still_answered_and_signed():
    w = World(poi=PoiConfig(entry_counts=(((5, 2), 0),)))
    node = w.node()
    ans = w.lbs.answer_query(Query(5, (2,)), node.current_pc(0), 10)
    assert response_is_empty(ans.resp) and len(ans.sig) == 64
    assert ans.resp == w.lbs.answer_query(Query(5, (2,)), node.current_pc(0), 20).resp


def test_search_canonical_order():
    s = server()
    entries = list(s.regional_data(1, 0).entries)
    shuffled = list(reversed(entries))
    q = Query(1, (4, 0))
    assert search(entries, q) == search(shuffled, q) == s.response_bytes(q, 0)


def test_contact_log_and_requester_checks(world):
    n = world.node()
    pc = n.current_pc(0)
    world.lbs.get_regional(5, ALL_GROUPS, pc, 10)
    world.lbs.answer_query(Query(5, (0,)), pc, 20)
    assert [(c.pc_serial, c.rid, c.kind) for c in world.lbs.contact_log] == [
        (pc.serial, 5, "regional_fetch"), (pc.serial, 5, "direct_query")]
    with pytest.raises(ExpiredPC):
        world.lbs.answer_query(Query(5, (0,)), pc, 10_000)
    world.facility.revoke_node(n.nid, 30)
    with pytest.raises(RevokedPC):
        world.lbs.answer_query(Query(5, (0,)), pc, 40)


def test_check_authenticator_cases(world):
    srv = world.node(serving=True)
    pc = srv.current_pc(0)
    sk = srv.wallet.key_for(pc)
    q = Query(5, (1,))
    honest = world.lbs.response_bytes(q, 0)
    auth = build_authenticator(world.suite, 1, q, honest, 100.0, sk)
    assert world.lbs.check_authenticator(1, q, digest(honest), auth, pc, 100) is CheckResult.POSITIVE
    fake = honest[:-1] + bytes([honest[-1] ^ 1])
    auth_f = build_authenticator(world.suite, 1, q, fake, 100.0, sk)
    assert world.lbs.check_authenticator(1, q, digest(fake), auth_f, pc, 100) is CheckResult.NEGATIVE
    # stale but honest: the auth's own epoch is used, even when checked in a later epoch
    assert world.lbs.check_authenticator(1, q, digest(honest), auth, pc, 1300) is CheckResult.POSITIVE
    with pytest.raises(BadSignature):
        world.lbs.check_authenticator(2, q, digest(honest), auth, pc, 100)
    future = build_authenticator(world.suite, 1, q, honest, 5000.0, sk)
    with pytest.raises(UnknownEpoch):
        world.lbs.check_authenticator(1, q, digest(honest), future, pc, 100)
    # checks expose only the serving PC
    assert world.lbs.contact_log[-1].pc_serial == pc.serial
    assert world.lbs.contact_log[-1].kind == "proactive_check"


def test_payload_prf_differs_across_regions_and_types():
    s = server()
    entries = s.region_entries(0, 0) + s.region_entries(1, 0)
    assert len({e.payload for e in entries}) == len(entries)
    assert math.isclose(len(entries), 2 * 6 * 10)
