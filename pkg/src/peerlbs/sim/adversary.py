"""Adversarial node behaviors: colluding malicious servers and a beacon jammer."""

from __future__ import annotations

import hashlib

from ..lbs_server import PoiEntry, encode_entries
from ..messages import Query, sign_beacon
from ..node_logic import Node


def false_response(adv_key: bytes, query: Query, epoch: int, payload_size: int, entries_per_type: int) -> bytes:
    """Fabricated answer shared by every colluder for (query, epoch)."""
    base = hashlib.sha256(adv_key + query.to_bytes() + epoch.to_bytes(8, "little")).digest()
    entries = []
    for t in query.poi_types:
        for i in range(max(1, entries_per_type)):
            seed = hashlib.sha256(base + t.to_bytes(2, "little") + i.to_bytes(4, "little")).digest()
            payload = (seed * (payload_size // len(seed) + 1))[:payload_size]
            entries.append(PoiEntry(query.rid, t, i, payload))
    return encode_entries(entries)


class MaliciousNode(Node):
    """Serves fabricated POI data, honestly signed so that it can be pinned later."""

    def __init__(self, *args, adv_key: bytes = b"", payload_size: int = 500, entries_per_type: int = 10,
                 rogue_beacons: bool = False, **kwargs):
        super().__init__(*args, **kwargs)
        self.adv_key = adv_key
        self.payload_size = payload_size
        self.entries_per_type = entries_per_type
        self.rogue_beacons = rogue_beacons

    def respond_bytes(self, query, data, now):
        return false_response(self.adv_key, query, data.epoch, self.payload_size, self.entries_per_type)

    def beacon_tick(self, now: float):
        beacon = super().beacon_tick(now)
        if beacon is not None or not self.rogue_beacons or self.rid is None:
            return beacon
        pc = self.current_pc(now)
        if pc is None:
            return None
        lbs = self.services.lbs
        t_exp = lbs.t_exp(lbs.refresh_epoch(now))
        return sign_beacon(self.services.suite, self.rid, t_exp, now, pc, self._sk(pc))


class Jammer:
    """Predicts a tracked PC's next beacon from its last gap and erases it if the guess lands."""

    def __init__(self, gate: float = 0.5):
        self.gate = gate
        self.seen: dict = {}  # PC serial -> (previous time, last time)

    def can_predict(self, pc_serial: int) -> bool:
        prev, _ = self.seen.get(pc_serial, (None, None))
        return prev is not None

    def predicts(self, pc_serial: int, t: float) -> bool:
        prev, last = self.seen.get(pc_serial, (None, None))
        if prev is None:
            return False
        return abs(t - (last + (last - prev))) <= self.gate

    def observe(self, pc_serial: int, t: float):
        _, last = self.seen.get(pc_serial, (None, None))
        self.seen[pc_serial] = (last, t)
