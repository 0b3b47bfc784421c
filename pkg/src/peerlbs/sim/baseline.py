"""MobiCrowd-style baseline: cleartext query broadcasts answered with whole
signed regional data by any cooperative peer that holds it."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..lbs_server import group_types
from ..messages import Query


@dataclass
class PendingBroadcast:
    key: tuple
    query: Query
    requested_at: float
    deadline: float


class MobiNode:
    def __init__(self, nid: str, wallet, services, rng, ratio_coop: float, T_wait: float, T_total: int):
        self.nid = nid
        self.wallet = wallet
        self.services = services
        self.rng = rng
        self.ratio_coop = ratio_coop
        self.T_wait = T_wait
        self.T_total = T_total
        self.rid: Optional[int] = None
        self.cache: dict = {}
        self.pending: Optional[PendingBroadcast] = None
        self.online = True
        self.history: list = []

    def current_pc(self, now: float):
        pc = self.wallet.pc_at(now)
        if pc is None or self.services.crl.is_revoked_pc(pc.serial):
            return None
        return pc

    def is_serving(self, now: float) -> bool:
        return False

    def fresh_regional(self, rid: int, now: float):
        data = self.cache.get(rid)
        if data is not None and data.t_exp > now:
            return data
        return None

    def covered(self, query: Query, now: float) -> bool:
        data = self.fresh_regional(query.rid, now)
        return data is not None and all(t in group_types(data.group, self.T_total, 1) for t in query.poi_types)

    def start_query(self, key, query: Query, now: float, requested_at: float) -> bool:
        """True if answered from the local cache; otherwise a broadcast is pending."""
        if self.covered(query, now):
            return True
        self.pending = PendingBroadcast(key, query, requested_at, now + self.T_wait)
        return False

    def on_query(self, query: Query, now: float):
        """Cooperate with probability Ratio_coop when holding the region's data."""
        data = self.fresh_regional(query.rid, now)
        if data is None:
            return None
        if self.rng.random() >= self.ratio_coop:
            return None
        return data

    def on_data(self, data, now: float) -> bool:
        p = self.pending
        if p is None or data.rid != p.query.rid or data.t_exp <= now:
            return False
        if not self.services.lbs.verify_regional(data):
            return False
        self.cache[data.rid] = data
        self.pending = None
        return True

    def fetch_from_lbs(self, now: float):
        p = self.pending
        self.pending = None
        pc = self.current_pc(now)
        data = self.services.lbs.get_regional(p.query.rid, -1, pc, now)
        self.cache[data.rid] = data
        return data
