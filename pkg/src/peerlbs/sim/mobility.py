"""Node movement: synthetic random waypoint with finite trips, or a CSV trace.

Both models expose the same slot-array view: ``x``, ``y`` and ``active``
are numpy arrays indexed by slot, and ``tick(now)`` advances to ``now`` and
returns the slots that started and ended a trip on that tick.
"""

from __future__ import annotations

import csv
from collections import defaultdict

import numpy as np


class TraceParseError(ValueError):
    pass


class _Slots:
    def __init__(self, capacity: int = 64):
        self.x = np.zeros(capacity)
        self.y = np.zeros(capacity)
        self.active = np.zeros(capacity, dtype=bool)
        self.size = 0

    def alloc(self) -> int:
        if self.size == len(self.x):
            grow = len(self.x)
            self.x = np.concatenate([self.x, np.zeros(grow)])
            self.y = np.concatenate([self.y, np.zeros(grow)])
            self.active = np.concatenate([self.active, np.zeros(grow, dtype=bool)])
            self._grow(grow)
        slot = self.size
        self.size += 1
        self.active[slot] = True
        return slot

    def _grow(self, n: int):
        pass

    def remove(self, slot: int):
        self.active[slot] = False

    def position(self, slot: int) -> tuple[float, float]:
        return float(self.x[slot]), float(self.y[slot])


class RandomWaypoint(_Slots):
    """Random waypoint over the whole area with Poisson trip arrivals."""

    def __init__(self, cfg, rng, horizon: float):
        super().__init__(max(64, 2 * cfg.node_count))
        self.cfg = cfg
        self.rng = rng
        self.dest_x = np.zeros(len(self.x))
        self.dest_y = np.zeros(len(self.x))
        self.speed = np.zeros(len(self.x))
        self.trip_end = np.full(len(self.x), np.inf)
        self.now = 0.0
        self._pending = self._draw_trips(horizon)
        self._next = 0

    def _grow(self, n: int):
        self.dest_x = np.concatenate([self.dest_x, np.zeros(n)])
        self.dest_y = np.concatenate([self.dest_y, np.zeros(n)])
        self.speed = np.concatenate([self.speed, np.zeros(n)])
        self.trip_end = np.concatenate([self.trip_end, np.full(n, np.inf)])

    def _draw_trips(self, horizon: float) -> list:
        cfg, rng = self.cfg, self.rng
        trips = []
        # Nodes already on the road at t=0 sit at a uniform point of their trip.
        for _ in range(cfg.node_count):
            length = rng.uniform(cfg.trip_min, cfg.trip_max)
            trips.append((0.0, max(1.0, length * (1.0 - rng.random()))))
        mean_trip = (cfg.trip_min + cfg.trip_max) / 2
        rate = cfg.node_count / mean_trip
        t = 0.0
        while rate > 0:
            t += rng.exponential(1.0 / rate)
            if t > horizon:
                break
            trips.append((float(np.ceil(t)), rng.uniform(cfg.trip_min, cfg.trip_max)))
        return sorted(trips, key=lambda tr: tr[0])

    def _new_leg(self, idx):
        cfg, n = self.cfg, len(idx)
        self.dest_x[idx] = self.rng.uniform(0, cfg.area_width, n)
        self.dest_y[idx] = self.rng.uniform(0, cfg.area_height, n)
        self.speed[idx] = self.rng.uniform(cfg.v_lo, cfg.v_hi, n)

    def _move(self, dt: float):
        idx = np.flatnonzero(self.active[: self.size])
        if len(idx) == 0 or dt <= 0:
            return
        dx = self.dest_x[idx] - self.x[idx]
        dy = self.dest_y[idx] - self.y[idx]
        dist = np.hypot(dx, dy)
        step = self.speed[idx] * dt
        arrived = (dist <= step) & (step > 0)
        frac = np.where(dist > 0, np.minimum(step / np.where(dist > 0, dist, 1.0), 1.0), 0.0)
        self.x[idx] = np.clip(self.x[idx] + dx * frac, 0, self.cfg.area_width)
        self.y[idx] = np.clip(self.y[idx] + dy * frac, 0, self.cfg.area_height)
        if arrived.any():
            self._new_leg(idx[arrived])

    def tick(self, now: float):
        self._move(now - self.now)
        self.now = now
        ended = [int(s) for s in np.flatnonzero(self.active[: self.size] & (self.trip_end[: self.size] <= now))]
        for s in ended:
            self.remove(s)
        started = []
        while self._next < len(self._pending) and self._pending[self._next][0] <= now:
            start, length = self._pending[self._next]
            self._next += 1
            slot = self.alloc()
            self.x[slot] = self.rng.uniform(0, self.cfg.area_width)
            self.y[slot] = self.rng.uniform(0, self.cfg.area_height)
            self._new_leg(np.array([slot]))
            self.trip_end[slot] = start + length
            started.append(slot)
        return started, ended


def load_trace(path) -> dict:
    """Read a ``time,nid,x,y`` CSV into {int second: {nid: (x, y)}}."""
    by_time = defaultdict(dict)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["time", "nid", "x", "y"]:
                raise TraceParseError(f"expected header time,nid,x,y, got {header}")
            for n, row in enumerate(reader, 2):
                if not row:
                    continue
                if len(row) != 4:
                    raise TraceParseError(f"line {n}: expected 4 fields")
                try:
                    t, x, y = float(row[0]), float(row[2]), float(row[3])
                except ValueError:
                    raise TraceParseError(f"line {n}: non-numeric field") from None
                by_time[int(np.floor(t))][row[1].strip()] = (x, y)
    except OSError as exc:
        raise TraceParseError(str(exc)) from exc
    return dict(by_time)


class TraceMobility(_Slots):
    """Positions replayed from a trace; each contiguous presence is one trip."""

    def __init__(self, cfg, rng, by_time: dict):
        super().__init__()
        self.cfg = cfg
        nids = sorted({nid for rows in by_time.values() for nid in rows})
        keep = rng.random(len(nids)) < cfg.participation_ratio
        self.participants = {nid for nid, k in zip(nids, keep) if k}
        self.by_time = by_time
        self.slot_of: dict = {}
        self.trace_nid: dict = {}

    def tick(self, now: float):
        rows = {nid: p for nid, p in self.by_time.get(int(now), {}).items() if nid in self.participants}
        ended = [slot for nid, slot in self.slot_of.items() if nid not in rows]
        for slot in ended:
            self.remove(slot)
            del self.slot_of[self.trace_nid[slot]]
        started = []
        for nid in sorted(rows):
            slot = self.slot_of.get(nid)
            if slot is None:
                slot = self.slot_of[nid] = self.alloc()
                self.trace_nid[slot] = nid
                started.append(slot)
            self.x[slot], self.y[slot] = rows[nid]
        return started, ended
