"""Append-only, totally ordered simulation log."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass


@dataclass(frozen=True)
class Event:
    time: float
    seq: int
    kind: str
    data: dict


class EventLog:
    def __init__(self):
        self.events: list[Event] = []
        self._by_kind = defaultdict(list)

    def add(self, time: float, kind: str, /, **data) -> Event:
        ev = Event(float(time), len(self.events), kind, data)
        self.events.append(ev)
        self._by_kind[kind].append(ev)
        return ev

    def of(self, kind: str) -> list[Event]:
        return self._by_kind.get(kind, [])

    def __len__(self):
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def kinds(self) -> list[str]:
        return sorted(self._by_kind)
