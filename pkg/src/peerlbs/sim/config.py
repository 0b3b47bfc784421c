"""Simulation configuration and its flat key=value file format."""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from typing import Optional


class InvalidConfig(ValueError):
    pass


_UNIFORM = re.compile(r"^\s*uniform\(\s*([0-9.eE+-]+)\s*,\s*([0-9.eE+-]+)\s*\)\s*$")


def parse_beacon(value) -> object:
    """``10`` -> 10.0, ``uniform(5,15)`` -> (5.0, 15.0)."""
    if isinstance(value, tuple):
        return (float(value[0]), float(value[1]))
    if isinstance(value, (int, float)):
        return float(value)
    m = _UNIFORM.match(str(value))
    if m:
        return (float(m.group(1)), float(m.group(2)))
    try:
        return float(value)
    except ValueError:
        raise InvalidConfig(f"bad T_beacon {value!r}") from None


def format_beacon(value) -> str:
    if isinstance(value, tuple):
        return f"uniform({value[0]:g},{value[1]:g})"
    return f"{value:g}"


@dataclass(frozen=True)
class SimConfig:
    seed: int = 1
    # world and mobility
    area_width: float = 4000.0
    area_height: float = 4000.0
    L: float = 1000.0
    node_count: int = 200
    v_lo: float = 5.0
    v_hi: float = 15.0
    trip_min: float = 600.0
    trip_max: float = 1800.0
    mobility: str = "synthetic"       # synthetic | trace
    trace_path: str = ""
    participation_ratio: float = 0.4
    comm_range: float = 200.0
    # credentials
    Gamma: int = 600
    tau: int = 300
    T_serve: Optional[int] = None     # equals Gamma
    Pr_serve: float = 0.06
    G: int = 1
    # POI data
    T_POI: int = 1200
    T_total: int = 6
    E: int = 10
    payload_size: int = 500
    # querying
    T_wait: float = 60.0
    T_beacon: object = 10.0
    T_query: float = 180.0
    N: int = 3
    Pr_check: float = 0.0
    crl_post_check: bool = True
    rate_limit: Optional[int] = None  # default: twice the nominal beacon rate over 60 s
    p2p_encryption: bool = True
    # adversaries
    Ratio_adv: float = 0.2
    adversary_kind: str = "curious"   # curious | malicious | jammer
    collusion_case: str = "C1"
    rogue_beacons: bool = False
    jam_gate: float = 0.5
    recover_after_revocation: bool = False
    # baseline
    baseline: str = "none"            # none | mobicrowd
    Ratio_coop: float = 0.5
    rebroadcast: float = 10.0
    # run
    duration: float = 1800.0
    warmup: float = 600.0
    sample_interval: float = 60.0
    crypto: str = "null"              # null | ec

    def __post_init__(self):
        object.__setattr__(self, "T_beacon", parse_beacon(self.T_beacon))
        if self.T_serve is None:
            object.__setattr__(self, "T_serve", self.Gamma)
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise InvalidConfig(msg)

        need(self.area_width > 0 and self.area_height > 0 and self.L > 0, "area and L must be positive")
        need(self.node_count >= 0, "node_count must be non-negative")
        need(0 <= self.v_lo <= self.v_hi, "need 0 <= v_lo <= v_hi")
        need(0 < self.trip_min <= self.trip_max, "need 0 < trip_min <= trip_max")
        need(self.Gamma > 0 and self.tau > 0 and self.Gamma % self.tau == 0, "Gamma must be a positive multiple of tau")
        need(self.T_serve == self.Gamma, "T_serve must equal Gamma")
        need(self.T_POI > 0 and self.T_wait > 0 and self.T_query > 0, "periods must be positive")
        if isinstance(self.T_beacon, tuple):
            need(0 < self.T_beacon[0] <= self.T_beacon[1], "uniform T_beacon needs 0 < lo <= hi")
        else:
            need(self.T_beacon > 0, "T_beacon must be positive")
        need(self.N >= 1 and self.G >= 1 and self.T_total >= 1 and self.E >= 0, "N, G, T_total >= 1")
        for name in ("Pr_serve", "Pr_check", "Ratio_adv", "Ratio_coop", "participation_ratio"):
            need(0.0 <= getattr(self, name) <= 1.0, f"{name} must be in [0, 1]")
        need(self.duration > self.warmup >= 0, "need duration > warmup >= 0")
        need(self.comm_range >= 0, "comm_range must be non-negative")
        need(self.adversary_kind in ("curious", "malicious", "jammer"), f"bad adversary_kind {self.adversary_kind!r}")
        need(self.collusion_case in ("C1", "C2", "C3"), f"bad collusion_case {self.collusion_case!r}")
        need(self.baseline in ("none", "mobicrowd"), f"bad baseline {self.baseline!r}")
        need(self.mobility in ("synthetic", "trace"), f"bad mobility {self.mobility!r}")
        need(self.mobility != "trace" or bool(self.trace_path), "trace mobility needs trace_path")
        need(self.crypto in ("null", "ec"), f"bad crypto {self.crypto!r}")
        need(self.sample_interval > 0 and self.rebroadcast > 0, "intervals must be positive")

    @property
    def n_cols(self) -> int:
        return max(1, -(-int(self.area_width) // int(self.L)))

    @property
    def n_rows(self) -> int:
        return max(1, -(-int(self.area_height) // int(self.L)))

    @property
    def n_regions(self) -> int:
        return self.n_cols * self.n_rows

    @property
    def nominal_beacon_interval(self) -> float:
        if isinstance(self.T_beacon, tuple):
            return (self.T_beacon[0] + self.T_beacon[1]) / 2
        return self.T_beacon

    @property
    def effective_rate_limit(self) -> int:
        if self.rate_limit is not None:
            return self.rate_limit
        return int(round(2 * 60.0 / self.nominal_beacon_interval))

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "T_beacon":
                v = format_beacon(v)
            elif v is None:
                continue
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in dataclasses.fields(SimConfig)}


def coerce(key: str, raw: str):
    """Convert a textual value to the type of SimConfig field ``key``."""
    if key not in _FIELDS:
        raise InvalidConfig(f"unknown key {key!r}")
    default = _FIELDS[key].default
    raw = raw.strip()
    if key == "T_beacon":
        return parse_beacon(raw)
    if key in ("T_serve", "rate_limit"):
        return None if raw.lower() in ("", "none") else int(raw)
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise InvalidConfig(f"bad value for {key}: {raw!r}") from None
    return raw


def parse_config_text(text: str) -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidConfig(f"line {n}: expected key=value")
        out[key.strip()] = coerce(key.strip(), value)
    return out


def load_config(path, **overrides) -> SimConfig:
    with open(path) as fh:
        values = parse_config_text(fh.read())
    values.update(overrides)
    return SimConfig(**values)
