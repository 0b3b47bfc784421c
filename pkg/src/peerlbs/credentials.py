"""Identity and credential facility: LTCA, PCA, pseudonym resolution, CRL.

All times are integer seconds on the global simulated clock. Pseudonym
request periods (``gamma``) start at multiples of ``gamma`` and every
pseudonym lifetime ends on a multiple of ``tau``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .wire import Reader, Writer


class CredentialError(Exception):
    pass


class AlreadyRegistered(CredentialError):
    pass


class UnknownNode(CredentialError):
    pass


class OverlappingLifetime(CredentialError):
    """Ticket window overlaps one already issued to the same node (Sybil attempt)."""


class BadSignature(CredentialError):
    pass


class Revoked(CredentialError):
    pass


class BadParameters(CredentialError, ValueError):
    pass


class TicketReplay(CredentialError):
    pass


class BadSelfSignature(CredentialError):
    pass


class CountMismatch(CredentialError):
    pass


class UnknownPC(CredentialError):
    pass


@dataclass(frozen=True)
class LongTermCertificate:
    serial: int
    node_id: str
    public_key: bytes
    issuer_sig: bytes = b""

    def tbs(self) -> bytes:
        return Writer().u64(self.serial).blob(self.node_id.encode()).blob(self.public_key).getvalue()


@dataclass(frozen=True)
class TicketRequest:
    ltc_serial: int
    t_s: int
    sig: bytes = b""

    def tbs(self) -> bytes:
        return Writer().raw(b"TREQ").u64(self.ltc_serial).i64(self.t_s).getvalue()


@dataclass(frozen=True)
class Ticket:
    # No node identifier on purpose: the PCA must not learn who holds it.
    serial: int
    t_s: int
    issuer_sig: bytes = b""

    def tbs(self) -> bytes:
        return Writer().raw(b"TCKT").u64(self.serial).i64(self.t_s).getvalue()


@dataclass(frozen=True)
class PseudonymCertificate:
    serial: int
    public_key: bytes
    s: int
    group: Optional[int]
    t_start: int
    t_end: int
    issuer_sig: bytes = b""

    def tbs(self) -> bytes:
        return (
            Writer().raw(b"PC").u64(self.serial).blob(self.public_key).u8(self.s)
            .i32(-1 if self.group is None else self.group)
            .i64(self.t_start).i64(self.t_end).getvalue()
        )

    def valid_at(self, t: float) -> bool:
        return self.t_start <= t < self.t_end

    @property
    def serving(self) -> bool:
        return self.s == 1

    def encode_into(self, w: Writer) -> Writer:
        w.u64(self.serial).blob(self.public_key).u8(self.s)
        w.i32(-1 if self.group is None else self.group)
        w.i64(self.t_start).i64(self.t_end).blob(self.issuer_sig)
        return w

    @classmethod
    def decode_from(cls, r: Reader) -> "PseudonymCertificate":
        serial = r.u64()
        pub = r.blob()
        s = r.u8()
        group = r.i32()
        t_start = r.i64()
        t_end = r.i64()
        sig = r.blob()
        return cls(serial, pub, s, None if group < 0 else group, t_start, t_end, sig)


@dataclass(frozen=True)
class CredentialBatch:
    ticket_serial: int
    pcs: tuple

    @property
    def s(self) -> int:
        return self.pcs[0].s

    @property
    def group(self) -> Optional[int]:
        return self.pcs[0].group

    def pc_at(self, t: float) -> Optional[PseudonymCertificate]:
        for pc in self.pcs:
            if pc.valid_at(t):
                return pc
        return None


@dataclass(frozen=True)
class RevocationList:
    version: int
    publish_time: int
    revoked_pc_serials: frozenset = frozenset()
    revoked_ltc_serials: frozenset = frozenset()

    def is_revoked_pc(self, serial: int) -> bool:
        return serial in self.revoked_pc_serials

    def to_text(self) -> str:
        lines = [f"CRL v{self.version} t{self.publish_time}"]
        lines += [f"PC {s}" for s in sorted(self.revoked_pc_serials)]
        lines += [f"LTC {s}" for s in sorted(self.revoked_ltc_serials)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RevocationList":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty CRL")
        head = lines[0].split()
        if len(head) != 3 or head[0] != "CRL" or not head[1].startswith("v") or not head[2].startswith("t"):
            raise ValueError(f"bad CRL header {lines[0]!r}")
        pcs, ltcs = set(), set()
        for ln in lines[1:]:
            kind, _, serial = ln.partition(" ")
            if kind == "PC":
                pcs.add(int(serial))
            elif kind == "LTC":
                ltcs.add(int(serial))
            else:
                raise ValueError(f"bad CRL entry {ln!r}")
        return cls(int(head[1][1:]), int(head[2][1:]), frozenset(pcs), frozenset(ltcs))


EMPTY_CRL = RevocationList(0, 0)


def next_gamma_boundary(t_s: int, gamma: int) -> int:
    return (t_s // gamma + 1) * gamma


def compute_lifetimes(t_s: int, gamma: int, tau: int) -> list[tuple[int, int]]:
    """Pseudonym validity windows for a request starting at ``t_s``.

    The first window runs from ``t_s`` to the end of its tau slot; the rest
    are full tau slots. Windows stop at the gamma boundary following ``t_s``
    (a batch only covers the remainder of the current request period).
    """
    if not (0 < tau <= gamma) or gamma % tau:
        raise BadParameters(f"need 0 < tau <= gamma and gamma % tau == 0, got gamma={gamma} tau={tau}")
    if t_s < 0:
        raise BadParameters("t_s must be non-negative")
    end = next_gamma_boundary(t_s, gamma)
    windows = []
    start, stop = t_s, t_s - (t_s % tau) + tau
    while start < end:
        windows.append((start, stop))
        start, stop = stop, stop + tau
    return windows


def draw_serving_role(rng, pr_serve: float, groups: int) -> tuple[int, Optional[int]]:
    """One PCA role draw: ``(s, group)``."""
    if rng.random() < pr_serve:
        return 1, (int(rng.integers(groups)) if groups > 1 else 0)
    return 0, None


class LongTermCA:
    def __init__(self, suite, rng, gamma: int):
        self.suite = suite
        self.gamma = gamma
        self._priv, self.public_key = suite.keypair(rng)
        self._next_ltc = 0
        self._next_ticket = 0
        self.ltcs: dict[str, LongTermCertificate] = {}
        self.by_serial: dict[int, LongTermCertificate] = {}
        self.ltca_map: dict[int, str] = {}          # ticket serial -> nid
        self.history: dict[str, list] = {}          # nid -> [(ticket serial, (lo, hi))]
        self.revoked_ltcs: set[int] = set()

    def register_node(self, node_id: str, public_key: bytes) -> LongTermCertificate:
        if node_id in self.ltcs:
            raise AlreadyRegistered(node_id)
        unsigned = LongTermCertificate(self._next_ltc, node_id, bytes(public_key))
        ltc = LongTermCertificate(unsigned.serial, node_id, unsigned.public_key,
                                  self.suite.sign(unsigned.tbs(), self._priv))
        self._next_ltc += 1
        self.ltcs[node_id] = ltc
        self.by_serial[ltc.serial] = ltc
        self.history[node_id] = []
        return ltc

    def verify_ltc(self, ltc: LongTermCertificate) -> bool:
        return self.suite.verify(ltc.tbs(), ltc.issuer_sig, self.public_key)

    def request_ticket(self, ltc: LongTermCertificate, request: TicketRequest, now: int) -> Ticket:
        known = self.by_serial.get(ltc.serial)
        if known != ltc or request.ltc_serial != ltc.serial:
            raise BadSignature("unknown or altered LTC")
        if not self.suite.verify(request.tbs(), request.sig, ltc.public_key):
            raise BadSignature("ticket request signature")
        if ltc.serial in self.revoked_ltcs:
            raise Revoked(f"LTC {ltc.serial}")
        window = (request.t_s, next_gamma_boundary(request.t_s, self.gamma))
        for _, (lo, hi) in self.history[ltc.node_id]:
            if window[0] < hi and lo < window[1]:
                raise OverlappingLifetime(f"{ltc.node_id}: {window} overlaps {(lo, hi)}")
        unsigned = Ticket(self._next_ticket, request.t_s)
        ticket = Ticket(unsigned.serial, unsigned.t_s, self.suite.sign(unsigned.tbs(), self._priv))
        self._next_ticket += 1
        self.ltca_map[ticket.serial] = ltc.node_id
        self.history[ltc.node_id].append((ticket.serial, window))
        return ticket

    def verify_ticket(self, ticket: Ticket) -> bool:
        return self.suite.verify(ticket.tbs(), ticket.issuer_sig, self.public_key)


class PseudonymCA:
    def __init__(self, suite, rng, gamma: int, tau: int, ltca_public_key: bytes):
        compute_lifetimes(0, gamma, tau)  # validates parameters
        self.suite = suite
        self.gamma, self.tau = gamma, tau
        self._priv, self.public_key = suite.keypair(rng)
        self._ltca_pub = ltca_public_key
        self._next_pc = 0
        self.pca_map: dict[int, int] = {}           # PC serial -> ticket serial
        self.by_ticket: dict[int, list] = {}        # ticket serial -> [PC]
        self._consumed: set[int] = set()

    @staticmethod
    def self_sign(suite, private_key: bytes) -> tuple[bytes, bytes]:
        pub = suite.public_key(private_key)
        return pub, suite.sign(b"POP" + pub, private_key)

    def issue_pseudonyms(self, ticket: Ticket, self_signed_pubkeys, pr_serve: float,
                         groups: int, rng) -> CredentialBatch:
        if not self.suite.verify(ticket.tbs(), ticket.issuer_sig, self._ltca_pub):
            raise BadSignature("ticket not issued by LTCA")
        if ticket.serial in self._consumed:
            raise TicketReplay(ticket.serial)
        windows = compute_lifetimes(ticket.t_s, self.gamma, self.tau)
        if len(self_signed_pubkeys) != len(windows):
            raise CountMismatch(f"expected {len(windows)} keys, got {len(self_signed_pubkeys)}")
        for pub, sig in self_signed_pubkeys:
            if not self.suite.verify(b"POP" + pub, sig, pub):
                raise BadSelfSignature(pub.hex()[:16])
        self._consumed.add(ticket.serial)
        s, group = draw_serving_role(rng, pr_serve, groups)
        pcs = []
        for (pub, _), (lo, hi) in zip(self_signed_pubkeys, windows):
            unsigned = PseudonymCertificate(self._next_pc, pub, s, group, lo, hi)
            pcs.append(PseudonymCertificate(
                unsigned.serial, pub, s, group, lo, hi, self.suite.sign(unsigned.tbs(), self._priv)))
            self.pca_map[unsigned.serial] = ticket.serial
            self._next_pc += 1
        self.by_ticket[ticket.serial] = pcs
        return CredentialBatch(ticket.serial, tuple(pcs))

    def verify_pc(self, pc: PseudonymCertificate) -> bool:
        return self.suite.verify(pc.tbs(), pc.issuer_sig, self.public_key)


class CredentialFacility:
    """The LTCA and PCA together, plus the CRL they publish."""

    def __init__(self, suite, rng, gamma: int, tau: int):
        self.suite = suite
        self.ltca = LongTermCA(suite, rng, gamma)
        self.pca = PseudonymCA(suite, rng, gamma, tau, self.ltca.public_key)
        self.crl = EMPTY_CRL

    @property
    def gamma(self) -> int:
        return self.ltca.gamma

    @property
    def tau(self) -> int:
        return self.pca.tau

    def register_node(self, node_id: str, public_key: bytes) -> LongTermCertificate:
        return self.ltca.register_node(node_id, public_key)

    def request_ticket(self, ltc, request, now) -> Ticket:
        return self.ltca.request_ticket(ltc, request, now)

    def issue_pseudonyms(self, ticket, self_signed_pubkeys, pr_serve, groups, rng) -> CredentialBatch:
        return self.pca.issue_pseudonyms(ticket, self_signed_pubkeys, pr_serve, groups, rng)

    def verify_pc(self, pc) -> bool:
        return self.pca.verify_pc(pc)

    def ticket_of(self, pc_serial: int) -> int:
        try:
            return self.pca.pca_map[pc_serial]
        except KeyError:
            raise UnknownPC(pc_serial) from None

    def resolve(self, pc_serial: int) -> str:
        """PC serial -> node id, via PCA then LTCA. Reserved for the RA."""
        return self.ltca.ltca_map[self.ticket_of(pc_serial)]

    def revoke_node(self, node_id: str, now: int) -> RevocationList:
        return self.revoke_nodes([node_id], now)

    def revoke_nodes(self, node_ids, now: int) -> RevocationList:
        """Revoke every listed node in a single new CRL version."""
        pcs = set(self.crl.revoked_pc_serials)
        ltcs = set(self.crl.revoked_ltc_serials)
        for node_id in node_ids:
            ltc = self.ltca.ltcs.get(node_id)
            if ltc is None:
                raise UnknownNode(node_id)
            # Expired PCs are listed too, so peers can post-check old answers.
            for ticket_serial, _ in self.ltca.history[node_id]:
                pcs.update(pc.serial for pc in self.pca.by_ticket.get(ticket_serial, ()))
            self.ltca.revoked_ltcs.add(ltc.serial)
            ltcs.add(ltc.serial)
        self.crl = RevocationList(self.crl.version + 1, int(now), frozenset(pcs), frozenset(ltcs))
        return self.crl

    def republish(self, now: int) -> RevocationList:
        self.crl = RevocationList(self.crl.version + 1, int(now), self.crl.revoked_pc_serials,
                                  self.crl.revoked_ltc_serials)
        return self.crl


@dataclass
class NodeWallet:
    """Node-side credential state: long-term key plus issued batches and keys."""

    node_id: str
    ltc: LongTermCertificate
    ltc_private: bytes
    batches: list = field(default_factory=list)
    pc_keys: dict = field(default_factory=dict)  # PC serial -> private key

    def pc_at(self, t: float) -> Optional[PseudonymCertificate]:
        for batch in reversed(self.batches):
            pc = batch.pc_at(t)
            if pc is not None:
                return pc
        return None

    def key_for(self, pc: PseudonymCertificate) -> bytes:
        return self.pc_keys[pc.serial]


def enroll(facility: CredentialFacility, node_id: str, rng) -> NodeWallet:
    priv, pub = facility.suite.keypair(rng)
    return NodeWallet(node_id, facility.register_node(node_id, pub), priv)


def acquire_batch(facility: CredentialFacility, wallet: NodeWallet, t_s: int, now: int,
                  pr_serve: float, groups: int, role_rng, key_rng) -> CredentialBatch:
    """Ticket request followed by pseudonym request, as a node runs them."""
    suite = facility.suite
    req = TicketRequest(wallet.ltc.serial, t_s)
    req = TicketRequest(req.ltc_serial, req.t_s, suite.sign(req.tbs(), wallet.ltc_private))
    ticket = facility.request_ticket(wallet.ltc, req, now)
    n = len(compute_lifetimes(t_s, facility.gamma, facility.tau))
    privs = [suite.keypair(key_rng)[0] for _ in range(n)]
    batch = facility.issue_pseudonyms(
        ticket, [PseudonymCA.self_sign(suite, k) for k in privs], pr_serve, groups, role_rng)
    for pc, k in zip(batch.pcs, privs):
        wallet.pc_keys[pc.serial] = k
    wallet.batches.append(batch)
    return batch

