import numpy as np
import pytest

from peerlbs.credentials import CredentialFacility, acquire_batch, enroll
from peerlbs.crypto import EcSuite, NullSuite
from peerlbs.lbs_server import LbsServer, PoiConfig
from peerlbs.node_logic import Node, NodeParams, Services
from peerlbs.resolution_authority import ResolutionAuthority
from peerlbs.sim.adversary import MaliciousNode


@pytest.fixture(params=["ec", "null"])
def suite(request):
    return EcSuite() if request.param == "ec" else NullSuite()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


class World:
    """A hand-wired facility + LBS + RA with nodes placed by the test."""

    def __init__(self, suite=None, seed=0, gamma=600, tau=300, poi=None, params=None):
        self.suite = suite or NullSuite()
        self.rng = np.random.default_rng(seed)
        self.facility = CredentialFacility(self.suite, self.rng, gamma, tau)
        self.lbs = LbsServer.create(self.suite, self.rng, poi or PoiConfig(n_regions=16),
                                    crl_source=lambda: self.facility.crl, verify_pc=self.facility.verify_pc)
        self.ra = ResolutionAuthority(self.suite, self.facility, self.lbs)
        self.params = params or NodeParams()
        self.verdicts = []
        self._n = 0

    def sink(self, report, now):
        v = self.ra.process_report(report, now)
        self.verdicts.append(v)
        return v

    def node(self, serving=False, rid=5, t=0, groups=1, cls=Node, **kw):
        nid = f"n{self._n}"
        self._n += 1
        wallet = enroll(self.facility, nid, self.rng)
        acquire_batch(self.facility, wallet, t, t, 1.0 if serving else 0.0, groups, self.rng, self.rng)
        node = cls(nid, wallet, self.params, Services(self.suite, self.facility, self.lbs, self.sink),
                   np.random.default_rng(self._n), **kw)
        node.rid = rid
        if serving:
            node.maybe_fetch_regional(t)
        return node

    def malicious(self, rid=5, t=0, adv_key=b"k" * 32):
        return self.node(True, rid, t, cls=MaliciousNode, adv_key=adv_key,
                         payload_size=self.lbs.config.payload_size, entries_per_type=self.lbs.config.E)

    def renew(self, node, t, serving=None):
        pr = 1.0 if serving else 0.0
        acquire_batch(self.facility, node.wallet, t, t, pr, 1, self.rng, self.rng)


@pytest.fixture
def world():
    return World()


ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
