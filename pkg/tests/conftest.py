import warnings

import pytest

from shimprobe.catalog import load_default_catalog
from shimprobe.fuzz import MockSandbox
from shimprobe.harness import Harness, LogReader, LogWriter
from shimprobe.interceptor import MockInterceptor
from shimprobe.kernel import Clock, MockKernel
from shimprobe.model.memory import VirtualAddressSpace
from shimprobe.shim import Shim, load_preset

warnings.filterwarnings("ignore", category=DeprecationWarning, module="starlette.*")


@pytest.fixture(scope="session")
def registry():
    return load_default_catalog()


class MockSession:
    """Fully wired in-process session against the deterministic backend."""

    def __init__(self, policy, registry, tmp_path=None, session="t"):
        base = tmp_path
        self.registry = registry
        self.session = session
        self.clock = Clock()
        self.kernel = MockKernel(registry, self.clock)
        self.internal = MockKernel(registry, self.clock, label="internal")
        self.u_path = base / "u.log"
        self.k_path = base / "k.log"
        self.uw = LogWriter(self.u_path, session)
        self.kw = LogWriter(self.k_path, session)
        self.interceptor = MockInterceptor(self.kernel, registry, session, self.kw)
        self.shim = Shim(policy, registry, self.interceptor, self.internal, VirtualAddressSpace)
        self.harness = Harness(self.shim, registry, session, self.uw, self.clock,
                               VirtualAddressSpace)
        self.sandbox = MockSandbox(self.kernel, mirrors=(self.internal,))

    def close(self):
        self.uw.close()
        self.kw.close()

    def records(self):
        self.uw.close()
        self.kw.close()
        return (list(LogReader(self.u_path).records()),
                list(LogReader(self.k_path).records()))


@pytest.fixture
def make_session(registry, tmp_path):
    sessions = []

    def _make(preset="null", policy=None):
        pol = policy if policy is not None else load_preset(preset, registry)
        s = MockSession(pol, registry, tmp_path=tmp_path, session="t")
        sessions.append(s)
        return s

    yield _make
    for s in sessions:
        s.close()
