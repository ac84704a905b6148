import numpy as np
import pytest

from symspace.cartan import good_frame, iwasawa
from symspace.lie_core import build_algebra
from symspace.solvable import SChart

ACCEPTANCE_LINES = {}


class Space:
    def __init__(self, spec, seed=0):
        self.alg = build_algebra(spec)
        self.iw = iwasawa(self.alg, rng=np.random.default_rng(seed))
        self.frame = good_frame(self.iw)
        self.chart = SChart(self.frame)
        self._sprime = None

    @property
    def sprime(self):
        if self._sprime is None:
            self._sprime = SChart(self.frame, h_index=range(1, self.frame.r))
        return self._sprime


@pytest.fixture(scope="session")
def sl2():
    return Space({"family": "sl", "n": 2})


@pytest.fixture(scope="session")
def sl3():
    return Space({"family": "sl", "n": 3})


@pytest.fixture(scope="session")
def so31():
    return Space({"family": "so", "n": 3})


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
