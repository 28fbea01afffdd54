import math

import numpy as np
import pytest

from opad.datagen import generate_bsl
from opad.exact import SupportSpec, build_exact_target
from opad.states import pack_bits
from opad.targets import BslModel, IsingModel, IsingParams, TargetModel


class TableTarget(TargetModel):
    """Hypercube target with explicitly tabulated log-scores, for oracles."""

    def __init__(self, scores):
        self.m = int(math.log2(len(scores)))
        assert 2 ** self.m == len(scores)
        self.support = SupportSpec("hypercube", self.m)
        self._scores = {}
        for idx, s in enumerate(scores):
            bits = [(idx >> (self.m - 1 - k)) & 1 for k in range(self.m)]
            self._scores[pack_bits(bits)] = float(s)
        self.calls = 0

    def log_score(self, key):
        self.calls += 1
        return self._scores[key]


@pytest.fixture
def two_state():
    return TableTarget([math.log(2.0), math.log(1.0)])


@pytest.fixture(scope="session")
def ising4():
    return IsingModel(IsingParams(m=4, beta=0.5, mu=1.0, J=1.0, h=0.1))


@pytest.fixture(scope="session")
def ising4_exact(ising4):
    return build_exact_target(ising4)


@pytest.fixture(scope="session")
def dag3():
    ds, _ = generate_bsl(3, 1, 200, seed=11)
    return BslModel(ds.X)


@pytest.fixture(scope="session")
def dag3_exact(dag3):
    return build_exact_target(dag3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        ok, desc, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d}: {desc}  {detail}")
