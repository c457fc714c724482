import numpy as np
import pytest

from invrl.catalog import load_catalog
from invrl.env import ClusterSpec, CostWeights, ItemSpec
from invrl.stochastic import DemandModel, LeadTimeModel


@pytest.fixture(scope="session")
def catalog():
    return load_catalog()


def make_item(id=0, b=0.5, mu=4.0, p=0.5, C_o=1.0, C_h=1.0, C_s=10.0, **kw):
    return ItemSpec(id=id, demand=DemandModel(b, mu), lead=LeadTimeModel(p), cost_order=C_o,
                    cost_hold=C_h, cost_short=C_s, **kw)


def make_cluster(items, capacity=None, weights=None, initial=None):
    return ClusterSpec.from_items(items, capacity=capacity, cost_weights=weights or CostWeights(),
                                  initial_levels=initial)


def bisect_ppf(alpha, cdf, lo=-12.0, hi=12.0):
    """Inverse of ``cdf`` by plain bisection."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(capsys):
    """Record one acceptance line: ``verdict(n, ok, detail)``."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
