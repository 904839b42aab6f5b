import numpy as np
import pytest

from lpstab import generators as G

# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)


_SUITES: dict = {}


def suite_bodies(n, fresh=False):
    """(spec, body) pairs of the default suite, built once per session.

    ``fresh`` builds new bodies with empty caches (for timed runs).
    """
    if fresh:
        return [(s, s.build()) for s in G.default_suite(n)]
    if n not in _SUITES:
        _SUITES[n] = [(s, s.build()) for s in G.default_suite(n)]
    return _SUITES[n]


@pytest.fixture(scope="session")
def suite2():
    return suite_bodies(2)


@pytest.fixture(scope="session")
def suite3():
    return suite_bodies(3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def membership(h_fine, nodes_fine, pts, chunk=20000):
    """x in K iff x.u <= h(u) on a dense direction set (independent of the quadrature)."""
    r = np.linalg.norm(pts, axis=1)
    inside = r <= h_fine.min()
    shell = np.nonzero((r > h_fine.min()) & (r <= h_fine.max()))[0]
    for i in range(0, len(shell), chunk):
        idx = shell[i:i + chunk]
        inside[idx] = np.all(pts[idx] @ nodes_fine.T <= h_fine[None, :], axis=1)
    return inside
