from __future__ import annotations

import itertools

import numpy as np
import pytest

from ttsobol.tt import TTTensor, tt_random

# acceptance outcomes: criterion number -> (title, [passed per test phase])
_CRITERIA: dict[int, tuple[str, list[bool]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.skipped:
        return
    if rep.when == "call" or rep.failed:
        n, title = mark.args
        _CRITERIA.setdefault(n, (title, []))[1].append(rep.passed)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, results = _CRITERIA[n]
        status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status}  {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_tt(rng, dims, rank) -> TTTensor:
    return tt_random(dims, rank, rng)


def random_binary_tt(rng, N, rank=3) -> TTTensor:
    return tt_random((2,) * N, rank, rng)


def subsets(N):
    """All 0-based subsets of range(N) as bit tuples, lexicographic."""
    return list(itertools.product((0, 1), repeat=N))


def dense_superset(a: np.ndarray) -> np.ndarray:
    N = a.ndim
    out = np.zeros_like(a)
    for alpha in subsets(N):
        out[alpha] = sum(a[b] for b in subsets(N) if all(bi >= ai for ai, bi in zip(alpha, b)))
    return out


def dense_closed(a: np.ndarray) -> np.ndarray:
    N = a.ndim
    out = np.zeros_like(a)
    for alpha in subsets(N):
        out[alpha] = sum(a[b] for b in subsets(N) if all(bi <= ai for ai, bi in zip(alpha, b)))
    return out


def dense_total(a: np.ndarray) -> np.ndarray:
    N = a.ndim
    out = np.zeros_like(a)
    for alpha in subsets(N):
        out[alpha] = sum(a[b] for b in subsets(N) if any(ai and bi for ai, bi in zip(alpha, b)))
    return out
