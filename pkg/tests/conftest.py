import numpy as np
import pytest

FS = 48000.0
DEFAULT_CROSSOVERS = (70.0, 375.0, 3750.0)


@pytest.fixture
def fs():
    return FS


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def random_crossovers(rng, n, fs=FS, lo=20.0):
    """Strictly increasing, well separated crossover frequencies below 0.45 fs."""
    edges = np.sort(rng.uniform(np.log(lo), np.log(0.45 * fs), size=n))
    freqs = np.exp(edges)
    for i in range(1, n):
        freqs[i] = max(freqs[i], freqs[i - 1] * 1.05)
    return tuple(float(f) for f in freqs)


def split_blocks(n, rng, max_block=700):
    """Random block boundaries covering n samples, zero-length blocks included."""
    bounds = [0]
    while bounds[-1] < n:
        bounds.append(min(n, bounds[-1] + int(rng.integers(0, max_block))))
    return list(zip(bounds[:-1], bounds[1:]))


_CRITERIA = []


def record_criterion(number, title, passed, detail):
    _CRITERIA.append((number, title, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_CRITERIA, key=lambda c: (c[0], c[1])):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  [{number:>2}] {title}: {detail}")
