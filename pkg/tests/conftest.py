import numpy as np
import pytest

from fbmqueue.montecarlo import EstimatorConfig

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    """Record one pass/fail line per acceptance criterion; printed in the terminal summary."""

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        status = "PASS" if passed else "FAIL"
        _ACCEPTANCE_LINES.append(f"[{status}] criterion {number:>2}: {title} | {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_zu_cfg():
    """Coarse Z_u sampler for unit tests: cheap, with a few percent of grid bias."""
    return EstimatorConfig(zu_samples=10_000, zu_steps=2**15)


def dyadic_path(rng, n, scale_bits=6, magnitude=64):
    """Random path on the lattice 2^-scale_bits * [-magnitude, magnitude].

    Sums, negations, maxima and dyadic convex combinations of such values are
    exact in binary floating point, so reflection-map identities hold with no
    rounding slack.
    """
    return rng.integers(-magnitude, magnitude + 1, size=n).astype(float) / 2.0**scale_bits
