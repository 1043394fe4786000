import numpy as np
import pytest

from qpresponse.fourier import FourierSeries, NormParams
from qpresponse.problem import FourierTaylor, ProblemSpec

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def norm():
    return NormParams(0.1, 2.0)


def standard_forcing(amp: float = 0.1) -> FourierTaylor:
    """``f = 1 + amp cos(theta)`` as a constant-in-x forcing."""
    return FourierTaylor([(0, (0,), 1.0), (0, (1,), amp / 2), (0, (-1,), amp / 2)], d=1)


def standard_problem(epsilon: float = 1e-3, **kw) -> ProblemSpec:
    return ProblemSpec(l=kw.pop("l", 3), omega=[1.0], epsilon=epsilon, f=standard_forcing(), **kw)


def zero_average_problem(l: int, epsilon: float) -> ProblemSpec:
    """``f = cos(theta) + x``."""
    f = FourierTaylor([(0, (1,), 0.5), (0, (-1,), 0.5), (1, (0,), 1.0)], d=1)
    return ProblemSpec(l=l, omega=[1.0], epsilon=epsilon, f=f, mode="zero_average")


def cosine(amp: float, d: int = 1, K: int = 1) -> FourierSeries:
    return FourierSeries.from_modes({(1,) + (0,) * (d - 1): amp / 2, (-1,) + (0,) * (d - 1): amp / 2}, d=d, K=K, real=True)


def random_series(rng, d: int, K: int, n: int = 1, decay: float = 0.5, real: bool = False) -> FourierSeries:
    """Random coefficients decaying like ``exp(-decay |k|)``; optionally conjugate symmetric."""
    shape = (n,) + (2 * K + 1,) * d
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    ks = np.stack(np.meshgrid(*[np.arange(-K, K + 1)] * d, indexing="ij"))
    c *= np.exp(-decay * np.sqrt((ks**2).sum(axis=0)))
    if real:
        flipped = np.conj(c[(slice(None),) + (slice(None, None, -1),) * d])
        c = (c + flipped) / 2
    return FourierSeries(c, real=real)
