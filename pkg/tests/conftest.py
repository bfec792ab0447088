import numpy as np
import pytest

from pinchar.acquisition import ArrayGeometry
from pinchar.transducer import ElementModel


@pytest.fixture(scope="session")
def element():
    return ElementModel.gaussian()


@pytest.fixture(scope="session")
def geom():
    return ArrayGeometry()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One summary line per acceptance criterion, printed after the run.
_CRITERIA: dict = {}


@pytest.fixture(scope="session")
def criterion():
    """Record a criterion outcome: ``criterion(n, passed, detail)``.

    A criterion checked by several tests passes only if every part passes.
    """

    def record(number: int, passed: bool, detail: str):
        ok, details = _CRITERIA.get(number, (True, []))
        _CRITERIA[number] = (ok and bool(passed), details + [detail])
        print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, details = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  " + "; ".join(details))
