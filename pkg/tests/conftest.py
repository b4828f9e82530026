import sys
import warnings
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hermite_boltzmann.tensor import TensorCache  # noqa: E402


@pytest.fixture(scope="session")
def tensor_cache(tmp_path_factory):
    """One on-disk cache shared by the whole session."""
    return TensorCache(tmp_path_factory.mktemp("tensors"))


@pytest.fixture(autouse=True)
def _quiet_kw():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Krook-Wu solution is not positive")
        yield


ACCEPTANCE_LINES: list = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
