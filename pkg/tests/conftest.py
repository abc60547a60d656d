import logging

import pytest

# criterion id -> (status, detail), filled by tests/test_acceptance.py
ACCEPTANCE: dict[str, tuple[str, str]] = {}


@pytest.fixture(autouse=True)
def _quiet_sampling_warnings():
    # tiny graphs routinely run short of eligible negatives; that path has its own test
    logging.getLogger("tgnrec.training").setLevel(logging.ERROR)
    yield
    logging.getLogger("tgnrec.training").setLevel(logging.NOTSET)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{status:<4} {key}: {detail}")
