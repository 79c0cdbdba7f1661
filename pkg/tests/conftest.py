from pathlib import Path

import pytest


@pytest.fixture(scope="session", autouse=True)
def fresh_acceptance_report():
    """Start each session with an empty acceptance report file."""
    report = Path(__file__).with_name("acceptance_report.txt")
    report.unlink(missing_ok=True)
    yield
