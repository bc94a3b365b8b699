"""Shared fixtures and the acceptance-criteria report."""
from __future__ import annotations

import numpy as np
import pytest

from dtdcva.market_data import DiscountCurve, bootstrap_pd_curve
from dtdcva.synthetic import flat_quotes, make_name

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def flat_disc():
    return DiscountCurve.flat(0.03)


@pytest.fixture(scope="session")
def bbb_curve(flat_disc):
    return bootstrap_pd_curve(flat_quotes(180.0), flat_disc)


@pytest.fixture(scope="session")
def a_name(flat_disc):
    return make_name("A1", 80.0, flat_disc, rating="A")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
