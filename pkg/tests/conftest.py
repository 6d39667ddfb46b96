import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from guideseg.fixtures import write_fixture_set  # noqa: E402

# criterion number -> (passed, description, detail); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, desc, detail = ACCEPTANCE[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {desc}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixture_manifest(tmp_path_factory):
    """A 100-image noisy synthetic manifest, generated once per session."""
    out = tmp_path_factory.mktemp("fixtures100")
    return write_fixture_set(str(out), 100, seed=2024)


@pytest.fixture(scope="session")
def small_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixtures8")
    return write_fixture_set(str(out), 8, seed=5)
