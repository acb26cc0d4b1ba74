import os
import sys

import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def fig_state():
    return "00011100110"


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for crit, name, ok, detail in mod.RESULTS:
        line = f"{'PASS' if ok else 'FAIL'}  [{crit}] {name}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
