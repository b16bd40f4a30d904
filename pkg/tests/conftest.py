import sys
from pathlib import Path

import pytest

from ptsne import kernels

sys.path.insert(0, str(Path(__file__).parent))

BACKENDS = kernels.available_backends()

# criterion id -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture(params=sorted(BACKENDS))
def backend(request):
    """Each available kernel implementation in turn."""
    return BACKENDS[request.param]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
