import numpy as np
import pytest

from compound_bsde import _accel
from compound_bsde.payoffs import build_spec_plain_compound
from compound_bsde.sde import GbmModel

BACKENDS = ["numba", "numpy"] if _accel.HAVE_NUMBA else ["numpy"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    with _accel.use_backend(request.param):
        yield request.param


@pytest.fixture
def gbm1():
    return GbmModel.isotropic(1, 0.03, 0.0, 0.2, 14.0)


@pytest.fixture
def tiny_spec(gbm1):
    # call-on-call on a coarse grid; cheap enough for finite differences
    return build_spec_plain_compound("call", "call", 1.0, 14.0, 0.2, 0.4, gbm1, 6)


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


# acceptance criteria report one line each; collected here and echoed in the summary
ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> bool:
    line = f"{'PASS' if passed else 'FAIL'}  [{criterion}] {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
