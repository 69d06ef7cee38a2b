import pytest

from narrownet.affine import MaxMinString
from narrownet.kernels import compiled_available

ACCEPTANCE_LINES = []

BACKENDS = ["python"] + (["cython"] if compiled_available() else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def random_string(rng, L, d_in, d_out, scale=1.0):
    W = scale * rng.normal(size=(L, d_out, d_in))
    b = scale * rng.normal(size=(L, d_out))
    ops = rng.random(L - 1) < 0.5
    return MaxMinString(W, b, ops)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
