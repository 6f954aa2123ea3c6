import numpy as np
import pytest

from varopt_ais.model import GeometricPath, RbmParams


def random_rbm(n_visible, n_hidden, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return RbmParams(scale * rng.normal(size=(n_hidden, n_visible)),
                     scale * rng.normal(size=n_hidden),
                     scale * rng.normal(size=n_visible))


def random_path(n_visible, n_hidden, seed, scale=1.0, base_bias=True):
    target = random_rbm(n_visible, n_hidden, seed, scale)
    rng = np.random.default_rng(seed + 1000)
    bias = rng.normal(size=n_visible) if base_bias else None
    return GeometricPath.from_target(target, bias)


@pytest.fixture
def tiny_path():
    return random_path(3, 2, seed=7)


@pytest.fixture
def small_path():
    return random_path(6, 4, seed=11)


# Acceptance criteria append (label, passed, detail) here; the lines are
# printed in the terminal summary so they show without ``-s``.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: int(r[0][2:])):
        terminalreporter.write_line(f"{label} {'PASS' if ok else 'FAIL'}: {detail}")
