import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from attnlab.forward import AttentionParams, TaskInstance
from attnlab.gradcheck import random_instance

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance-suite verdict lines, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def toy_instance() -> tuple[AttentionParams, TaskInstance]:
    return random_instance(0, T=5, d_x=3, d_k=2, d_v=2, C=3, causal=False)


@pytest.fixture
def causal_instance() -> tuple[AttentionParams, TaskInstance]:
    return random_instance(1, T=9, d_x=4, d_k=3, d_v=3, C=4, causal=True)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
