import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dbfga.model import ModelSpec

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def tiny_spec(**kw) -> ModelSpec:
    base = dict(
        input_size=(8, 8),
        backbone_a=(4, 4),
        backbone_b=(4, 4),
        fuse_channels=4,
        classes=3,
        reduction=2,
        spatial_kernel=3,
        gate_hidden=4,
    )
    base.update(kw)
    return ModelSpec(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
